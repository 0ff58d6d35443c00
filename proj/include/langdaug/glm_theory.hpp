#pragma once

// Numerical checks of the regularization picture for one-step Langevin
// augmentation of GLMs: the second-order decomposition of the augmented risk,
// the GLM regularizer, the Rademacher bound of the constrained class and the
// resulting generalization bound.

#include "langdaug/errors.hpp"
#include "langdaug/glm_family.hpp"
#include "langdaug/numerics.hpp"
#include "langdaug/synth.hpp"

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace langdaug {

/// A(theta^T x) - y theta^T x. The base measure r(x) does not depend on theta and is dropped.
template <typename DerivedT, typename DerivedX>
typename DerivedT::Scalar glm_nll(const Eigen::MatrixBase<DerivedT>& theta, const Eigen::MatrixBase<DerivedX>& x,
                                  typename DerivedT::Scalar y, GlmFamily family) {
    if (theta.size() != x.size()) throw DimensionError("glm_nll: theta and x lengths differ");
    const auto u = theta.dot(x);
    if (family == GlmFamily::poisson && u > 30) throw NumericError("glm_nll: poisson natural parameter exceeds 30");
    return log_partition(family, u) - y * u;
}

/// x - (beta^2 / 2) * score + beta * noise
template <typename DerivedX, typename DerivedS, typename DerivedN>
typename DerivedX::PlainObject one_step_ld(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedS>& score,
                                           typename DerivedX::Scalar beta, const Eigen::MatrixBase<DerivedN>& noise) {
    if (x.size() != score.size() || x.size() != noise.size()) throw DimensionError("one_step_ld: shapes differ");
    using Scalar = typename DerivedX::Scalar;
    return x - (beta * beta / Scalar(2)) * score + beta * noise;
}

/// Mean GLM negative log-likelihood.
double std_risk(const Vector& theta, const GlmVectorDataset& data, GlmFamily family);
inline double std_risk(const Vector& theta, const GlmVectorDataset& data) { return std_risk(theta, data, data.family); }

struct McEstimate {
    double estimate = 0.0;
    double stderr_ = 0.0;
    long draws = 0;
};

enum class VarianceReduction {
    none,        // plain Monte Carlo over eps
    antithetic,  // pair eps with -eps
    taylor_cv,   // antithetic pairs minus the second-order Taylor polynomial in beta, whose mean is added back exactly
};

std::string to_string(VarianceReduction vr);
VarianceReduction parse_variance_reduction(std::string_view name);

/// Monte Carlo estimate of (1/k) sum_i E_eps[nll(theta, one_step_ld(x_i), y_i)].
/// Noise for (sample i, draw m) comes from rng.child("sample", i).child("draw", m),
/// so scans over beta share random numbers. stderr is over per-draw dataset means.
McEstimate aug_risk_mc(const Vector& theta, const GlmVectorDataset& data, double beta, long n_mc, GlmFamily family,
                       const RngStream& rng, VarianceReduction vr = VarianceReduction::none);

/// Exact mean of the per-draw second-order Taylor polynomial of nll(one_step_ld(x_i)) in beta,
/// obtained by differentiating the one-step map twice at beta = 0.
double taylor2_mean(const Vector& theta, const GlmVectorDataset& data, double beta, GlmFamily family);

struct RegTerms {
    double r1 = 0.0;
    double r2 = 0.0;
    double r3 = 0.0;

    double sum() const { return r1 + r2 + r3; }
};

/// Second-order terms with h = A and f(x) = theta^T x, each carrying beta^2 / 2.
/// `responses` overrides data.y when non-empty.
RegTerms reg_terms_general(const Vector& theta, const GlmVectorDataset& data, double beta, GlmFamily family,
                           std::span<const double> responses = {});

/// (beta^2 / 2k) sum_i (A''(u_i) theta^T theta - A'(u_i) theta^T s(x_i)).
double reg_glm(const Vector& theta, const GlmVectorDataset& data, double beta, GlmFamily family);

/// Prediction function f(x) with its input gradient and Laplacian, for losses h(f(x)) - y f(x).
struct FeatureModel {
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;
    std::function<double(const Vector&)> laplacian;
};

/// R1..R3 for a non-linear f with h = A:
/// R1 = -(b^2/2k) sum (A'(f) - y) grad f . s, R2 = (b^2/2k) sum A''(f) |grad f|^2,
/// R3 = (b^2/2k) sum (A'(f) - y) tr(hess f).
RegTerms reg_terms_feature(const FeatureModel& model, const Matrix& x, const Vector& y, const Matrix& scores, double beta,
                           GlmFamily family);

struct ScanRow {
    double beta = 0.0;
    double l_std = 0.0;
    double l_aug = 0.0;
    double mc_stderr = 0.0;
    RegTerms terms;
    double r_glm = 0.0;
    long n_mc = 0;
    bool resolved = false;  // stderr < 10% of |remainder|

    double remainder_general() const { return l_aug - l_std - terms.sum(); }
    double remainder_glm() const { return l_aug - l_std - r_glm; }
    /// Remainder when every R_i is doubled (regularizers scaled by beta^2 instead of beta^2 / 2).
    double remainder_doubled() const { return l_aug - l_std - 2.0 * terms.sum(); }
};

struct ScanOptions {
    long n_mc = 256;
    long n_mc_max = 1 << 16;
    VarianceReduction vr = VarianceReduction::taylor_cv;
    std::uint64_t seed = 0;
    double resolve_ratio = 0.1;
};

struct ScanResult {
    std::vector<ScanRow> rows;
    double slope = 0.0;          // least squares of log|remainder_general| on log beta
    double slope_doubled = 0.0;  // same with doubled R_i
    bool conclusive = false;     // every row resolved

    std::string status() const { return conclusive ? "conclusive" : "inconclusive"; }
    /// "beta,l_std,l_aug,mc_stderr,R1,R2,R3,R_glm,rem_gen,rem_glm"
    std::string to_csv() const;
};

/// Least-squares slope of log|y| against log x.
double log_log_slope(std::span<const double> x, std::span<const double> y);

/// Remainder scan over beta; n_mc is quadrupled per beta until stderr < resolve_ratio * |remainder|
/// or n_mc_max is reached (row left unresolved, scan reported inconclusive).
ScanResult taylor_remainder_scan(const Vector& theta, const GlmVectorDataset& data, std::span<const double> betas,
                                 GlmFamily family, const ScanOptions& options);

// ---------------------------------------------------------------------------
// Complexity bounds
// ---------------------------------------------------------------------------

struct RadiusAndC {
    double radius = 0.0;
    double c = 0.0;
};

/// r^2 = max(gamma/rho, sqrt(gamma/(rho sigma))), C = max((gamma/rho)^(1/2), (gamma/(rho sigma))^(1/4)).
RadiusAndC radius_and_C(double gamma, double rho, double sigma);

/// Monte Carlo over Rademacher signs of (radius / k) * |sum_i xi_i x_i|.
McEstimate empirical_rademacher(const Matrix& x, double radius, long n_mc, const RngStream& rng);

/// theta^T E_x[A''(theta^T x) theta - A'(theta^T x) s(x)] with empirical expectation.
double class_constraint(const Vector& theta, const Matrix& x, const Matrix& scores, GlmFamily family);

struct RhoOptions {
    long probe_count = 1000;
    std::vector<double> radii;  // probe sphere radii; default {sqrt(kappa2), 2 sqrt(kappa2)}
    double kappa1 = 1.0;        // bound on E|s(x)|^2
    double kappa2 = 1.0;        // lower bound on |theta|^2 over probes
    Matrix basis;               // d x r orthonormal; probes live in its span (whole space when empty)
};

struct RhoEstimate {
    double rho_hat = 0.0;  // clamped at 0
    double raw_min = 0.0;
    long probes_used = 0;
    long probes_skipped = 0;  // denominator below 1e-12
    double gamma_max = 0.0;   // largest class constraint over used probes (needs scores)
};

/// Probes are drawn uniformly on spheres of options.radii, cycling through the radii.
RhoEstimate estimate_rho(const Matrix& x, GlmFamily family, const RhoOptions& options, const RngStream& rng,
                         const Matrix* scores = nullptr);

/// Orthonormal basis of the span of the rows of x (eigenvalues of x^T x / k above threshold).
Matrix data_span_basis(const Matrix& x, double threshold = 1e-10);

/// Smallest singular value above `threshold` and the count of such values.
struct SpectrumSummary {
    double lowest_nonzero = 0.0;
    Eigen::Index rank = 0;
};
SpectrumSummary second_moment_spectrum(const Matrix& x, double threshold = 1e-10);

/// l_std + 2 L L_A C sqrt(rank / k) + B sqrt(ln(1/delta) / (2k)).
double generalization_bound(double l_std, double c, double rank, double k, double lipschitz_loss,
                            double lipschitz_a, double bound_b, double delta);

}  // namespace langdaug
