#include "langdaug/glm_theory.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace langdaug {

namespace {

void require_nonempty(const GlmVectorDataset& data, std::string_view what) {
    if (data.size() == 0) throw ConfigError(fmt::format("{}: empty dataset", what));
    if (data.y.size() != data.size()) throw DimensionError(fmt::format("{}: x and y row counts differ", what));
}

double mean_and_stderr(const Vector& per_draw, double& stderr_out) {
    const auto n = per_draw.size();
    const double mean = per_draw.mean();
    if (n < 2) {
        stderr_out = std::numeric_limits<double>::infinity();
        return mean;
    }
    const double var = (per_draw.array() - mean).square().sum() / static_cast<double>(n - 1);
    stderr_out = std::sqrt(var / static_cast<double>(n));
    return mean;
}

}  // namespace

std::string to_string(VarianceReduction vr) {
    switch (vr) {
        case VarianceReduction::none: return "none";
        case VarianceReduction::antithetic: return "antithetic";
        case VarianceReduction::taylor_cv: return "taylor_cv";
    }
    return "?";
}

VarianceReduction parse_variance_reduction(std::string_view name) {
    if (name == "none") return VarianceReduction::none;
    if (name == "antithetic") return VarianceReduction::antithetic;
    if (name == "taylor_cv") return VarianceReduction::taylor_cv;
    throw ConfigError(fmt::format("unknown variance reduction \"{}\" (expected none, antithetic, taylor_cv)", name));
}

double std_risk(const Vector& theta, const GlmVectorDataset& data, GlmFamily family) {
    require_nonempty(data, "std_risk");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i) sum += glm_nll(theta, data.x.row(i).transpose(), data.y[i], family);
    return sum / static_cast<double>(data.size());
}

McEstimate aug_risk_mc(const Vector& theta, const GlmVectorDataset& data, double beta, long n_mc, GlmFamily family,
                       const RngStream& rng, VarianceReduction vr) {
    require_nonempty(data, "aug_risk_mc");
    if (n_mc < 1) throw ConfigError("aug_risk_mc: n_mc must be >= 1");
    if (!(beta >= 0.0)) throw ConfigError("aug_risk_mc: beta must be >= 0");
    if (theta.size() != data.dim()) throw DimensionError("aug_risk_mc: theta length differs from data dimension");
    if (beta == 0.0) return {std_risk(theta, data, family), 0.0, n_mc};

    const Eigen::Index k = data.size();
    const Matrix scores = data.scores();
    Vector per_draw = Vector::Zero(n_mc);
    double offset = 0.0;
    if (vr == VarianceReduction::taylor_cv) offset = taylor2_mean(theta, data, beta, family);

    for (Eigen::Index i = 0; i < k; ++i) {
        const Vector xi = data.x.row(i).transpose();
        const Vector si = scores.row(i).transpose();
        const double yi = data.y[i];
        const double u0 = theta.dot(xi);
        const double c = theta.dot(si);
        const double l0 = glm_nll(theta, xi, yi, family);
        const double d1 = log_partition_d1(family, u0) - yi;
        const double d2 = log_partition_d2(family, u0);
        auto stream = rng.child("sample", i);
        for (long m = 0; m < n_mc; ++m) {
            const Vector eps = stream.normal_vector(data.dim());
            const double plus = glm_nll(theta, one_step_ld(xi, si, beta, eps), yi, family);
            double value = plus;
            if (vr != VarianceReduction::none) {
                const double minus = glm_nll(theta, one_step_ld(xi, si, beta, (-eps).eval()), yi, family);
                value = 0.5 * (plus + minus);
                if (vr == VarianceReduction::taylor_cv) {
                    // pair-averaged Taylor polynomial: the odd term cancels
                    const double a = theta.dot(eps);
                    value -= l0 + 0.5 * beta * beta * (d2 * a * a - d1 * c);
                }
            }
            per_draw[m] += value;
        }
    }
    per_draw /= static_cast<double>(k);
    per_draw.array() += offset;
    McEstimate out;
    out.draws = n_mc;
    out.estimate = mean_and_stderr(per_draw, out.stderr_);
    return out;
}

double taylor2_mean(const Vector& theta, const GlmVectorDataset& data, double beta, GlmFamily family) {
    require_nonempty(data, "taylor2_mean");
    // psi(b) = A(u(b)) - y u(b) with u(b) = theta^T x - (b^2/2) theta^T s + b theta^T eps.
    // u'(0) = theta^T eps, u''(0) = -theta^T s, so
    // psi''(0) = A''(u) (theta^T eps)^2 + (A'(u) - y) u''(0), and E (theta^T eps)^2 = |theta|^2.
    const Matrix scores = data.scores();
    const double theta_sq = theta.squaredNorm();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const double u = data.x.row(i).dot(theta);
        const double upp = -scores.row(i).dot(theta);
        const double psi0 = glm_nll(theta, data.x.row(i).transpose(), data.y[i], family);
        const double psi2 = log_partition_d2(family, u) * theta_sq + (log_partition_d1(family, u) - data.y[i]) * upp;
        sum += psi0 + 0.5 * beta * beta * psi2;
    }
    return sum / static_cast<double>(data.size());
}

RegTerms reg_terms_general(const Vector& theta, const GlmVectorDataset& data, double beta, GlmFamily family,
                           std::span<const double> responses) {
    require_nonempty(data, "reg_terms_general");
    if (!responses.empty() && static_cast<Eigen::Index>(responses.size()) != data.size()) {
        throw DimensionError("reg_terms_general: response count differs from dataset size");
    }
    const Matrix scores = data.scores();
    const Vector u = data.x * theta;
    const Vector c = scores * theta;
    const double theta_sq = theta.squaredNorm();
    const double scale = beta * beta / (2.0 * static_cast<double>(data.size()));
    RegTerms r;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const double y = responses.empty() ? data.y[i] : responses[static_cast<std::size_t>(i)];
        r.r1 -= (log_partition_d1(family, u[i]) - y) * c[i];
        r.r2 += log_partition_d2(family, u[i]) * theta_sq;
    }
    r.r1 *= scale;
    r.r2 *= scale;
    r.r3 = 0.0;
    return r;
}

double reg_glm(const Vector& theta, const GlmVectorDataset& data, double beta, GlmFamily family) {
    require_nonempty(data, "reg_glm");
    const Matrix scores = data.scores();
    const double theta_sq = theta.squaredNorm();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const double u = data.x.row(i).dot(theta);
        sum += log_partition_d2(family, u) * theta_sq - log_partition_d1(family, u) * scores.row(i).dot(theta);
    }
    return beta * beta / (2.0 * static_cast<double>(data.size())) * sum;
}

RegTerms reg_terms_feature(const FeatureModel& model, const Matrix& x, const Vector& y, const Matrix& scores, double beta,
                           GlmFamily family) {
    if (x.rows() == 0) throw ConfigError("reg_terms_feature: empty dataset");
    if (y.size() != x.rows() || scores.rows() != x.rows() || scores.cols() != x.cols()) {
        throw DimensionError("reg_terms_feature: shapes differ");
    }
    RegTerms r;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Vector xi = x.row(i).transpose();
        const double f = model.value(xi);
        const Vector g = model.gradient(xi);
        const double resid = log_partition_d1(family, f) - y[i];
        r.r1 -= resid * g.dot(scores.row(i).transpose());
        r.r2 += log_partition_d2(family, f) * g.squaredNorm();
        r.r3 += resid * model.laplacian(xi);
    }
    const double scale = beta * beta / (2.0 * static_cast<double>(x.rows()));
    r.r1 *= scale;
    r.r2 *= scale;
    r.r3 *= scale;
    return r;
}

std::string ScanResult::to_csv() const {
    std::string out = "beta,l_std,l_aug,mc_stderr,R1,R2,R3,R_glm,rem_gen,rem_glm\n";
    for (const auto& r : rows) {
        out += fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.beta,
                           r.l_std, r.l_aug, r.mc_stderr, r.terms.r1, r.terms.r2, r.terms.r3, r.r_glm,
                           r.remainder_general(), r.remainder_glm());
    }
    return out;
}

double log_log_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("log_log_slope: need >= 2 paired points");
    const auto n = static_cast<Eigen::Index>(x.size());
    Vector lx(n), ly(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto s = static_cast<std::size_t>(i);
        if (!(x[s] > 0.0) || y[s] == 0.0) throw NumericError("log_log_slope: non-positive abscissa or zero ordinate");
        lx[i] = std::log(x[s]);
        ly[i] = std::log(std::abs(y[s]));
    }
    const Vector cx = lx.array() - lx.mean();
    const Vector cy = ly.array() - ly.mean();
    return cx.dot(cy) / cx.squaredNorm();
}

ScanResult taylor_remainder_scan(const Vector& theta, const GlmVectorDataset& data, std::span<const double> betas,
                                 GlmFamily family, const ScanOptions& options) {
    if (betas.empty()) throw ConfigError("taylor_remainder_scan: no beta values");
    for (const double b : betas) {
        if (!(b > 0.0)) throw ConfigError(fmt::format("taylor_remainder_scan: beta must be positive (got {})", b));
    }
    if (options.n_mc < 2 || options.n_mc_max < options.n_mc) {
        throw ConfigError("taylor_remainder_scan: need 2 <= n_mc <= n_mc_max");
    }
    const auto rng = derive_stream(options.seed, {{"theory_scan", 0}});
    const double l_std = std_risk(theta, data, family);

    ScanResult result;
    result.conclusive = true;
    for (const double beta : betas) {
        ScanRow row;
        row.beta = beta;
        row.l_std = l_std;
        row.terms = reg_terms_general(theta, data, beta, family);
        row.r_glm = reg_glm(theta, data, beta, family);
        for (long n = options.n_mc;; n = std::min(n * 4, options.n_mc_max)) {
            const auto est = aug_risk_mc(theta, data, beta, n, family, rng, options.vr);
            row.l_aug = est.estimate;
            row.mc_stderr = est.stderr_;
            row.n_mc = n;
            row.resolved = est.stderr_ < options.resolve_ratio * std::abs(row.remainder_general());
            if (row.resolved || n == options.n_mc_max) break;
        }
        if (!row.resolved) result.conclusive = false;
        result.rows.push_back(row);
    }

    if (betas.size() >= 2) {
        std::vector<double> bs, rem, rem2;
        for (const auto& r : result.rows) {
            bs.push_back(r.beta);
            rem.push_back(r.remainder_general());
            rem2.push_back(r.remainder_doubled());
        }
        result.slope = log_log_slope(bs, rem);
        result.slope_doubled = log_log_slope(bs, rem2);
    }
    return result;
}

RadiusAndC radius_and_C(double gamma, double rho, double sigma) {
    if (!(gamma > 0.0) || !(rho > 0.0) || !(sigma > 0.0)) {
        throw ConfigError(fmt::format("radius_and_C: inputs must be positive (gamma={}, rho={}, sigma={})", gamma, rho, sigma));
    }
    const double a = gamma / rho;
    const double b = gamma / (rho * sigma);
    const double r_sq = std::max(a, std::sqrt(b));
    return {std::sqrt(r_sq), std::max(std::sqrt(a), std::pow(b, 0.25))};
}

McEstimate empirical_rademacher(const Matrix& x, double radius, long n_mc, const RngStream& rng) {
    if (!(radius >= 0.0)) throw ConfigError("empirical_rademacher: radius must be >= 0");
    if (n_mc < 1) throw ConfigError("empirical_rademacher: n_mc must be >= 1");
    if (x.rows() == 0) throw ConfigError("empirical_rademacher: empty dataset");
    const double k = static_cast<double>(x.rows());
    Vector per_draw(n_mc);
    auto stream = rng;
    Vector xi(x.rows());
    for (long m = 0; m < n_mc; ++m) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) xi[i] = stream.sign();
        per_draw[m] = radius / k * (x.transpose() * xi).norm();
    }
    McEstimate out;
    out.draws = n_mc;
    out.estimate = mean_and_stderr(per_draw, out.stderr_);
    if (n_mc == 1) out.stderr_ = 0.0;
    return out;
}

double class_constraint(const Vector& theta, const Matrix& x, const Matrix& scores, GlmFamily family) {
    if (x.rows() == 0) throw ConfigError("class_constraint: empty dataset");
    if (scores.rows() != x.rows() || scores.cols() != x.cols() || theta.size() != x.cols()) {
        throw DimensionError("class_constraint: shapes differ");
    }
    const Vector u = x * theta;
    const Vector c = scores * theta;
    const double theta_sq = theta.squaredNorm();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        sum += log_partition_d2(family, u[i]) * theta_sq - log_partition_d1(family, u[i]) * c[i];
    }
    return sum / static_cast<double>(x.rows());
}

RhoEstimate estimate_rho(const Matrix& x, GlmFamily family, const RhoOptions& options, const RngStream& rng,
                         const Matrix* scores) {
    if (x.rows() == 0) throw ConfigError("estimate_rho: empty dataset");
    if (options.probe_count < 1) throw ConfigError("estimate_rho: probe_count must be >= 1");
    if (!(options.kappa1 >= 0.0) || !(options.kappa2 > 0.0)) {
        throw ConfigError("estimate_rho: need kappa1 >= 0 and kappa2 > 0");
    }
    std::vector<double> radii = options.radii;
    if (radii.empty()) radii = {std::sqrt(options.kappa2), 2.0 * std::sqrt(options.kappa2)};
    for (const double r : radii) {
        if (!(r > 0.0)) throw ConfigError("estimate_rho: probe radii must be positive");
    }
    const bool in_span = options.basis.size() > 0;
    if (in_span && options.basis.rows() != x.cols()) throw DimensionError("estimate_rho: basis rows differ from data dimension");
    if (scores && (scores->rows() != x.rows() || scores->cols() != x.cols())) {
        throw DimensionError("estimate_rho: scores shape differs from data");
    }

    const double k = static_cast<double>(x.rows());
    const double ratio = options.kappa1 / options.kappa2;
    RhoEstimate out;
    out.raw_min = std::numeric_limits<double>::infinity();
    out.gamma_max = -std::numeric_limits<double>::infinity();
    auto stream = rng;
    for (long p = 0; p < options.probe_count; ++p) {
        const double radius = radii[static_cast<std::size_t>(p) % radii.size()];
        Vector theta = in_span ? Vector(options.basis * stream.normal_vector(options.basis.cols()))
                               : stream.normal_vector(x.cols());
        const double norm = theta.norm();
        if (norm == 0.0) {
            ++out.probes_skipped;
            continue;
        }
        theta *= radius / norm;
        const Vector u = x * theta;
        double e_a2 = 0.0, e_a1_sq = 0.0;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            e_a2 += log_partition_d2(family, u[i]);
            const double a1 = log_partition_d1(family, u[i]);
            e_a1_sq += a1 * a1;
        }
        e_a2 /= k;
        e_a1_sq /= k;
        const double denom = std::min(1.0, u.squaredNorm() / k);
        if (denom < 1e-12) {
            ++out.probes_skipped;
            continue;
        }
        ++out.probes_used;
        if (scores) out.gamma_max = std::max(out.gamma_max, class_constraint(theta, x, *scores, family));
        out.raw_min = std::min(out.raw_min, (e_a2 - ratio * std::sqrt(e_a1_sq)) / denom);
    }
    if (out.probes_used == 0) {
        warn("estimate_rho: every probe was skipped; reporting rho = 0");
        out.raw_min = 0.0;
    }
    if (!scores || out.probes_used == 0) out.gamma_max = 0.0;
    out.rho_hat = std::max(0.0, out.raw_min);
    return out;
}

Matrix data_span_basis(const Matrix& x, double threshold) {
    if (x.rows() == 0) throw ConfigError("data_span_basis: empty dataset");
    const Matrix m = x.transpose() * x / static_cast<double>(x.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
    if (eig.info() != Eigen::Success) throw LinearAlgebraError("data_span_basis: eigen-decomposition failed");
    std::vector<Eigen::Index> keep;
    // descending so the basis order is stable
    for (Eigen::Index i = eig.eigenvalues().size() - 1; i >= 0; --i) {
        if (eig.eigenvalues()[i] > threshold) keep.push_back(i);
    }
    Matrix out(x.cols(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = eig.eigenvectors().col(keep[j]);
    return out;
}

SpectrumSummary second_moment_spectrum(const Matrix& x, double threshold) {
    if (x.rows() == 0) throw ConfigError("second_moment_spectrum: empty dataset");
    const Matrix m = x.transpose() * x / static_cast<double>(x.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw LinearAlgebraError("second_moment_spectrum: eigen-decomposition failed");
    SpectrumSummary out;
    out.lowest_nonzero = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
        const double v = eig.eigenvalues()[i];
        if (v > threshold) {
            ++out.rank;
            out.lowest_nonzero = std::min(out.lowest_nonzero, v);
        }
    }
    if (out.rank == 0) out.lowest_nonzero = 0.0;
    return out;
}

double generalization_bound(double l_std, double c, double rank, double k, double lipschitz_loss, double lipschitz_a,
                            double bound_b, double delta) {
    if (!(c > 0.0) || !(rank > 0.0) || !(k > 0.0) || !(lipschitz_loss > 0.0) || !(lipschitz_a > 0.0) ||
        !(bound_b > 0.0)) {
        throw ConfigError("generalization_bound: C, rank, k, L, L_A and B must be positive");
    }
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("generalization_bound: delta must lie in (0, 1)");
    if (!std::isfinite(l_std)) throw ConfigError("generalization_bound: l_std must be finite");
    return l_std + 2.0 * lipschitz_loss * lipschitz_a * c * std::sqrt(rank / k) +
           bound_b * std::sqrt(std::log(1.0 / delta) / (2.0 * k));
}

}  // namespace langdaug
