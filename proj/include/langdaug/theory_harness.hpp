#pragma once

// Studies built on the GLM theory primitives: the rank-vs-ambient Rademacher
// check and the replicate coverage check of the generalization bound.

#include "langdaug/glm_theory.hpp"

#include <optional>
#include <string>
#include <vector>

namespace langdaug {

/// Newton iterations on the mean NLL plus ridge/2 |theta|^2.
Vector fit_glm_erm(const GlmVectorDataset& data, GlmFamily family, double ridge = 1e-6, int max_iter = 100);

/// Loss constants over the box |u| <= u_max and observed responses y in [y_min, y_max].
struct LossConstants {
    double lipschitz_loss = 0.0;  // sup |A'(u) - y|
    double lipschitz_a = 0.0;     // sup |A'(u)|
    double bound_b = 0.0;         // sup |A(u) - y u|
};
LossConstants box_loss_constants(GlmFamily family, double u_max, double y_min, double y_max, int grid = 4001);

struct RademacherStudyConfig {
    std::vector<Eigen::Index> dims{2, 20, 200};
    Eigen::Index k = 200;
    Vector latent_variances = (Vector(2) << 1.0, 0.5).finished();
    GlmFamily family = GlmFamily::gaussian;
    long probe_count = 1000;
    std::vector<double> radii{8.0, 12.0};
    double kappa2 = 64.0;
    long n_mc = 2000;
    std::uint64_t seed = 0;
};

struct RademacherRow {
    Eigen::Index d = 0;
    Eigen::Index k = 0;
    Eigen::Index rank = 0;
    double sigma = 0.0;
    double rho_hat = 0.0;
    double gamma = 0.0;
    double radius = 0.0;
    double c = 0.0;
    double estimate = 0.0;
    double stderr_ = 0.0;
    double bound = 0.0;  // C sqrt(rank / k); NaN when rho_hat = 0

    bool rho_positive() const { return rho_hat > 0.0; }
    bool within_bound() const { return !rho_positive() || estimate <= bound; }
};

/// Same latent sample embedded in each ambient dimension by a random orthonormal map.
std::vector<RademacherRow> rademacher_dimension_study(const RademacherStudyConfig& config);
std::string rademacher_csv(const std::vector<RademacherRow>& rows);

struct CoverageConfig {
    int replicates = 100;
    Eigen::Index k = 200;
    Eigen::Index d = 20;
    Eigen::Index test_size = 20000;
    Vector latent_variances = (Vector(2) << 1.0, 0.5).finished();
    Vector theta_latent = (Vector(2) << 1.5, -1.0).finished();
    GlmFamily family = GlmFamily::logistic;
    double delta = 0.05;
    long probe_count = 500;
    std::vector<double> radii{10.0, 14.0};
    double kappa2 = 100.0;
    std::optional<double> lipschitz_loss;  // computed on the working box when unset
    std::optional<double> bound_b;
    std::uint64_t seed = 0;
    int jobs = 1;
};

struct CoverageRow {
    int replicate = 0;
    double l_std = 0.0;
    double l_test = 0.0;
    double gamma = 0.0;
    double rho_hat = 0.0;
    double c = 0.0;
    double lipschitz_loss = 0.0;
    double lipschitz_a = 0.0;
    double bound_b = 0.0;
    double bound = 0.0;  // infinite when rho_hat = 0

    double gap() const { return l_test - l_std; }
    bool covered() const { return l_test <= bound; }
    bool vacuous() const { return !std::isfinite(bound); }
};

std::vector<CoverageRow> coverage_study(const CoverageConfig& config);
std::string coverage_csv(const std::vector<CoverageRow>& rows);

}  // namespace langdaug
