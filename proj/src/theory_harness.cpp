#include "langdaug/theory_harness.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace langdaug {

Vector fit_glm_erm(const GlmVectorDataset& data, GlmFamily family, double ridge, int max_iter) {
    if (data.size() == 0) throw ConfigError("fit_glm_erm: empty dataset");
    if (!(ridge > 0.0)) throw ConfigError("fit_glm_erm: ridge must be positive");
    const double k = static_cast<double>(data.size());
    Vector theta = Vector::Zero(data.dim());
    for (int it = 0; it < max_iter; ++it) {
        const Vector u = data.x * theta;
        Vector resid(u.size()), w(u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            resid[i] = log_partition_d1(family, u[i]) - data.y[i];
            w[i] = log_partition_d2(family, u[i]);
        }
        const Vector grad = data.x.transpose() * resid / k + ridge * theta;
        Matrix hess = data.x.transpose() * w.asDiagonal() * data.x / k;
        hess.diagonal().array() += ridge;
        const Vector step = hess.ldlt().solve(grad);
        if (!step.allFinite()) throw NumericError("fit_glm_erm: Newton step is not finite");
        theta -= step;
        if (step.norm() < 1e-12 * (1.0 + theta.norm())) break;
    }
    return theta;
}

LossConstants box_loss_constants(GlmFamily family, double u_max, double y_min, double y_max, int grid) {
    if (!(u_max > 0.0) || grid < 2 || y_max < y_min) throw ConfigError("box_loss_constants: bad box");
    LossConstants out;
    for (int g = 0; g < grid; ++g) {
        const double u = -u_max + 2.0 * u_max * g / (grid - 1);
        const double a1 = log_partition_d1(family, u);
        out.lipschitz_a = std::max(out.lipschitz_a, std::abs(a1));
        for (const double y : {y_min, y_max}) {
            // both quantities are convex/affine in y, so the extremes sit at the ends
            out.lipschitz_loss = std::max(out.lipschitz_loss, std::abs(a1 - y));
            out.bound_b = std::max(out.bound_b, std::abs(log_partition(family, u) - y * u));
        }
    }
    return out;
}

std::vector<RademacherRow> rademacher_dimension_study(const RademacherStudyConfig& config) {
    const Eigen::Index r = config.latent_variances.size();
    const double kappa1 = config.latent_variances.cwiseInverse().sum();
    std::vector<RademacherRow> rows;
    for (const auto d : config.dims) {
        if (d < r) throw ConfigError(fmt::format("rademacher study: ambient dimension {} below rank {}", d, r));
        auto embed_rng = derive_stream(config.seed, {{"embedding", d}});
        const Matrix u = random_orthonormal(d, r, embed_rng);
        const Vector theta_star = u * Vector::Ones(r);
        const auto data = generate_embedded_glm(config.k, config.latent_variances, u, theta_star, config.family, config.seed);
        const Matrix scores = data.scores();

        RhoOptions opts;
        opts.probe_count = config.probe_count;
        opts.radii = config.radii;
        opts.kappa1 = kappa1;
        opts.kappa2 = config.kappa2;
        opts.basis = data_span_basis(data.x);
        const auto rho = estimate_rho(data.x, config.family, opts, derive_stream(config.seed, {{"rho_probes", 0}}), &scores);
        const auto spec = second_moment_spectrum(data.x);

        RademacherRow row;
        row.d = d;
        row.k = config.k;
        row.rank = spec.rank;
        row.sigma = spec.lowest_nonzero;
        row.rho_hat = rho.rho_hat;
        row.gamma = rho.gamma_max;
        row.bound = std::numeric_limits<double>::quiet_NaN();
        if (row.rho_positive() && row.gamma > 0.0) {
            const auto rc = radius_and_C(row.gamma, row.rho_hat, row.sigma);
            row.radius = rc.radius;
            row.c = rc.c;
            const auto est = empirical_rademacher(data.x, rc.radius, config.n_mc,
                                                  derive_stream(config.seed, {{"rademacher_signs", 0}}));
            row.estimate = est.estimate;
            row.stderr_ = est.stderr_;
            row.bound = rc.c * std::sqrt(static_cast<double>(spec.rank) / static_cast<double>(config.k));
        }
        rows.push_back(row);
    }
    return rows;
}

std::string rademacher_csv(const std::vector<RademacherRow>& rows) {
    std::string out = "d,k,rank,sigma,rho_hat,gamma,radius,C,estimate,mc_stderr,bound\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.d, r.k, r.rank,
                           r.sigma, r.rho_hat, r.gamma, r.radius, r.c, r.estimate, r.stderr_, r.bound);
    }
    return out;
}

std::vector<CoverageRow> coverage_study(const CoverageConfig& config) {
    if (config.replicates < 1) throw ConfigError("coverage study: replicates must be >= 1");
    const Eigen::Index r = config.latent_variances.size();
    if (config.theta_latent.size() != r) throw DimensionError("coverage study: theta_latent length differs from rank");
    auto embed_rng = derive_stream(config.seed, {{"coverage_embedding", config.d}});
    const Matrix u = random_orthonormal(config.d, r, embed_rng);
    const Vector theta_star = u * config.theta_latent;
    const double kappa1 = config.latent_variances.cwiseInverse().sum();

    std::vector<CoverageRow> rows(static_cast<std::size_t>(config.replicates));
    parallel_for(rows.size(), config.jobs, [&](std::size_t t) {
        const auto rep = static_cast<std::int64_t>(t);
        const auto train_seed = derive_stream(config.seed, {{"coverage_train", rep}}).next_u64();
        const auto test_seed = derive_stream(config.seed, {{"coverage_test", rep}}).next_u64();
        const auto train = generate_embedded_glm(config.k, config.latent_variances, u, theta_star, config.family, train_seed);
        const auto test =
            generate_embedded_glm(config.test_size, config.latent_variances, u, theta_star, config.family, test_seed);
        const Vector theta = fit_glm_erm(train, config.family);

        CoverageRow row;
        row.replicate = static_cast<int>(t);
        row.l_std = std_risk(theta, train, config.family);
        row.l_test = std_risk(theta, test, config.family);
        const Matrix scores = train.scores();
        row.gamma = std::max(class_constraint(theta, train.x, scores, config.family), 1e-12);

        RhoOptions opts;
        opts.probe_count = config.probe_count;
        opts.radii = config.radii;
        opts.kappa1 = kappa1;
        opts.kappa2 = config.kappa2;
        opts.basis = data_span_basis(train.x);
        row.rho_hat = estimate_rho(train.x, config.family, opts, derive_stream(config.seed, {{"coverage_rho", rep}})).rho_hat;
        row.bound = std::numeric_limits<double>::infinity();
        if (row.rho_hat > 0.0) {
            const auto spec = second_moment_spectrum(train.x);
            const auto rc = radius_and_C(row.gamma, row.rho_hat, spec.lowest_nonzero);
            row.c = rc.c;
            const double x_max = std::max(train.x.rowwise().norm().maxCoeff(), test.x.rowwise().norm().maxCoeff());
            const double y_min = std::min(train.y.minCoeff(), test.y.minCoeff());
            const double y_max = std::max(train.y.maxCoeff(), test.y.maxCoeff());
            const auto box = box_loss_constants(config.family, rc.radius * x_max, y_min, y_max);
            row.lipschitz_loss = config.lipschitz_loss.value_or(box.lipschitz_loss);
            row.lipschitz_a = box.lipschitz_a;
            row.bound_b = config.bound_b.value_or(box.bound_b);
            row.bound = generalization_bound(row.l_std, rc.c, static_cast<double>(spec.rank),
                                             static_cast<double>(config.k), row.lipschitz_loss, row.lipschitz_a,
                                             row.bound_b, config.delta);
        }
        rows[t] = row;
    });
    return rows;
}

std::string coverage_csv(const std::vector<CoverageRow>& rows) {
    std::string out = "replicate,l_std,l_test,gap,gamma,rho_hat,C,L,L_A,B,bound,covered\n";
    for (const auto& r : rows) {
        out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n",
                           r.replicate, r.l_std, r.l_test, r.gap(), r.gamma, r.rho_hat, r.c, r.lipschitz_loss,
                           r.lipschitz_a, r.bound_b, r.bound, r.covered() ? 1 : 0);
    }
    return out;
}

}  // namespace langdaug
