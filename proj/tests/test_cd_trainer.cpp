#include <doctest.h>

#include "langdaug/cd_trainer.hpp"
#include "langdaug/errors.hpp"

#include <cmath>
#include <filesystem>

using namespace langdaug;

namespace {

std::vector<Vector> gaussian_samples(double mean, int n, std::uint64_t seed) {
    RngStream rng(seed, {{"samples", 0}});
    std::vector<Vector> out;
    for (int i = 0; i < n; ++i) out.push_back(Vector::Constant(1, mean + rng.normal()));
    return out;
}

double final_theta_average(const CdConfig& cfg, const std::vector<Vector>& src, const std::vector<Vector>& tgt,
                           int tail) {
    CdTrainer trainer(src, tgt, EnergyParams{EnergyArch::quadratic_family(1), Vector::Zero(1)}, cfg);
    double s = 0;
    for (int i = 0; i < cfg.n_iters; ++i) {
        trainer.step();
        if (i >= cfg.n_iters - tail) s += trainer.params().theta[0];
    }
    return s / tail;
}

}  // namespace

TEST_CASE("cd gradient of the quadratic family is the mean difference") {
    EnergyParams p{EnergyArch::quadratic_family(1), Vector::Constant(1, 0.7)};
    const std::vector<Vector> pos{Vector::Constant(1, 2.0), Vector::Constant(1, 4.0)};
    const std::vector<Vector> neg{Vector::Constant(1, 0.0), Vector::Constant(1, 1.0)};
    // d/dtheta of mean E(pos) - mean E(neg) with E = (x - theta)^2 / 2
    CHECK(cd_gradient(p, pos, neg)[0] == doctest::Approx(0.5 - 3.0));
}

TEST_CASE("short-run CD settles at the biased fixed point") {
    // with alpha = 0.1 and K = 40 the negative chain only travels a fraction of the way
    const auto src = gaussian_samples(0.0, 4000, 1);
    const auto tgt = gaussian_samples(3.0, 4000, 2);
    CdConfig cfg;
    cfg.n_iters = 1500;
    cfg.batch_size = 256;
    cfg.ld = {0.1, 40, 1, 40, std::nullopt, false};
    cfg.adam.lr = 0.1;
    const double fixed = 3.0 / (1.0 - std::pow(1.0 - 0.005, 40));
    CHECK(fixed == doctest::Approx(16.512560537176547));
    const double theta = final_theta_average(cfg, src, tgt, 300);
    CHECK(std::abs(theta - fixed) < 0.5);
}

TEST_CASE("with a unit step CD recovers the target mean") {
    const auto src = gaussian_samples(0.0, 2000, 3);
    const auto tgt = gaussian_samples(3.0, 2000, 4);
    CdConfig cfg;
    cfg.n_iters = 400;
    cfg.batch_size = 64;
    cfg.ld = {1.0, 40, 1, 40, std::nullopt, false};
    cfg.adam.lr = 0.05;
    CHECK(std::abs(final_theta_average(cfg, src, tgt, 100) - 3.0) < 0.1);
}

TEST_CASE("trace has one row per iteration and a fixed header") {
    const auto src = gaussian_samples(0.0, 50, 5);
    const auto tgt = gaussian_samples(1.0, 50, 6);
    CdConfig cfg;
    cfg.n_iters = 7;
    cfg.batch_size = 8;
    const auto [params, trace] = train_ebm(src, tgt, EnergyArch::quadratic_family(1), cfg, {0, 1});
    CHECK(trace.entries.size() == 7);
    const auto csv = trace.to_csv();
    CHECK(csv.rfind("iter,cd_surrogate,grad_norm\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
}

TEST_CASE("training is reproducible and pair-seeded") {
    const auto src = gaussian_samples(0.0, 50, 5);
    const auto tgt = gaussian_samples(1.0, 50, 6);
    CdConfig cfg;
    cfg.n_iters = 5;
    cfg.batch_size = 8;
    const auto arch = EnergyArch::mlp_net(1, 4);
    const auto a = train_ebm(src, tgt, arch, cfg, {0, 1}).first;
    const auto b = train_ebm(src, tgt, arch, cfg, {0, 1}).first;
    const auto c = train_ebm(src, tgt, arch, cfg, {1, 0}).first;
    CHECK(a.theta == b.theta);
    CHECK(a.theta != c.theta);
}

TEST_CASE("bad configs are rejected") {
    const auto src = gaussian_samples(0.0, 10, 5);
    CdConfig cfg;
    cfg.batch_size = 11;
    CHECK_THROWS_AS(train_ebm(src, src, EnergyArch::quadratic_family(1), cfg), ConfigError);
    cfg.batch_size = 4;
    cfg.grad_clip = -1.0;
    CHECK_THROWS_AS(train_ebm(src, src, EnergyArch::quadratic_family(1), cfg), ConfigError);
    cfg.grad_clip.reset();
    CHECK_THROWS_AS(train_ebm(src, src, EnergyArch::quadratic_family(1), cfg, {2, 2}), ConfigError);
}

TEST_CASE("gradient clipping bounds the applied step") {
    const auto src = gaussian_samples(0.0, 50, 5);
    const auto tgt = gaussian_samples(100.0, 50, 6);
    CdConfig cfg;
    cfg.n_iters = 1;
    cfg.batch_size = 8;
    cfg.grad_clip = 1e-3;
    cfg.adam = {0.1, 0.0, 0.0, 1e-8};
    CdTrainer t(src, tgt, EnergyParams{EnergyArch::linear_family(1), Vector::Zero(1)}, cfg);
    const auto r = t.step();
    CHECK(r.entry.grad_norm > 1.0);
    // Adam with zero momentum moves by lr regardless of scale; the clip must not change the sign
    CHECK(std::abs(t.params().theta[0]) == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("divergent chains surface as training errors") {
    const auto src = gaussian_samples(0.0, 20, 5);
    CdConfig cfg;
    cfg.n_iters = 1;
    cfg.batch_size = 4;
    cfg.ld = {1e200, 3, 1, 3, std::nullopt, false};
    CdTrainer t(src, src, EnergyParams{EnergyArch::quadratic_family(1), Vector::Zero(1)}, cfg);
    CHECK_THROWS_AS(t.step(), TrainingError);
}

TEST_CASE("pairwise models roundtrip and missing directories are reported") {
    std::vector<DomainSamples> domains;
    for (int d = 0; d < 3; ++d) domains.push_back({d, gaussian_samples(d, 20, 10 + d)});
    CdConfig cfg;
    cfg.n_iters = 3;
    cfg.batch_size = 4;
    const auto models = train_all_pairs(domains, EnergyArch::quadratic_family(1), cfg, 2);
    CHECK(models.size() == 6);
    const auto serial = train_all_pairs(domains, EnergyArch::quadratic_family(1), cfg, 1);
    for (const auto& [pair, m] : models) CHECK(m.params.theta == serial.at(pair).params.theta);

    const auto dir = std::filesystem::temp_directory_path() / "langdaug_test_cd" / "pairs";
    std::filesystem::remove_all(dir);
    save_pair_models(models, dir);
    const auto back = load_pair_models(dir);
    CHECK(back.size() == 6);
    CHECK(back.at({2, 0}).theta == models.at({2, 0}).params.theta);
    CHECK(std::filesystem::exists(dir / "trace_2_0.csv"));
    CHECK_THROWS_AS(load_pair_models(dir / "nope"), MissingArtifactError);
}
