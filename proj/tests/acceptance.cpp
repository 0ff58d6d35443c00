// Acceptance run: one PASS/FAIL line per criterion. Artifacts land in ./acceptance_out.

#include "gradient_check.hpp"
#include "langdaug/experiment_config.hpp"
#include "langdaug/pipeline.hpp"

#include <fmt/format.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

using namespace langdaug;
namespace fs = std::filesystem;

namespace {

const fs::path kOut = "acceptance_out";

struct Outcome {
    bool pass = false;
    std::string detail;
    std::string csv;  // compared byte for byte on rerun
};

void save(const std::string& name, const std::string& text) {
    fs::create_directories(kOut);
    std::ofstream(kOut / name, std::ios::binary) << text;
}

std::string g(double v) { return fmt::format("{:.17g}", v); }

// ---------------------------------------------------------------------------

Outcome gradient_fidelity() {
    const int configs = 100;
    std::vector<testing::GradCheck> checks;
    const std::vector<std::pair<std::string, EnergyArch>> archs{
        {"conv 16x16x1 b2", EnergyArch::conv_net(16, 16, 1, 2)},
        {"conv 8x8x3 b1", EnergyArch::conv_net(8, 8, 3, 1)},
        {"mlp", EnergyArch::mlp_net(16, 32)},
        {"quadratic", EnergyArch::quadratic_family(4)},
        {"linear", EnergyArch::linear_family(4)},
    };
    for (const auto& [name, arch] : archs) {
        const auto [gx, gt] = testing::check_energy(name, arch, configs, 1);
        checks.push_back(gx);
        checks.push_back(gt);
    }
    checks.push_back(testing::check_segmenter("segmenter 16x16x1", {16, 16, 1}, 8, configs, 2));

    Outcome o{true, "", "check,configs,worst_rel_err\n"};
    double worst = 0.0;
    for (const auto& c : checks) {
        o.csv += fmt::format("{},{},{:.3e}\n", c.name, c.configs, c.worst);
        worst = std::max(worst, c.worst);
        o.pass = o.pass && c.configs >= 100 && c.worst <= 1e-4;
    }
    o.detail = fmt::format("{} gradient checks x {} configs, worst relative error {:.2e}", checks.size(), configs, worst);
    save("gradients.csv", o.csv);
    return o;
}

Outcome langevin_stationarity() {
    const Vector mu = (Vector(2) << 1.0, -1.0).finished();
    const EnergyParams q{EnergyArch::quadratic_family(2), mu};
    const int chains = 64, steps = 20000, burn_in = 5000;
    const LangevinConfig ld{0.05, steps, 1, burn_in + 1, std::nullopt, false};

    std::vector<Vector> chain_mean(chains), chain_sq(chains);
    parallel_for(chains, 1, [&](std::size_t c) {
        const auto rec = run_chain(Vector::Zero(2), q, ld, derive_stream(2024, {{"stationarity_chain", static_cast<std::int64_t>(c)}}));
        Vector s = Vector::Zero(2), s2 = Vector::Zero(2);
        for (const auto& it : rec.stored) {
            s += it.x;
            s2 += it.x.cwiseProduct(it.x);
        }
        const double n = static_cast<double>(rec.stored.size());
        chain_mean[c] = s / n;
        chain_sq[c] = s2 / n;
    });

    Outcome o{true, "", "chain,mean_x1,mean_x2,second_x1,second_x2\n"};
    Vector pooled = Vector::Zero(2), pooled_sq = Vector::Zero(2);
    for (int c = 0; c < chains; ++c) {
        o.csv += fmt::format("{},{},{},{},{}\n", c, g(chain_mean[c][0]), g(chain_mean[c][1]), g(chain_sq[c][0]), g(chain_sq[c][1]));
        pooled += chain_mean[c] / chains;
        pooled_sq += chain_sq[c] / chains;
    }
    // chains are independent, so their means give an autocorrelation-free standard error
    Vector spread = Vector::Zero(2);
    for (int c = 0; c < chains; ++c) spread += (chain_mean[c] - pooled).cwiseAbs2();
    const Vector stderr_ = (spread / (chains - 1) / chains).cwiseSqrt();
    const Vector var = pooled_sq - pooled.cwiseAbs2();
    std::string parts;
    for (int j = 0; j < 2; ++j) {
        const double z = std::abs(pooled[j] - mu[j]) / stderr_[j];
        const double rel = std::abs(var[j] - 1.0);
        o.pass = o.pass && z <= 3.0 && rel <= 0.10;
        parts += fmt::format("{}x{}: mean {:.4f} ({:.2f} se), var {:.4f}", j ? "; " : "", j + 1, pooled[j], z, var[j]);
    }
    o.csv += fmt::format("pooled,{},{},{},{}\n", g(pooled[0]), g(pooled[1]), g(var[0]), g(var[1]));
    o.detail = parts;
    save("stationarity.csv", o.csv);
    return o;
}

Outcome cd_recovery() {
    Outcome o{true, "", "seed,theta\n"};
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        auto rng = derive_stream(seed, {{"cd_recovery_data", 0}});
        std::vector<Vector> src, tgt;
        for (int i = 0; i < 2000; ++i) src.push_back(Vector::Constant(1, rng.normal()));
        for (int i = 0; i < 2000; ++i) tgt.push_back(Vector::Constant(1, 3.0 + rng.normal()));
        CdConfig cfg;
        cfg.n_iters = 500;
        cfg.batch_size = 64;
        cfg.ld = {1.0, 40, 1, 40, std::nullopt, false};
        cfg.adam.lr = 0.05;
        cfg.base_seed = seed;
        const auto [params, trace] = train_ebm(src, tgt, EnergyArch::quadratic_family(1), cfg, {0, 1});
        const double theta = params.theta[0];
        o.pass = o.pass && std::abs(theta - 3.0) <= 0.1;
        o.csv += fmt::format("{},{}\n", seed, g(theta));
        save(fmt::format("cd_trace_seed{}.csv", seed), trace.to_csv());
        o.csv += trace.to_csv();
        detail += fmt::format("{}seed {}: theta {:.4f}", detail.empty() ? "" : "; ", seed, theta);
    }
    o.detail = detail;
    return o;
}

Outcome taylor_decomposition() {
    const auto config = parse_experiment_config({{"base_seed", 2024}});
    const auto& t = config.theory;
    const auto scan = taylor_remainder_scan(config.theory_theta(), config.theory_scan_data(), t.betas, t.family, t.scan);
    Outcome o;
    o.csv = scan.to_csv();
    save("theory_scan.csv", o.csv);
    o.pass = scan.conclusive && scan.slope > 2.0 && scan.slope_doubled <= 2.1;
    long max_mc = 0;
    for (const auto& r : scan.rows) max_mc = std::max(max_mc, r.n_mc);
    o.detail = fmt::format("slope {:.3f}, doubled-R slope {:.3f}, {} (max n_mc {})", scan.slope, scan.slope_doubled,
                           scan.status(), max_mc);
    return o;
}

Outcome glm_identity() {
    // literal form: responses replaced by A'(theta^T x); also the form the GLM regularizer actually has (responses dropped)
    double worst_mean = 0.0, worst_zero = 0.0;
    const GlmFamily fams[] = {GlmFamily::gaussian, GlmFamily::logistic, GlmFamily::poisson};
    for (int rep = 0; rep < 100; ++rep) {
        auto rng = derive_stream(77, {{"identity", rep}});
        const auto fam = fams[rep % 3];
        const auto d = static_cast<Eigen::Index>(1 + rng.uniform_index(6));
        const auto k = static_cast<Eigen::Index>(5 + rng.uniform_index(96));
        const Vector theta_star = 0.3 * rng.normal_vector(d);
        const auto data = generate_vector_glm(k, Vector::Zero(d), Matrix::Identity(d, d), theta_star, fam, rng.next_u64());
        const Vector theta = 0.5 * rng.normal_vector(d);
        const double beta = rng.uniform(0.01, 1.0);
        std::vector<double> mean_y;
        for (Eigen::Index i = 0; i < k; ++i) mean_y.push_back(log_partition_d1(fam, data.x.row(i).dot(theta)));
        const std::vector<double> zeros(static_cast<std::size_t>(k), 0.0);
        const double glm = reg_glm(theta, data, beta, fam);
        const double diff = std::abs(reg_terms_general(theta, data, beta, fam, mean_y).sum() - glm);
        worst_mean = std::max(worst_mean, diff);
        worst_zero = std::max(worst_zero, std::abs(reg_terms_general(theta, data, beta, fam, zeros).sum() - glm));
    }
    return {worst_mean <= 1e-12,
            fmt::format("y <- A'(theta^T x): worst |diff| {:.2e} (R1 vanishes, leaving (b^2/2k) sum A' theta^T s); "
                        "y <- 0: worst |diff| {:.2e}",
                        worst_mean, worst_zero),
            {}};
}

Outcome rademacher_bound() {
    const auto config = parse_experiment_config({{"base_seed", 2024}});
    const auto rows = rademacher_dimension_study(config.theory.rademacher);
    Outcome o;
    o.csv = rademacher_csv(rows);
    save("rademacher.csv", o.csv);
    double lo = 1e300, hi = 0.0, mean = 0.0;
    bool within = true;
    int positive = 0;
    std::string parts;
    for (const auto& r : rows) {
        within = within && r.within_bound();
        positive += r.rho_positive();
        lo = std::min(lo, r.estimate);
        hi = std::max(hi, r.estimate);
        mean += r.estimate / static_cast<double>(rows.size());
        parts += fmt::format("{}d={}: {:.3f} <= {:.3f}", parts.empty() ? "" : "; ", r.d, r.estimate, r.bound);
    }
    const double spread = (hi - lo) / mean;
    o.pass = within && positive > 0 && spread < 0.10;
    o.detail = fmt::format("{}; spread {:.2f}%, rho>0 in {}/{}", parts, 100 * spread, positive, rows.size());
    return o;
}

Outcome bound_coverage() {
    const auto config = parse_experiment_config({{"base_seed", 2024}});
    const auto rows = coverage_study(config.theory.coverage);
    Outcome o;
    o.csv = coverage_csv(rows);
    save("coverage.csv", o.csv);
    int covered = 0, vacuous = 0;
    double gap = 0.0, slack = 0.0;
    for (const auto& r : rows) {
        covered += r.covered();
        vacuous += r.vacuous();
        gap += r.gap() / static_cast<double>(rows.size());
        if (!r.vacuous()) slack += (r.bound - r.l_test) / static_cast<double>(rows.size());
    }
    o.pass = rows.size() == 100 && covered >= 95;
    o.detail = fmt::format("covered {}/{} ({} vacuous), mean gap {:.4f}, mean slack {:.3f}", covered, rows.size(),
                           vacuous, gap, slack);
    return o;
}

Outcome pipeline_bookkeeping() {
    auto config = parse_experiment_config({{"base_seed", 2024}, {"data", {{"train_fraction", 1.0}}}});
    const auto data = generate_benchmark(config.data);
    const int n_i = static_cast<int>(data.domains[0].train.size());
    const auto ld = config.augmentation_langevin();
    LangevinAugBuilder builder(config.energy_arch(), config.ebm.cd, ld, config.base_seed);

    Outcome o{true, "", "scope,source,target,step,count,image_checksum\n"};
    bool labels_ok = true, counts_ok = true, leak_free = true;
    const auto record = [&](const std::string& scope, const AugmentedDataset& aug) {
        std::map<std::tuple<int, int, int>, std::uint64_t> sums;
        for (const auto& e : aug.entries) {
            const auto& dom = data.domains[static_cast<std::size_t>(e.source)];
            labels_ok = labels_ok && e.mask.size() == dom.masks[e.origin_index].size() &&
                        (e.mask == dom.masks[e.origin_index]).all();
            auto& s = sums[{e.source, e.target, e.step}];
            s = s * 1099511628211ULL ^ checksum(e.image);
        }
        for (const auto& [key, count] : aug.counts()) {
            const auto& [s, t, step] = key;
            o.csv += fmt::format("{},{},{},{},{},{:016x}\n", scope, s, t, step, count, sums[key]);
        }
    };

    // every ordered pair of the four domains
    const std::vector<int> all{0, 1, 2, 3};
    const auto full = builder(data, all, 1);
    record("all", full);
    const std::size_t per_chain = ld.stored_count();
    counts_ok = per_chain == 13 && full.size() == static_cast<std::size_t>(12 * n_i * 13) && full.skipped_chains == 0;

    // each leave-one-out fold sees only its sources
    for (const int held : all) {
        std::vector<int> sources;
        for (int id : all)
            if (id != held) sources.push_back(id);
        const auto aug = builder(data, sources, 1);
        try {
            check_no_leakage(aug, held);
        } catch (const LeakageError&) {
            leak_free = false;
        }
        counts_ok = counts_ok && aug.size() == static_cast<std::size_t>(6 * n_i * 13);
        record(fmt::format("fold{}", held), aug);
    }
    save("bookkeeping.csv", o.csv);
    o.pass = labels_ok && counts_ok && leak_free;
    o.detail = fmt::format("{} iterates/chain, |D_aug| = {} (12*{}*13 = {}), labels {}, leakage {}", per_chain, full.size(),
                           n_i, 12 * n_i * 13, labels_ok ? "identical" : "MISMATCH", leak_free ? "none" : "FOUND");
    return o;
}

Outcome dg_gain() {
    const auto config = parse_experiment_config({{"base_seed", 7}});
    const auto data = generate_benchmark(config.data);
    LangevinAugBuilder builder(config.energy_arch(), config.ebm.cd, config.augmentation_langevin(), config.base_seed);
    LooOptions opts;
    opts.seg = config.segmenter.train;
    opts.seeds = config.segmenter.seeds;
    opts.threshold = config.segmenter.threshold;
    opts.base_seed = config.base_seed;
    const auto r = leave_one_out_eval(data, std::ref(builder), opts);
    Outcome o;
    o.csv = r.to_csv();
    save("loo.csv", o.csv);
    const double erm = r.mean_dice("erm"), aug = r.mean_dice("langdaug");
    o.pass = opts.seeds == 5 && r.folds.size() == 4 && aug - erm >= 0.02;
    std::string folds;
    for (const auto& f : r.folds) {
        double e = 0, a = 0;
        for (const auto& row : r.rows)
            if (row.fold == f.held_out) (row.method == "erm" ? e : a) += row.mean_dice / opts.seeds;
        folds += fmt::format(" f{} {:.3f}/{:.3f}", f.held_out, e, a);
    }
    o.detail = fmt::format("Dice ERM {:.4f}, +LangDAug {:.4f}, gain {:+.4f} over 4 folds x {} seeds;{}", erm, aug, aug - erm,
                           opts.seeds, folds);
    return o;
}

struct Criterion {
    int id;
    std::string name;
    double limit_s;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    set_warning_handler([](std::string_view) {});
    const std::vector<Criterion> criteria{
        {1, "gradient fidelity", 60, gradient_fidelity},
        {2, "Langevin stationarity", 120, langevin_stationarity},
        {3, "CD recovery", 120, cd_recovery},
        {4, "second-order decomposition", 300, taylor_decomposition},
        {5, "GLM regularizer identity", 10, glm_identity},
        {6, "Rademacher bound", 120, rademacher_bound},
        {7, "generalization bound coverage", 300, bound_coverage},
        {8, "pipeline bookkeeping", 300, pipeline_bookkeeping},
        {9, "directional DG gain", 1200, dg_gain},
    };

    int failures = 0;
    std::map<int, Outcome> outcomes;
    std::map<int, double> seconds;
    const auto timed = [](const std::function<Outcome()>& fn, double& secs) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, fmt::format("exception: {}", e.what()), {}};
        }
        secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return o;
    };
    const auto report = [&](int id, const std::string& name, const Outcome& o, double secs, double limit) {
        const bool ok = o.pass && secs <= limit;
        failures += !ok;
        std::cout << fmt::format("{} [{}] {}: {} ({:.1f}s, limit {:.0f}s)", ok ? "PASS" : "FAIL", id, name, o.detail, secs,
                                 limit)
                  << std::endl;
    };

    for (const auto& c : criteria) {
        double secs = 0;
        outcomes[c.id] = timed(c.run, secs);
        seconds[c.id] = secs;
        report(c.id, c.name, outcomes[c.id], secs, c.limit_s);
    }

    // rerun the stochastic experiments and compare their CSVs byte for byte
    Outcome det{true, "", {}};
    double rerun_secs = 0;
    std::string parts;
    for (const auto& c : criteria) {
        if (c.id != 2 && c.id != 3 && c.id != 4 && c.id != 8 && c.id != 9) continue;
        double secs = 0;
        const auto again = timed(c.run, secs);
        rerun_secs += secs;
        const bool same = !outcomes[c.id].csv.empty() && again.csv == outcomes[c.id].csv;
        det.pass = det.pass && same;
        parts += fmt::format("{}{} {}", parts.empty() ? "" : ", ", c.id, same ? "identical" : "DIFFERENT");
    }
    det.detail = fmt::format("reruns of 2,3,4,8,9: {}", parts);
    double original = 0;
    for (int id : {2, 3, 4, 8, 9}) original += seconds[id];
    report(10, "determinism", det, rerun_secs, 1.5 * original + 60);

    return failures == 0 ? 0 : 1;
}
