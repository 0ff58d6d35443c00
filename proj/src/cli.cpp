#include "langdaug/cli.hpp"

#include "langdaug/experiment_config.hpp"
#include "langdaug/pipeline.hpp"
#include "langdaug/projection.hpp"
#include "langdaug/tensor_io.hpp"

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>

#include <chrono>
#include <fstream>
#include <iostream>
#include <set>

namespace langdaug {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kDataStem = "data/benchmark";

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << text;
}

void require_artifact(const fs::path& path) {
    if (!fs::exists(path)) throw MissingArtifactError(fmt::format("missing upstream artifact {}", path.string()));
}

/// One subcommand's output directory: resolved config, input manifest and a timestamped log.
class Stage {
public:
    Stage(const fs::path& root, const std::string& name, const ExperimentConfig& config, const std::string& subcommand)
        : root_(root), dir_(root / name), subcommand_(subcommand) {
        fs::create_directories(dir_);
        write_json(dir_ / "config.resolved.json", to_json(config));
        log_.open(dir_ / "run.log", std::ios::app);
        log(fmt::format("{} started", subcommand));
    }

    const fs::path& dir() const { return dir_; }

    void log(const std::string& message) {
        const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
        log_ << fmt::format("{:%Y-%m-%dT%H:%M:%SZ} {}\n", now, message);
        log_.flush();
    }

    /// Record a file, or every file under a directory, as an input.
    void input(const fs::path& path) {
        require_artifact(path);
        if (fs::is_directory(path)) {
            for (const auto& e : fs::recursive_directory_iterator(path))
                if (e.is_regular_file() && e.path().filename() != "run.log") inputs_.insert(e.path());
        } else {
            inputs_.insert(path);
        }
    }

    void finish() {
        json in = json::object();
        for (const auto& p : inputs_) in[fs::relative(p, root_).generic_string()] = file_checksum(p);
        json out = json::object();
        std::vector<fs::path> produced;
        for (const auto& e : fs::recursive_directory_iterator(dir_)) {
            const auto name = e.path().filename();
            if (e.is_regular_file() && name != "run.log" && name != "manifest.json") produced.push_back(e.path());
        }
        std::sort(produced.begin(), produced.end());
        for (const auto& p : produced) out[fs::relative(p, dir_).generic_string()] = file_checksum(p);
        write_json(dir_ / "manifest.json", {{"subcommand", subcommand_}, {"inputs", in}, {"outputs", out}});
        log(fmt::format("{} finished", subcommand_));
    }

private:
    fs::path root_;
    fs::path dir_;
    std::string subcommand_;
    std::set<fs::path> inputs_;
    std::ofstream log_;
};

MultiDomainDataset read_benchmark(const fs::path& root, Stage& stage) {
    const fs::path stem = root / kDataStem;
    for (const char* suffix : {".ldtn", ".masks.ldtn", ".meta.json"}) {
        const fs::path p = stem.string() + suffix;
        require_artifact(p);
        stage.input(p);
    }
    return load_benchmark(stem);
}

LangevinAugBuilder make_builder(const ExperimentConfig& c) {
    return LangevinAugBuilder(c.energy_arch(), c.ebm.cd, c.augmentation_langevin(), c.base_seed);
}

LooOptions loo_options(const ExperimentConfig& c, int jobs) {
    LooOptions o;
    o.seg = c.segmenter.train;
    o.seeds = c.segmenter.seeds;
    o.folds = c.segmenter.folds;
    o.threshold = c.segmenter.threshold;
    o.base_seed = c.base_seed;
    o.jobs = jobs;
    return o;
}

std::vector<DomainSamples> training_samples(const MultiDomainDataset& data, const std::vector<int>& ids) {
    std::vector<DomainSamples> out;
    for (auto& s : source_domains(data, ids)) out.push_back({s.domain_id, std::move(s.images)});
    return out;
}

// ---------------------------------------------------------------------------

void cmd_gen_data(const ExperimentConfig& c, const fs::path& root) {
    Stage stage(root, "data", c, "gen-data");
    const auto data = generate_benchmark(c.data);
    save_dataset(data, root / kDataStem);
    stage.log(fmt::format("clamp fraction {:.6f}", data.clamp_fraction));
    stage.finish();
}

void cmd_train_ebms(const ExperimentConfig& c, const fs::path& root, int jobs) {
    Stage stage(root, "ebms", c, "train-ebms");
    const auto data = read_benchmark(root, stage);
    const auto domains = training_samples(data, c.ebm.domains);
    const auto models = train_all_pairs(domains, c.energy_arch(), c.ebm.cd, jobs);
    save_pair_models(models, stage.dir());
    stage.log(fmt::format("trained {} pairwise models", models.size()));
    stage.finish();
}

void cmd_augment(const ExperimentConfig& c, const fs::path& root, int jobs) {
    Stage stage(root, "augmented", c, "augment");
    const auto data = read_benchmark(root, stage);
    stage.input(root / "ebms");
    const auto ebms = load_pair_models(root / "ebms");
    std::set<int> ids;
    for (const auto& [pair, params] : ebms) ids.insert(pair.first), ids.insert(pair.second);
    const std::vector<int> id_list(ids.begin(), ids.end());
    const auto sources = source_domains(data, id_list);
    const auto aug = generate_augmented(sources, ebms, c.augmentation_langevin(), c.base_seed, jobs);
    save_augmented(aug, stage.dir());
    stage.log(fmt::format("{} augmented entries, {} chains skipped", aug.size(), aug.skipped_chains));
    stage.finish();
}

void cmd_train_seg(const ExperimentConfig& c, const fs::path& root, int jobs) {
    Stage stage(root, "seg", c, "train-seg");
    const auto data = read_benchmark(root, stage);
    stage.input(root / "augmented");
    const auto aug = load_augmented(root / "augmented");
    std::set<int> source_ids;
    for (const auto& [pair, sum] : aug.ebm_checksums) source_ids.insert(pair.first), source_ids.insert(pair.second);
    const std::vector<int> ids(source_ids.begin(), source_ids.end());

    LabeledImages source;
    for (const auto& s : source_domains(data, ids)) {
        source.images.insert(source.images.end(), s.images.begin(), s.images.end());
        source.masks.insert(source.masks.end(), s.masks.begin(), s.masks.end());
    }
    const auto augmented = labeled_from(aug);

    // unseen domains are evaluated in full, source domains on their test split
    struct EvalSet {
        int id;
        std::vector<Vector> images;
        std::vector<Mask> masks;
    };
    std::vector<EvalSet> evals;
    for (const auto& d : data.domains) {
        EvalSet e{d.spec.domain_id, {}, {}};
        if (source_ids.contains(e.id)) {
            for (auto i : d.test) e.images.push_back(d.images[i]), e.masks.push_back(d.masks[i]);
        } else {
            e.images = d.images;
            e.masks = d.masks;
        }
        if (!e.images.empty()) evals.push_back(std::move(e));
    }

    LooResult result;
    const int seeds = c.segmenter.seeds;
    std::vector<std::vector<LooRow>> per_run(static_cast<std::size_t>(2 * seeds));
    static const LabeledImages none;
    parallel_for(per_run.size(), jobs, [&](std::size_t r) {
        const int seed = static_cast<int>(r / 2);
        const bool use_aug = r % 2 == 1;
        SegTrainConfig cfg = c.segmenter.train;
        cfg.seed = segmenter_seed(c.base_seed, -1, seed);
        if (!use_aug) cfg.mix_ratio = 0.0;
        const auto model = train_segmenter(source, use_aug ? augmented : none, data.shape, cfg);
        for (const auto& e : evals) {
            const auto ev = evaluate_segmenter(model, e.images, e.masks, c.segmenter.threshold);
            per_run[r].push_back({e.id, use_aug ? "langdaug" : "erm", seed, ev.mean_dice, ev.mean_iou, ev.dice, ev.iou});
        }
    });
    for (auto& rows : per_run)
        for (auto& row : rows) result.rows.push_back(std::move(row));
    write_text(stage.dir() / "results.csv", result.to_csv());
    if (c.segmenter.per_sample) write_text(stage.dir() / "per_sample.csv", result.per_sample_csv());
    stage.finish();
}

json loo_summary(const LooResult& r) {
    json folds = json::array();
    for (const auto& f : r.folds) {
        folds.push_back({{"held_out", f.held_out},
                         {"sources", f.sources},
                         {"augmented_entries", f.augmented},
                         {"skipped_chains", f.skipped_chains}});
    }
    return {{"mean_dice_erm", r.mean_dice("erm")},
            {"mean_dice_langdaug", r.mean_dice("langdaug")},
            {"mean_iou_erm", r.mean_iou("erm")},
            {"mean_iou_langdaug", r.mean_iou("langdaug")},
            {"dice_gain", r.mean_dice("langdaug") - r.mean_dice("erm")},
            {"folds", folds}};
}

void cmd_eval_loo(const ExperimentConfig& c, const fs::path& root, int jobs) {
    Stage stage(root, "eval_loo", c, "eval-loo");
    const auto data = read_benchmark(root, stage);
    auto builder = make_builder(c);
    const auto result = leave_one_out_eval(data, std::ref(builder), loo_options(c, jobs));
    save_pair_models(builder.models(), stage.dir() / "ebms");
    write_text(stage.dir() / "results.csv", result.to_csv());
    if (c.segmenter.per_sample) write_text(stage.dir() / "per_sample.csv", result.per_sample_csv());
    write_json(stage.dir() / "summary.json", loo_summary(result));
    stage.log(fmt::format("dice erm {:.4f} langdaug {:.4f}", result.mean_dice("erm"), result.mean_dice("langdaug")));
    stage.finish();
}

void cmd_sweep(const ExperimentConfig& base, const fs::path& root, int jobs) {
    Stage stage(root, "sweep", base, "sweep");
    const auto data = read_benchmark(root, stage);
    const auto& axis = base.sweep.axis;
    std::string detail = "axis,value,fold,method,seed,mean_dice,mean_iou\n";
    std::string summary = "axis,value,erm_dice,langdaug_dice,delta_dice,erm_iou,langdaug_iou\n";
    std::optional<LangevinAugBuilder> shared;
    for (const double value : base.sweep.values) {
        ExperimentConfig c = base;
        const auto as_int = [&] {
            if (value != std::floor(value)) throw ConfigError(fmt::format("sweep.values: {} must be an integer for axis {}", value, axis));
            return static_cast<int>(value);
        };
        if (axis == "K") c.langevin.ld.n_steps = as_int();
        else if (axis == "beta") c.langevin.ld.step_size = value;
        else if (axis == "conv_blocks") c.ebm.conv_blocks = as_int();
        else c.augment.samples_per_chain = as_int();
        c.energy_arch().validate();
        c.augmentation_langevin().validate();

        // EBMs do not depend on augmentation-time settings, so those axes reuse them
        if (!shared || axis == "conv_blocks") shared.emplace(make_builder(c));
        LangevinAugBuilder builder = *shared;
        builder.set_langevin(c.augmentation_langevin());
        const auto r = leave_one_out_eval(data, std::ref(builder), loo_options(c, jobs));
        for (const auto& row : r.rows) {
            detail += fmt::format("{},{:g},{},{},{},{:.17g},{:.17g}\n", axis, value, row.fold, row.method, row.seed,
                                  row.mean_dice, row.mean_iou);
        }
        summary += fmt::format("{},{:g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", axis, value, r.mean_dice("erm"),
                               r.mean_dice("langdaug"), r.mean_dice("langdaug") - r.mean_dice("erm"), r.mean_iou("erm"),
                               r.mean_iou("langdaug"));
        stage.log(fmt::format("{}={:g} done", axis, value));
    }
    write_text(stage.dir() / "sweep.csv", summary);
    write_text(stage.dir() / "detail.csv", detail);
    stage.finish();
}

void cmd_project(const ExperimentConfig& c, const fs::path& root) {
    Stage stage(root, "project", c, "project");
    const auto data = read_benchmark(root, stage);
    stage.input(root / "augmented");
    const auto aug = load_augmented(root / "augmented");

    struct Tag {
        std::string kind;
        int source, target, step;
        std::size_t origin;
    };
    std::vector<Tag> tags;
    std::vector<const Vector*> rows;
    for (const auto& d : data.domains)
        for (std::size_t i = 0; i < d.images.size(); ++i) {
            tags.push_back({"source", d.spec.domain_id, -1, 0, i});
            rows.push_back(&d.images[i]);
        }
    for (const auto& e : aug.entries) {
        tags.push_back({"langevin", e.source, e.target, e.step, e.origin_index});
        rows.push_back(&e.image);
    }
    Matrix samples(static_cast<Eigen::Index>(rows.size()), data.shape.size());
    for (std::size_t r = 0; r < rows.size(); ++r) samples.row(static_cast<Eigen::Index>(r)) = rows[r]->transpose();
    const auto proj = pca_project(samples, 2);

    const auto coord = [&](Eigen::Index r, Eigen::Index j) { return j < proj.coords.cols() ? proj.coords(r, j) : 0.0; };
    std::string coords = "kind,source,target,step,origin,pc1,pc2\n";
    std::map<std::tuple<std::string, int, int, int>, std::pair<Eigen::Vector2d, int>> groups;
    for (std::size_t r = 0; r < tags.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(r);
        const auto& t = tags[r];
        coords += fmt::format("{},{},{},{},{},{:.17g},{:.17g}\n", t.kind, t.source, t.target, t.step, t.origin,
                              coord(i, 0), coord(i, 1));
        auto& g = groups[{t.kind, t.source, t.target, t.step}];
        if (g.second == 0) g.first.setZero();
        g.first += Eigen::Vector2d(coord(i, 0), coord(i, 1));
        ++g.second;
    }
    std::map<int, Eigen::Vector2d> domain_centroid;
    for (const auto& [key, g] : groups)
        if (std::get<0>(key) == "source") domain_centroid[std::get<1>(key)] = g.first / g.second;

    // Langevin centroids with their distances to the two domains they bridge
    std::string cents = "kind,source,target,step,count,pc1,pc2,dist_source,dist_target\n";
    for (const auto& [key, g] : groups) {
        const auto& [kind, s, t, step] = key;
        const Eigen::Vector2d m = g.first / g.second;
        const double ds = domain_centroid.contains(s) ? (m - domain_centroid[s]).norm() : 0.0;
        const double dt = domain_centroid.contains(t) ? (m - domain_centroid[t]).norm() : 0.0;
        cents += fmt::format("{},{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", kind, s, t, step, g.second, m[0], m[1], ds, dt);
    }
    write_text(stage.dir() / "coords.csv", coords);
    write_text(stage.dir() / "centroids.csv", cents);
    std::string var = "component,explained_variance\n";
    for (Eigen::Index j = 0; j < proj.explained_variance.size(); ++j)
        var += fmt::format("{},{:.17g}\n", j + 1, proj.explained_variance[j]);
    write_text(stage.dir() / "explained_variance.csv", var);
    stage.finish();
}

void cmd_verify_theory(const ExperimentConfig& c, const fs::path& root, int jobs) {
    Stage stage(root, "theory", c, "verify-theory");
    const auto& t = c.theory;
    const Vector theta = c.theory_theta();
    const auto scan_data = c.theory_scan_data();
    const auto scan = taylor_remainder_scan(theta, scan_data, t.betas, t.family, t.scan);
    write_text(stage.dir() / "scan.csv", scan.to_csv());
    stage.log(fmt::format("scan slope {:.4f} ({})", scan.slope, scan.status()));

    const auto rad = rademacher_dimension_study(t.rademacher);
    write_text(stage.dir() / "rademacher.csv", rademacher_csv(rad));

    json summary = {{"scan",
                     {{"family", to_string(t.family)},
                      {"slope", scan.slope},
                      {"slope_doubled_R", scan.slope_doubled},
                      {"status", scan.status()},
                      {"n_mc", [&] {
                           json a = json::array();
                           for (const auto& r : scan.rows) a.push_back(r.n_mc);
                           return a;
                       }()}}}};
    json rj = json::array();
    for (const auto& r : rad) {
        rj.push_back({{"d", r.d},
                      {"rank", r.rank},
                      {"sigma", r.sigma},
                      {"rho_hat", r.rho_hat},
                      {"gamma", r.gamma},
                      {"C", r.c},
                      {"estimate", r.estimate},
                      {"bound", r.rho_positive() ? json(r.bound) : json()},
                      {"within_bound", r.within_bound()}});
    }
    summary["rademacher"] = rj;

    if (t.run_coverage) {
        CoverageConfig cc = t.coverage;
        cc.jobs = jobs;
        const auto cov = coverage_study(cc);
        write_text(stage.dir() / "coverage.csv", coverage_csv(cov));
        int covered = 0, vacuous = 0;
        for (const auto& r : cov) covered += r.covered(), vacuous += r.vacuous();
        summary["coverage"] = {{"replicates", cov.size()}, {"covered", covered}, {"vacuous", vacuous}, {"delta", cc.delta}};
    }
    write_json(stage.dir() / "summary.json", summary);
    stage.finish();
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Langevin data augmentation experiments"};
    app.require_subcommand(1);
    std::string config_path;
    std::string out_dir;
    int jobs = 1;
    std::optional<std::uint64_t> seed;
    const std::vector<std::string> names{"gen-data", "train-ebms", "augment", "train-seg",
                                         "eval-loo", "verify-theory", "sweep", "project"};
    for (const auto& name : names) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON experiment config")->required();
        sub->add_option("--out", out_dir, "output root directory")->required();
        sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", seed, "override base_seed");
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();

    try {
        ExperimentConfig config = load_experiment_config(config_path);
        if (seed) config.apply_seed(*seed);
        const fs::path root(out_dir);
        fs::create_directories(root);
        if (cmd == "gen-data") cmd_gen_data(config, root);
        else if (cmd == "train-ebms") cmd_train_ebms(config, root, jobs);
        else if (cmd == "augment") cmd_augment(config, root, jobs);
        else if (cmd == "train-seg") cmd_train_seg(config, root, jobs);
        else if (cmd == "eval-loo") cmd_eval_loo(config, root, jobs);
        else if (cmd == "verify-theory") cmd_verify_theory(config, root, jobs);
        else if (cmd == "sweep") cmd_sweep(config, root, jobs);
        else cmd_project(config, root);
        return exit_ok;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const MissingArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << '\n';
        return exit_missing_artifact;
    } catch (const NumericError& e) {
        std::cerr << "numeric divergence: " << e.what() << '\n';
        return exit_divergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_failure;
    }
}

}  // namespace langdaug
