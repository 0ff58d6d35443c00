#include "langdaug/experiment_config.hpp"

#include "langdaug/pipeline.hpp"
#include "langdaug/tensor_io.hpp"

#include <fmt/format.h>

#include <memory>
#include <set>

namespace langdaug {

using nlohmann::json;

namespace {

class Section {
public:
    Section(const json& doc, std::string path, std::shared_ptr<std::vector<std::string>> unknown = nullptr)
        : doc_(doc), path_(std::move(path)), unknown_(unknown ? std::move(unknown) : std::make_shared<std::vector<std::string>>()) {
        if (!doc_.is_object()) throw ConfigError(fmt::format("{} must be a JSON object", path_));
    }
    Section(Section&&) = default;
    Section(const Section&) = delete;
    Section& operator=(const Section&) = delete;
    Section& operator=(Section&&) = delete;

    // unknown keys are collected here and raised by finish() on the top-level section
    ~Section() {
        if (unknown_) collect();
    }

    void finish() {
        collect();
        used_.clear();
        for (const auto& [key, value] : doc_.items()) used_.insert(key);
        if (!unknown_->empty()) throw ConfigError(fmt::format("unknown key \"{}\"", unknown_->front()));
    }

    std::optional<Section> child(const std::string& key) {
        const json* v = find(key);
        if (!v) return std::nullopt;
        return Section(*v, where(key), unknown_);
    }

    void integer(const std::string& key, int& out) {
        if (const json* v = find(key)) out = as_int(*v, where(key));
    }
    void integer(const std::string& key, long& out) {
        if (const json* v = find(key)) out = as_int(*v, where(key));
    }
    void index(const std::string& key, Eigen::Index& out) {
        if (const json* v = find(key)) out = as_int(*v, where(key));
    }
    void optional_integer(const std::string& key, std::optional<int>& out) {
        used_.insert(key);
        const auto it = doc_.find(key);
        if (it == doc_.end()) return;
        out = it->is_null() ? std::nullopt : std::optional<int>(static_cast<int>(as_int(*it, where(key))));
    }
    void seed(const std::string& key, std::uint64_t& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
                throw ConfigError(fmt::format("{} must be a non-negative integer", where(key)));
            }
            out = v->get<std::uint64_t>();
        }
    }
    void number(const std::string& key, double& out) {
        if (const json* v = find(key)) out = as_double(*v, where(key));
    }
    void optional_number(const std::string& key, std::optional<double>& out) {
        used_.insert(key);
        const auto it = doc_.find(key);
        if (it == doc_.end()) return;
        out = it->is_null() ? std::nullopt : std::optional<double>(as_double(*it, where(key)));
    }
    void boolean(const std::string& key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) throw ConfigError(fmt::format("{} must be true or false", where(key)));
            out = v->get<bool>();
        }
    }
    void string(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) throw ConfigError(fmt::format("{} must be a string", where(key)));
            out = v->get<std::string>();
        }
    }
    template <typename T>
    void list(const std::string& key, std::vector<T>& out) {
        if (const json* v = find(key)) {
            if (!v->is_array()) throw ConfigError(fmt::format("{} must be an array", where(key)));
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                const auto path = fmt::format("{}[{}]", where(key), i);
                if constexpr (std::is_floating_point_v<T>) {
                    out.push_back(as_double((*v)[i], path));
                } else {
                    out.push_back(static_cast<T>(as_int((*v)[i], path)));
                }
            }
        }
    }
    void vector(const std::string& key, Vector& out) {
        std::vector<double> tmp;
        if (!doc_.contains(key)) {
            used_.insert(key);
            return;
        }
        list(key, tmp);
        out = Eigen::Map<const Vector>(tmp.data(), static_cast<Eigen::Index>(tmp.size()));
    }
    const json* raw(const std::string& key) { return find(key); }
    const std::shared_ptr<std::vector<std::string>>& sink() const { return unknown_; }
    std::string where(const std::string& key) const { return path_ + "." + key; }

private:
    const json* find(const std::string& key) {
        used_.insert(key);
        const auto it = doc_.find(key);
        if (it == doc_.end()) return nullptr;
        if (it->is_null()) throw ConfigError(fmt::format("{} must not be null", where(key)));
        return &*it;
    }
    static long as_int(const json& v, const std::string& path) {
        if (!v.is_number_integer()) throw ConfigError(fmt::format("{} must be an integer", path));
        return v.get<long>();
    }
    static double as_double(const json& v, const std::string& path) {
        if (!v.is_number()) throw ConfigError(fmt::format("{} must be a number", path));
        return v.get<double>();
    }

    void collect() {
        for (const auto& [key, value] : doc_.items())
            if (!used_.contains(key)) unknown_->push_back(where(key)), used_.insert(key);
    }

    const json& doc_;
    std::string path_;
    std::set<std::string> used_;
    std::shared_ptr<std::vector<std::string>> unknown_;
};

template <typename Enum, typename Parse>
void enum_field(Section& s, const std::string& key, Enum& out, Parse parse) {
    std::string name;
    s.string(key, name);
    if (!name.empty()) {
        try {
            out = parse(name);
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("{}: {}", s.where(key), e.what()));
        }
    }
}

void read_adam(Section& s, AdamHyper& adam) {
    s.number("lr", adam.lr);
    s.number("beta1", adam.beta1);
    s.number("beta2", adam.beta2);
    s.number("eps", adam.eps_stab);
}

json adam_json(const AdamHyper& a) { return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps_stab}}; }

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

void validate(const ExperimentConfig& c) {
    const auto& d = c.data;
    require(d.n_domains >= 2, "data.n_domains must be >= 2");
    require(d.n_per_domain >= 1, "data.n_per_domain must be >= 1");
    require(d.image_size >= 8, "data.image_size must be >= 8");
    require(d.channels >= 1, "data.channels must be >= 1");
    require(d.train_fraction > 0.0 && d.train_fraction <= 1.0, "data.train_fraction must lie in (0, 1]");
    require(static_cast<int>(d.specs.size()) == d.n_domains,
            fmt::format("data.specs has {} entries but data.n_domains is {}", d.specs.size(), d.n_domains));
    for (const auto& s : d.specs) validate(s, d.image_size);

    c.energy_arch().validate();
    c.ebm.cd.validate();
    c.langevin.ld.validate();
    require(c.langevin.hook == "auto" || c.langevin.hook == "on" || c.langevin.hook == "off",
            "langevin.hook must be \"auto\", \"on\" or \"off\"");
    require(c.augment.mix_ratio >= 0.0 && c.augment.mix_ratio <= 1.0, "augment.mix_ratio must lie in [0, 1]");
    if (c.augment.samples_per_chain) (void)stride_for_samples(c.langevin.ld.n_steps, *c.augment.samples_per_chain);

    const auto& s = c.segmenter;
    require(s.train.epochs >= 0, "segmenter.epochs must be >= 0");
    require(s.train.batch_size >= 1, "segmenter.batch_size must be >= 1");
    require(s.train.width >= 1, "segmenter.width must be >= 1");
    require(s.train.adam.lr > 0.0, "segmenter.lr must be positive");
    require(s.seeds >= 1, "segmenter.seeds must be >= 1");
    require(s.threshold >= 0.0 && s.threshold <= 1.0, "segmenter.threshold must lie in [0, 1]");

    const auto& t = c.theory;
    require(t.d >= 1 && t.k >= 1, "theory.d and theory.k must be >= 1");
    require(!t.betas.empty(), "theory.betas must not be empty");
    for (const double b : t.betas) require(b > 0.0, fmt::format("theory.betas: beta must be positive (got {})", b));
    require(t.theta.empty() || static_cast<int>(t.theta.size()) == t.d, "theory.theta must have theory.d entries");
    require(t.scan.n_mc >= 2 && t.scan.n_mc_max >= t.scan.n_mc, "theory needs 2 <= n_mc <= n_mc_max");

    const auto& w = c.sweep;
    require(w.axis == "K" || w.axis == "beta" || w.axis == "conv_blocks" || w.axis == "samples_per_chain",
            "sweep.axis must be one of K, beta, conv_blocks, samples_per_chain");
    require(!w.values.empty(), "sweep.values must not be empty");
}

}  // namespace

EnergyArch ExperimentConfig::energy_arch() const {
    EnergyArch arch;
    switch (ebm.kind) {
        case EnergyKind::conv:
            arch = EnergyArch::conv_net(data.image_size, data.image_size, data.channels, ebm.conv_blocks);
            arch.base_channels = ebm.base_channels;
            break;
        case EnergyKind::mlp:
            arch = EnergyArch::mlp_net(data.image_size * data.image_size * data.channels, ebm.hidden_width);
            break;
        case EnergyKind::quadratic:
            arch = EnergyArch::quadratic_family(data.image_size * data.image_size * data.channels);
            break;
        case EnergyKind::linear: arch = EnergyArch::linear_family(data.image_size * data.image_size * data.channels); break;
    }
    return arch;
}

LangevinConfig ExperimentConfig::augmentation_langevin() const {
    LangevinConfig ld = langevin.ld;
    if (langevin.hook == "on" || (langevin.hook == "auto" && data.channels > 1)) ld.hook_channel = langevin.hook_channel;
    else ld.hook_channel.reset();
    if (augment.samples_per_chain) {
        const auto [offset, stride] = stride_for_samples(ld.n_steps, *augment.samples_per_chain);
        ld.store_offset = offset;
        ld.store_stride = stride;
    }
    return ld;
}

Vector ExperimentConfig::theory_theta() const {
    if (!theory.theta.empty()) return Eigen::Map<const Vector>(theory.theta.data(), theory.d);
    Vector theta = Vector::Zero(theory.d);
    theta[0] = 1.0;
    if (theory.d > 1) theta[1] = -0.5;
    return theta;
}

GlmVectorDataset ExperimentConfig::theory_scan_data() const {
    const auto seed = derive_stream(base_seed, {{"theory_data", 0}}).next_u64();
    return generate_vector_glm(theory.k, Vector::Zero(theory.d), Matrix::Identity(theory.d, theory.d), theory_theta(),
                               theory.family, seed);
}

void ExperimentConfig::apply_seed(std::uint64_t seed) {
    base_seed = seed;
    data.seed = seed;
    ebm.cd.base_seed = seed;
    theory.scan.seed = seed;
    theory.rademacher.seed = seed;
    theory.coverage.seed = seed;
}

ExperimentConfig parse_experiment_config(const json& doc) {
    ExperimentConfig c;
    Section top(doc, "config");
    if (!doc.contains("base_seed")) throw ConfigError("config.base_seed is mandatory");
    top.seed("base_seed", c.base_seed);

    if (auto s = top.child("data")) {
        s->integer("n_domains", c.data.n_domains);
        s->integer("n_per_domain", c.data.n_per_domain);
        s->integer("image_size", c.data.image_size);
        s->integer("channels", c.data.channels);
        s->number("train_fraction", c.data.train_fraction);
        if (const json* specs = s->raw("specs")) {
            if (!specs->is_array()) throw ConfigError("config.data.specs must be an array");
            c.data.specs.clear();
            for (std::size_t i = 0; i < specs->size(); ++i) {
                Section e((*specs)[i], fmt::format("config.data.specs[{}]", i), top.sink());
                DomainSpec spec;
                spec.domain_id = static_cast<int>(i);
                e.number("gamma", spec.gamma);
                e.number("contrast", spec.contrast);
                e.number("texture_freq", spec.texture_freq);
                e.number("texture_amp", spec.texture_amp);
                e.number("noise_sigma", spec.noise_sigma);
                c.data.specs.push_back(spec);
            }
        } else {
            const auto defaults = default_domain_specs();
            if (c.data.n_domains > static_cast<int>(defaults.size())) {
                throw ConfigError(fmt::format("config.data.specs required for more than {} domains", defaults.size()));
            }
            c.data.specs.assign(defaults.begin(), defaults.begin() + c.data.n_domains);
        }
    } else {
        c.data.specs = default_domain_specs();
    }

    if (auto s = top.child("ebm")) {
        enum_field(*s, "kind", c.ebm.kind, parse_energy_kind);
        s->integer("conv_blocks", c.ebm.conv_blocks);
        s->integer("base_channels", c.ebm.base_channels);
        s->integer("hidden_width", c.ebm.hidden_width);
        s->integer("n_iters", c.ebm.cd.n_iters);
        s->integer("batch_size", c.ebm.cd.batch_size);
        s->number("step_size", c.ebm.cd.ld.step_size);
        s->integer("n_steps", c.ebm.cd.ld.n_steps);
        s->boolean("clamp01", c.ebm.cd.ld.clamp01);
        if (auto a = s->child("adam")) read_adam(*a, c.ebm.cd.adam);
        s->optional_number("grad_clip", c.ebm.cd.grad_clip);
        s->integer("checkpoint_every", c.ebm.cd.checkpoint_every);
        s->list("domains", c.ebm.domains);
    }
    // negatives only need the final iterate
    c.ebm.cd.ld.store_offset = c.ebm.cd.ld.n_steps > 0 ? c.ebm.cd.ld.n_steps : 1;
    c.ebm.cd.ld.store_stride = 1;

    if (auto s = top.child("langevin")) {
        s->number("step_size", c.langevin.ld.step_size);
        s->integer("n_steps", c.langevin.ld.n_steps);
        s->integer("store_stride", c.langevin.ld.store_stride);
        s->integer("store_offset", c.langevin.ld.store_offset);
        s->string("hook", c.langevin.hook);
        s->integer("hook_channel", c.langevin.hook_channel);
        s->boolean("clamp01", c.langevin.ld.clamp01);
    }

    if (auto s = top.child("augment")) {
        s->number("mix_ratio", c.augment.mix_ratio);
        s->optional_integer("samples_per_chain", c.augment.samples_per_chain);
    }
    c.segmenter.train.mix_ratio = c.augment.mix_ratio;

    if (auto s = top.child("segmenter")) {
        s->integer("epochs", c.segmenter.train.epochs);
        s->integer("batch_size", c.segmenter.train.batch_size);
        s->integer("width", c.segmenter.train.width);
        if (auto a = s->child("adam")) read_adam(*a, c.segmenter.train.adam);
        s->integer("seeds", c.segmenter.seeds);
        s->number("threshold", c.segmenter.threshold);
        s->boolean("per_sample", c.segmenter.per_sample);
        s->list("folds", c.segmenter.folds);
    }

    if (auto s = top.child("theory")) {
        auto& t = c.theory;
        enum_field(*s, "family", t.family, parse_glm_family);
        s->integer("d", t.d);
        s->integer("k", t.k);
        s->list("betas", t.betas);
        s->list("theta", t.theta);
        s->integer("n_mc", t.scan.n_mc);
        s->integer("n_mc_max", t.scan.n_mc_max);
        enum_field(*s, "variance_reduction", t.scan.vr, parse_variance_reduction);
        s->number("resolve_ratio", t.scan.resolve_ratio);
        if (auto r = s->child("rademacher")) {
            auto& rc = t.rademacher;
            r->list("dims", rc.dims);
            r->index("k", rc.k);
            r->vector("latent_variances", rc.latent_variances);
            enum_field(*r, "family", rc.family, parse_glm_family);
            r->integer("probes", rc.probe_count);
            r->list("radii", rc.radii);
            r->number("kappa2", rc.kappa2);
            r->integer("n_mc", rc.n_mc);
        }
        if (auto r = s->child("coverage")) {
            auto& cc = t.coverage;
            r->boolean("enabled", t.run_coverage);
            r->integer("replicates", cc.replicates);
            r->index("k", cc.k);
            r->index("d", cc.d);
            r->index("test_size", cc.test_size);
            r->vector("latent_variances", cc.latent_variances);
            r->vector("theta_latent", cc.theta_latent);
            enum_field(*r, "family", cc.family, parse_glm_family);
            r->number("delta", cc.delta);
            r->integer("probes", cc.probe_count);
            r->list("radii", cc.radii);
            r->number("kappa2", cc.kappa2);
            r->optional_number("L", cc.lipschitz_loss);
            r->optional_number("B", cc.bound_b);
        }
    }

    if (auto s = top.child("sweep")) {
        s->string("axis", c.sweep.axis);
        s->list("values", c.sweep.values);
    }

    c.apply_seed(c.base_seed);
    top.finish();
    validate(c);
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError(fmt::format("config file {} not found", path.string()));
    json doc;
    try {
        doc = read_json(path);
    } catch (const std::exception& e) {
        throw ConfigError(fmt::format("config file {}: {}", path.string(), e.what()));
    }
    return parse_experiment_config(doc);
}

json to_json(const ExperimentConfig& c) {
    json specs = json::array();
    for (const auto& s : c.data.specs) {
        specs.push_back({{"gamma", s.gamma},
                         {"contrast", s.contrast},
                         {"texture_freq", s.texture_freq},
                         {"texture_amp", s.texture_amp},
                         {"noise_sigma", s.noise_sigma}});
    }
    const auto& t = c.theory;
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    auto opt = [](const auto& o) { return o ? json(*o) : json(); };
    return {
        {"base_seed", c.base_seed},
        {"data",
         {{"n_domains", c.data.n_domains},
          {"n_per_domain", c.data.n_per_domain},
          {"image_size", c.data.image_size},
          {"channels", c.data.channels},
          {"train_fraction", c.data.train_fraction},
          {"specs", specs}}},
        {"ebm",
         {{"kind", to_string(c.ebm.kind)},
          {"conv_blocks", c.ebm.conv_blocks},
          {"base_channels", c.ebm.base_channels},
          {"hidden_width", c.ebm.hidden_width},
          {"n_iters", c.ebm.cd.n_iters},
          {"batch_size", c.ebm.cd.batch_size},
          {"step_size", c.ebm.cd.ld.step_size},
          {"n_steps", c.ebm.cd.ld.n_steps},
          {"clamp01", c.ebm.cd.ld.clamp01},
          {"adam", adam_json(c.ebm.cd.adam)},
          {"grad_clip", opt(c.ebm.cd.grad_clip)},
          {"checkpoint_every", c.ebm.cd.checkpoint_every},
          {"domains", c.ebm.domains}}},
        {"langevin",
         {{"step_size", c.langevin.ld.step_size},
          {"n_steps", c.langevin.ld.n_steps},
          {"store_stride", c.langevin.ld.store_stride},
          {"store_offset", c.langevin.ld.store_offset},
          {"hook", c.langevin.hook},
          {"hook_channel", c.langevin.hook_channel},
          {"clamp01", c.langevin.ld.clamp01}}},
        {"augment", {{"mix_ratio", c.augment.mix_ratio}, {"samples_per_chain", opt(c.augment.samples_per_chain)}}},
        {"segmenter",
         {{"epochs", c.segmenter.train.epochs},
          {"batch_size", c.segmenter.train.batch_size},
          {"width", c.segmenter.train.width},
          {"adam", adam_json(c.segmenter.train.adam)},
          {"seeds", c.segmenter.seeds},
          {"threshold", c.segmenter.threshold},
          {"per_sample", c.segmenter.per_sample},
          {"folds", c.segmenter.folds}}},
        {"theory",
         {{"family", to_string(t.family)},
          {"d", t.d},
          {"k", t.k},
          {"betas", t.betas},
          {"theta", t.theta},
          {"n_mc", t.scan.n_mc},
          {"n_mc_max", t.scan.n_mc_max},
          {"variance_reduction", to_string(t.scan.vr)},
          {"resolve_ratio", t.scan.resolve_ratio},
          {"rademacher",
           {{"dims", t.rademacher.dims},
            {"k", t.rademacher.k},
            {"latent_variances", vec(t.rademacher.latent_variances)},
            {"family", to_string(t.rademacher.family)},
            {"probes", t.rademacher.probe_count},
            {"radii", t.rademacher.radii},
            {"kappa2", t.rademacher.kappa2},
            {"n_mc", t.rademacher.n_mc}}},
          {"coverage",
           {{"enabled", t.run_coverage},
            {"replicates", t.coverage.replicates},
            {"k", t.coverage.k},
            {"d", t.coverage.d},
            {"test_size", t.coverage.test_size},
            {"latent_variances", vec(t.coverage.latent_variances)},
            {"theta_latent", vec(t.coverage.theta_latent)},
            {"family", to_string(t.coverage.family)},
            {"delta", t.coverage.delta},
            {"probes", t.coverage.probe_count},
            {"radii", t.coverage.radii},
            {"kappa2", t.coverage.kappa2},
            {"L", opt(t.coverage.lipschitz_loss)},
            {"B", opt(t.coverage.bound_b)}}}}},
        {"sweep", {{"axis", c.sweep.axis}, {"values", c.sweep.values}}},
    };
}

}  // namespace langdaug
