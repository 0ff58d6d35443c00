#include "langdaug/langevin.hpp"

#include "langdaug/tensor_io.hpp"

#include <fmt/format.h>

#include <cmath>

namespace langdaug {

void LangevinConfig::validate() const {
    if (!(step_size >= 0.0) || !std::isfinite(step_size)) throw ConfigError("langevin: step_size must be >= 0");
    if (n_steps < 0) throw ConfigError("langevin: n_steps must be >= 0");
    if (store_stride < 1) throw ConfigError("langevin: store_stride must be >= 1");
    if (store_offset < 1) throw ConfigError("langevin: store_offset must be >= 1");
}

std::vector<int> LangevinConfig::stored_steps() const {
    std::vector<int> steps;
    for (int s = store_offset; s <= n_steps; s += store_stride) steps.push_back(s);
    return steps;
}

Vector channel_replace_hook(const Vector& iterate, const Vector& original, int channel_index, int channels) {
    if (iterate.size() != original.size()) throw DimensionError("channel_replace_hook: shapes differ");
    if (channels < 1 || iterate.size() % channels != 0) {
        throw DimensionError("channel_replace_hook: length is not a multiple of the channel count");
    }
    if (channel_index < 0 || channel_index >= channels) {
        throw ConfigError(fmt::format("channel_replace_hook: channel {} out of range [0, {})", channel_index, channels));
    }
    if (channels == 1) warn("channel_replace_hook on a single-channel image replaces the whole image");
    Vector out = iterate;
    for (Eigen::Index i = channel_index; i < out.size(); i += channels) out[i] = original[i];
    return out;
}

namespace {

int hook_channels(const EnergyParams& params) {
    if (params.arch.kind != EnergyKind::conv) {
        throw ConfigError("channel replacement hook requires an image (conv) energy");
    }
    return params.arch.input_shape[2];
}

// One chain; `visit(step, x)` sees every post-step iterate.
template <typename Visit>
void iterate_chain(const Vector& x0, const EnergyParams& params, const LangevinConfig& config, RngStream& rng,
                   Visit&& visit) {
    config.validate();
    if (x0.size() != params.arch.input_size()) {
        throw DimensionError(fmt::format("run_chain: x0 length {} does not match arch input size {}", x0.size(),
                                         params.arch.input_size()));
    }
    const int channels = config.hook_channel ? hook_channels(params) : 1;
    if (config.hook_channel && channels == 1) {
        warn("channel replacement hook on a single-channel energy pins the chain to its origin");
    }
    Vector x = x0;
    double last_energy = 0.0;
    for (int t = 1; t <= config.n_steps; ++t) {
        const auto eval = energy_evaluate(params, x, true, false);
        last_energy = eval.energy;
        const Vector noise = rng.normal_vector(x.size());
        x = langevin_step(x, eval.grad_input, config.step_size, noise);
        if (config.hook_channel) {
            for (Eigen::Index i = *config.hook_channel; i < x.size(); i += channels) x[i] = x0[i];
        }
        if (!x.allFinite()) {
            throw DivergenceError(fmt::format("Langevin chain diverged at step {} (energy before step {})", t, last_energy),
                                  t, last_energy);
        }
        if (config.clamp01) x = x.cwiseMax(0.0).cwiseMin(1.0);
        visit(t, x);
    }
}

}  // namespace

ChainRecord run_chain(const Vector& x0, const EnergyParams& params, const LangevinConfig& config, RngStream rng,
                      DomainPair pair) {
    ChainRecord rec{x0, {}, pair, rng.labels()};
    const auto steps = config.stored_steps();
    std::size_t next = 0;
    iterate_chain(x0, params, config, rng, [&](int t, const Vector& x) {
        if (next < steps.size() && steps[next] == t) {
            rec.stored.push_back({t, x});
            ++next;
        }
    });
    return rec;
}

Vector run_chain_final(const Vector& x0, const EnergyParams& params, const LangevinConfig& config, RngStream rng) {
    Vector last = x0;
    iterate_chain(x0, params, config, rng, [&](int t, const Vector& x) {
        if (t == config.n_steps) last = x;
    });
    return last;
}

void save_chain_record(const ChainRecord& record, const LangevinConfig& config, const std::filesystem::path& base) {
    const auto n = static_cast<std::uint64_t>(record.stored.size());
    const auto len = record.x0.size();
    Tensor stack{{n, static_cast<std::uint64_t>(len)}, Vector(static_cast<Eigen::Index>(n) * len), Dtype::f64};
    std::vector<int> steps;
    for (std::size_t i = 0; i < record.stored.size(); ++i) {
        stack.data.segment(static_cast<Eigen::Index>(i) * len, len) = record.stored[i].x;
        steps.push_back(record.stored[i].step);
    }
    write_ldtn(base.string() + ".ldtn", stack);
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& l : record.rng_labels) labels.push_back({l.name, l.value});
    write_json(base.string() + ".meta.json",
               {{"format_version", 1},
                {"kind", "chain_record"},
                {"pair", {record.pair.first, record.pair.second}},
                {"steps", steps},
                {"config",
                 {{"step_size", config.step_size},
                  {"n_steps", config.n_steps},
                  {"store_stride", config.store_stride},
                  {"store_offset", config.store_offset},
                  {"hook_channel", config.hook_channel ? nlohmann::json(*config.hook_channel) : nlohmann::json()},
                  {"clamp01", config.clamp01}}},
                {"rng_labels", labels}});
}

}  // namespace langdaug
