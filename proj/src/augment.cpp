#include "langdaug/augment.hpp"

#include "langdaug/errors.hpp"
#include "langdaug/tensor_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <optional>

namespace langdaug {

std::map<std::tuple<int, int, int>, std::size_t> AugmentedDataset::counts() const {
    std::map<std::tuple<int, int, int>, std::size_t> out;
    for (const auto& e : entries) ++out[{e.source, e.target, e.step}];
    return out;
}

std::vector<SourceDomain> source_domains(const MultiDomainDataset& dataset, std::span<const int> domain_ids) {
    std::vector<SourceDomain> out;
    for (const auto& dom : dataset.domains) {
        const int id = dom.spec.domain_id;
        if (!domain_ids.empty() && std::find(domain_ids.begin(), domain_ids.end(), id) == domain_ids.end()) continue;
        SourceDomain s;
        s.domain_id = id;
        for (const auto idx : dom.train) {
            s.images.push_back(dom.images[idx]);
            s.masks.push_back(dom.masks[idx]);
            s.origin_index.push_back(idx);
        }
        out.push_back(std::move(s));
    }
    return out;
}

AugmentedDataset generate_augmented(std::span<const SourceDomain> domains,
                                    const std::map<DomainPair, EnergyParams>& ebms, const LangevinConfig& config,
                                    std::uint64_t base_seed, int jobs) {
    config.validate();
    struct Task {
        const SourceDomain* src;
        int target;
        std::size_t sample;
    };
    std::vector<Task> tasks;
    AugmentedDataset out;
    out.config = config;
    for (const auto& src : domains) {
        for (const auto& tgt : domains) {
            if (src.domain_id == tgt.domain_id) continue;
            const DomainPair pair{src.domain_id, tgt.domain_id};
            const auto it = ebms.find(pair);
            if (it == ebms.end()) {
                throw ConfigError(fmt::format("generate_augmented: no EBM for pair ({}, {})", pair.first, pair.second));
            }
            out.ebm_checksums[pair] = fmt::format("{:016x}", checksum(it->second.theta));
            if (it->second.arch.kind == EnergyKind::conv) {
                const auto& s = it->second.arch.input_shape;
                out.shape = {s[0], s[1], s[2]};
            }
            for (std::size_t n = 0; n < src.images.size(); ++n) tasks.push_back({&src, tgt.domain_id, n});
        }
    }

    std::vector<std::optional<ChainRecord>> records(tasks.size());
    parallel_for(tasks.size(), jobs, [&](std::size_t t) {
        const auto& task = tasks[t];
        const DomainPair pair{task.src->domain_id, task.target};
        const auto origin = static_cast<std::int64_t>(task.src->origin_index[task.sample]);
        auto rng = derive_stream(base_seed, {{"aug_source", pair.first}, {"aug_target", pair.second}, {"sample", origin}});
        try {
            records[t] = run_chain(task.src->images[task.sample], ebms.at(pair), config, rng, pair);
        } catch (const DivergenceError& e) {
            warn(fmt::format("augmentation chain ({}, {}) sample {} skipped: {}", pair.first, pair.second, origin, e.what()));
        }
    });

    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (!records[t]) {
            ++out.skipped_chains;
            continue;
        }
        const auto& task = tasks[t];
        for (auto& it : records[t]->stored) {
            out.entries.push_back({std::move(it.x), task.src->masks[task.sample], task.src->domain_id, task.target,
                                   it.step, task.src->origin_index[task.sample]});
        }
    }
    return out;
}

std::vector<StreamBatch> assemble_training_stream(std::size_t n_src, std::size_t n_aug, double mix_ratio,
                                                  int batch_size, std::uint64_t seed, int epoch) {
    if (!(mix_ratio >= 0.0 && mix_ratio <= 1.0)) throw ConfigError("mix_ratio must be in [0, 1]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (mix_ratio > 0.0 && n_aug == 0) throw ConfigError("mix_ratio > 0 but the augmented set is empty");

    const auto b = static_cast<std::size_t>(batch_size);
    const auto aug_per = static_cast<std::size_t>(std::lround(mix_ratio * static_cast<double>(b)));
    const std::size_t src_per = b - aug_per;

    auto rng = derive_stream(seed, {{"stream_epoch", epoch}});
    auto src_rng = rng.child("source", 0);
    const auto src_perm = random_permutation(n_src, src_rng);

    std::vector<std::size_t> aug_perm;
    std::size_t aug_pos = 0;
    std::int64_t aug_round = 0;
    auto next_aug = [&] {
        if (aug_pos == aug_perm.size()) {
            auto r = rng.child("augmented", aug_round++);
            aug_perm = random_permutation(n_aug, r);
            aug_pos = 0;
        }
        return aug_perm[aug_pos++];
    };

    std::vector<StreamBatch> batches;
    if (src_per == 0) {
        const std::size_t n_batches = (n_aug + b - 1) / b;
        for (std::size_t k = 0; k < n_batches; ++k) {
            StreamBatch batch;
            for (std::size_t i = 0; i < b; ++i) batch.push_back({true, next_aug()});
            batches.push_back(std::move(batch));
        }
    } else {
        for (std::size_t at = 0; at < n_src; at += src_per) {
            StreamBatch batch;
            for (std::size_t i = at; i < std::min(n_src, at + src_per); ++i) batch.push_back({false, src_perm[i]});
            for (std::size_t i = 0; i < aug_per; ++i) batch.push_back({true, next_aug()});
            // interleave so the first positions are not always source samples
            auto shuffle_rng = rng.child("batch", static_cast<std::int64_t>(batches.size()));
            const auto order = random_permutation(batch.size(), shuffle_rng);
            StreamBatch shuffled;
            for (auto o : order) shuffled.push_back(batch[o]);
            batches.push_back(std::move(shuffled));
        }
    }
    return batches;
}

void save_augmented(const AugmentedDataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::map<DomainPair, std::vector<const AugmentedEntry*>> by_pair;
    for (const auto& e : data.entries) by_pair[{e.source, e.target}].push_back(&e);
    // pairs with zero surviving entries still get (empty) files
    for (const auto& [pair, sum] : data.ebm_checksums) by_pair[pair];

    nlohmann::json pairs = nlohmann::json::array();
    const auto len = data.shape.size();
    const auto px = data.shape.pixels();
    for (const auto& [pair, list] : by_pair) {
        const auto n = static_cast<std::uint64_t>(list.size());
        Tensor images{{n, static_cast<std::uint64_t>(data.shape.height), static_cast<std::uint64_t>(data.shape.width),
                       static_cast<std::uint64_t>(data.shape.channels)},
                      Vector(static_cast<Eigen::Index>(n) * len),
                      Dtype::f64};
        Tensor masks{{n, static_cast<std::uint64_t>(data.shape.height), static_cast<std::uint64_t>(data.shape.width)},
                     Vector(static_cast<Eigen::Index>(n) * px),
                     Dtype::f32};
        Tensor tags{{n, 2}, Vector(static_cast<Eigen::Index>(n) * 2), Dtype::f64};
        std::map<int, std::size_t> per_step;
        for (std::size_t i = 0; i < list.size(); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            images.data.segment(k * len, len) = list[i]->image;
            masks.data.segment(k * px, px) = list[i]->mask.cast<double>().matrix();
            tags.data[2 * k] = list[i]->step;
            tags.data[2 * k + 1] = static_cast<double>(list[i]->origin_index);
            ++per_step[list[i]->step];
        }
        const auto stem = dir / fmt::format("aug_{}_{}", pair.first, pair.second);
        write_ldtn(stem.string() + ".ldtn", images);
        write_ldtn(stem.string() + ".masks.ldtn", masks);
        write_ldtn(stem.string() + ".tags.ldtn", tags);
        nlohmann::json steps = nlohmann::json::object();
        for (const auto& [k, c] : per_step) steps[std::to_string(k)] = c;
        const auto sum_it = data.ebm_checksums.find(pair);
        pairs.push_back({{"source", pair.first},
                         {"target", pair.second},
                         {"count", n},
                         {"counts_by_step", steps},
                         {"ebm_checksum", sum_it == data.ebm_checksums.end() ? "" : sum_it->second}});
    }
    const auto& c = data.config;
    write_json(dir / "manifest.meta.json",
               {{"format_version", 1},
                {"kind", "augmented_dataset"},
                {"image_shape", {data.shape.height, data.shape.width, data.shape.channels}},
                {"total", data.entries.size()},
                {"skipped_chains", data.skipped_chains},
                {"langevin",
                 {{"step_size", c.step_size},
                  {"n_steps", c.n_steps},
                  {"store_stride", c.store_stride},
                  {"store_offset", c.store_offset},
                  {"hook_channel", c.hook_channel ? nlohmann::json(*c.hook_channel) : nlohmann::json()},
                  {"clamp01", c.clamp01}}},
                {"pairs", pairs}});
}

AugmentedDataset load_augmented(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.meta.json";
    if (!std::filesystem::exists(manifest_path)) {
        throw MissingArtifactError(fmt::format("augmented manifest {} not found", manifest_path.string()));
    }
    const auto meta = read_json(manifest_path);
    if (meta.value("kind", "") != "augmented_dataset") throw FormatError("manifest is not an augmented dataset");
    AugmentedDataset out;
    const auto shape = meta.at("image_shape").get<std::vector<int>>();
    out.shape = {shape.at(0), shape.at(1), shape.at(2)};
    out.skipped_chains = meta.at("skipped_chains").get<std::size_t>();
    const auto& l = meta.at("langevin");
    out.config.step_size = l.at("step_size").get<double>();
    out.config.n_steps = l.at("n_steps").get<int>();
    out.config.store_stride = l.at("store_stride").get<int>();
    out.config.store_offset = l.at("store_offset").get<int>();
    if (!l.at("hook_channel").is_null()) out.config.hook_channel = l.at("hook_channel").get<int>();
    out.config.clamp01 = l.at("clamp01").get<bool>();

    const auto len = out.shape.size();
    const auto px = out.shape.pixels();
    for (const auto& p : meta.at("pairs")) {
        const DomainPair pair{p.at("source").get<int>(), p.at("target").get<int>()};
        out.ebm_checksums[pair] = p.at("ebm_checksum").get<std::string>();
        const auto stem = dir / fmt::format("aug_{}_{}", pair.first, pair.second);
        const auto images = read_ldtn(stem.string() + ".ldtn");
        const auto masks = read_ldtn(stem.string() + ".masks.ldtn");
        const auto tags = read_ldtn(stem.string() + ".tags.ldtn");
        const auto n = static_cast<Eigen::Index>(p.at("count").get<std::size_t>());
        if (images.data.size() != n * len || masks.data.size() != n * px || tags.data.size() != n * 2) {
            throw FormatError(fmt::format("{}: tensor sizes disagree with manifest", stem.string()));
        }
        for (Eigen::Index k = 0; k < n; ++k) {
            out.entries.push_back({images.data.segment(k * len, len),
                                   masks.data.segment(k * px, px).array().cast<std::uint8_t>(), pair.first,
                                   pair.second, static_cast<int>(tags.data[2 * k]),
                                   static_cast<std::size_t>(tags.data[2 * k + 1])});
        }
    }
    return out;
}

}  // namespace langdaug
