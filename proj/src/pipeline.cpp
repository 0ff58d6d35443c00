#include "langdaug/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <optional>

namespace langdaug {

std::pair<int, int> stride_for_samples(int n_steps, int samples) {
    if (samples < 1) throw ConfigError("samples per chain must be >= 1");
    if (samples > n_steps) {
        throw ConfigError(fmt::format("cannot store {} samples from a {}-step chain", samples, n_steps));
    }
    const int stride = n_steps / samples;
    int offset = stride;
    if ((n_steps - offset) / stride + 1 > samples) offset = n_steps - (samples - 1) * stride;
    return {offset, stride};
}

LangevinAugBuilder::LangevinAugBuilder(EnergyArch arch, CdConfig cd, LangevinConfig ld, std::uint64_t base_seed)
    : arch_(std::move(arch)), cd_(std::move(cd)), ld_(ld), base_seed_(base_seed), shared_(std::make_shared<Shared>()) {
    arch_.validate();
    cd_.validate();
    ld_.validate();
}

std::map<DomainPair, PairModel> LangevinAugBuilder::models() const {
    std::lock_guard lock(shared_->mutex);
    return shared_->models;
}

AugmentedDataset LangevinAugBuilder::operator()(const MultiDomainDataset& data, std::span<const int> source_ids,
                                                 int jobs) {
    const auto sources = source_domains(data, source_ids);
    std::vector<DomainPair> missing;
    {
        std::lock_guard lock(shared_->mutex);
        for (const auto& a : sources)
            for (const auto& b : sources)
                if (a.domain_id != b.domain_id && !shared_->models.contains({a.domain_id, b.domain_id}))
                    missing.emplace_back(a.domain_id, b.domain_id);
    }
    auto find = [&](int id) -> const SourceDomain& {
        return *std::find_if(sources.begin(), sources.end(), [&](const auto& s) { return s.domain_id == id; });
    };

    std::vector<std::optional<PairModel>> trained(missing.size());
    parallel_for(missing.size(), jobs, [&](std::size_t w) {
        const auto pair = missing[w];
        CdConfig cd = cd_;
        cd.base_seed = base_seed_;
        try {
            auto [params, trace] = train_ebm(find(pair.first).images, find(pair.second).images, arch_, cd, pair);
            trained[w] = PairModel{std::move(params), std::move(trace)};
        } catch (const TrainingError& e) {
            throw TrainingError(fmt::format("pair ({}, {}): {}", pair.first, pair.second, e.what()), e.iteration());
        }
    });

    std::map<DomainPair, EnergyParams> ebms;
    {
        std::lock_guard lock(shared_->mutex);
        for (std::size_t w = 0; w < missing.size(); ++w) shared_->models.emplace(missing[w], std::move(*trained[w]));
        for (const auto& a : sources)
            for (const auto& b : sources)
                if (a.domain_id != b.domain_id) ebms.emplace(DomainPair{a.domain_id, b.domain_id}, shared_->models.at({a.domain_id, b.domain_id}).params);
    }
    return generate_augmented(sources, ebms, ld_, base_seed_, jobs);
}

void check_no_leakage(const AugmentedDataset& aug, int held_out) {
    for (const auto& e : aug.entries) {
        if (e.source == held_out || e.target == held_out) {
            throw LeakageError(fmt::format("augmented entry ({}, {}) step {} touches held-out domain {}", e.source,
                                           e.target, e.step, held_out));
        }
    }
    for (const auto& [pair, sum] : aug.ebm_checksums) {
        if (pair.first == held_out || pair.second == held_out) {
            throw LeakageError(fmt::format("augmentation used the EBM of pair ({}, {}) with held-out domain {}",
                                           pair.first, pair.second, held_out));
        }
    }
}

double LooResult::mean_dice(std::string_view method) const {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rows)
        if (r.method == method) sum += r.mean_dice, ++n;
    return n ? sum / n : 0.0;
}

double LooResult::mean_iou(std::string_view method) const {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rows)
        if (r.method == method) sum += r.mean_iou, ++n;
    return n ? sum / n : 0.0;
}

std::string LooResult::to_csv() const {
    std::string out = "fold,method,seed,mean_dice,mean_iou\n";
    for (const auto& r : rows) out += fmt::format("{},{},{},{:.17g},{:.17g}\n", r.fold, r.method, r.seed, r.mean_dice, r.mean_iou);
    return out;
}

std::string LooResult::per_sample_csv() const {
    std::string out = "fold,method,seed,sample,dice,iou\n";
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.dice.size(); ++i)
            out += fmt::format("{},{},{},{},{:.17g},{:.17g}\n", r.fold, r.method, r.seed, i, r.dice[i], r.iou[i]);
    return out;
}

std::uint64_t segmenter_seed(std::uint64_t base_seed, int fold, int seed_index) {
    return derive_stream(base_seed, {{"seg_fold", fold}, {"seg_seed", seed_index}}).next_u64();
}

LooResult leave_one_out_eval(const MultiDomainDataset& data, const AugBuilder& builder, const LooOptions& options) {
    if (data.domains.size() < 3) throw ConfigError("leave_one_out_eval: need at least 3 domains");
    if (options.seeds < 1) throw ConfigError("leave_one_out_eval: seeds must be >= 1");
    std::vector<int> all_ids;
    for (const auto& d : data.domains) all_ids.push_back(d.spec.domain_id);
    std::vector<int> folds = options.folds.empty() ? all_ids : options.folds;
    for (const int f : folds) {
        if (std::find(all_ids.begin(), all_ids.end(), f) == all_ids.end()) {
            throw ConfigError(fmt::format("leave_one_out_eval: fold {} is not a domain id", f));
        }
    }

    struct FoldData {
        LabeledImages source;
        LabeledImages augmented;
        std::vector<Vector> eval_images;
        std::vector<Mask> eval_masks;
    };
    LooResult result;
    std::vector<FoldData> fold_data;
    for (const int h : folds) {
        FoldInfo info;
        info.held_out = h;
        for (const int id : all_ids)
            if (id != h) info.sources.push_back(id);
        const AugmentedDataset aug = builder(data, info.sources, options.jobs);
        check_no_leakage(aug, h);
        info.augmented = aug.size();
        info.skipped_chains = aug.skipped_chains;

        FoldData fd;
        for (const auto& src : source_domains(data, info.sources)) {
            fd.source.images.insert(fd.source.images.end(), src.images.begin(), src.images.end());
            fd.source.masks.insert(fd.source.masks.end(), src.masks.begin(), src.masks.end());
        }
        fd.augmented = labeled_from(aug);
        // the held-out domain is unseen, so every one of its samples is evaluated
        const auto& dom = *std::find_if(data.domains.begin(), data.domains.end(),
                                        [&](const auto& d) { return d.spec.domain_id == h; });
        fd.eval_images = dom.images;
        fd.eval_masks = dom.masks;
        fold_data.push_back(std::move(fd));
        result.folds.push_back(std::move(info));
    }

    struct Job {
        std::size_t fold;
        int seed;
        bool augmented;
    };
    std::vector<Job> jobs;
    for (std::size_t f = 0; f < folds.size(); ++f)
        for (int s = 0; s < options.seeds; ++s)
            for (const bool a : {false, true}) jobs.push_back({f, s, a});

    result.rows.resize(jobs.size());
    parallel_for(jobs.size(), options.jobs, [&](std::size_t j) {
        const auto& job = jobs[j];
        const auto& fd = fold_data[job.fold];
        SegTrainConfig cfg = options.seg;
        cfg.seed = segmenter_seed(options.base_seed, folds[job.fold], job.seed);
        if (!job.augmented) cfg.mix_ratio = 0.0;
        static const LabeledImages none;
        const auto model = train_segmenter(fd.source, job.augmented ? fd.augmented : none, data.shape, cfg);
        const auto eval = evaluate_segmenter(model, fd.eval_images, fd.eval_masks, options.threshold);
        result.rows[j] = {folds[job.fold], job.augmented ? "langdaug" : "erm", job.seed, eval.mean_dice, eval.mean_iou,
                          eval.dice, eval.iou};
    });
    return result;
}

}  // namespace langdaug
