#pragma once

// Contrastive-divergence training of pairwise EBMs. Negatives come from short
// Langevin chains started at source-domain samples; positives are target-domain
// samples.

#include "langdaug/energy.hpp"
#include "langdaug/langevin.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace langdaug {

struct CdConfig {
    int n_iters = 200;
    int batch_size = 16;
    LangevinConfig ld{0.1, 40, 1, 40, std::nullopt, false};
    AdamHyper adam{};
    std::uint64_t base_seed = 0;
    /// Rescale the gradient to this L2 norm when it is exceeded. Off by default.
    std::optional<double> grad_clip;
    /// Write a checkpoint every this many iterations (0 = never).
    int checkpoint_every = 0;
    std::filesystem::path checkpoint_dir;

    void validate() const;
};

struct TraceEntry {
    long iter = 0;
    double cd_surrogate = 0.0;  // mean E(pos) - mean E(neg)
    double grad_norm = 0.0;
};

struct TrainTrace {
    std::vector<TraceEntry> entries;

    /// CSV with header "iter,cd_surrogate,grad_norm".
    std::string to_csv() const;
};

/// mean grad_theta E over positives minus mean over negatives.
Vector cd_gradient(const EnergyParams& params, std::span<const Vector> pos_batch, std::span<const Vector> neg_batch);

/// One CD learner for a (source, target) pair. Exposes single iterations so
/// callers can inspect raw gradients; train_ebm drives it to completion.
class CdTrainer {
public:
    CdTrainer(std::span<const Vector> source, std::span<const Vector> target, EnergyParams init, CdConfig config,
              DomainPair pair = {-1, -1});

    struct StepResult {
        Vector gradient;  // before clipping
        TraceEntry entry;
    };

    /// Sample a batch, run negative chains, apply one Adam update.
    StepResult step();

    const EnergyParams& params() const { return params_; }
    const TrainTrace& trace() const { return trace_; }
    long iteration() const { return iter_; }

private:
    std::span<const Vector> source_;
    std::span<const Vector> target_;
    EnergyParams params_;
    CdConfig config_;
    DomainPair pair_;
    AdamState adam_;
    TrainTrace trace_;
    long iter_ = 0;
};

std::pair<EnergyParams, TrainTrace> train_ebm(std::span<const Vector> source, std::span<const Vector> target,
                                              const EnergyArch& arch, const CdConfig& config,
                                              DomainPair pair = {-1, -1});

/// Samples of one domain, keyed by its domain id.
struct DomainSamples {
    int domain_id = 0;
    std::vector<Vector> samples;
};

struct PairModel {
    EnergyParams params;
    TrainTrace trace;
};

/// n(n-1) models, one per ordered pair of distinct domains. Each pair derives
/// its own seed from config.base_seed, so results do not depend on `jobs`.
std::map<DomainPair, PairModel> train_all_pairs(std::span<const DomainSamples> domains, const EnergyArch& arch,
                                                const CdConfig& config, int jobs = 1);

/// Persist every model as ebm_<i>_<j>.{ldtn,meta.json} plus trace_<i>_<j>.csv.
void save_pair_models(const std::map<DomainPair, PairModel>& models, const std::filesystem::path& dir);
std::map<DomainPair, EnergyParams> load_pair_models(const std::filesystem::path& dir);

}  // namespace langdaug
