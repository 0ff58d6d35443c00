#pragma once

// Leave-one-out domain-generalization evaluation: per held-out domain, build
// Langevin data from the remaining domains only, then train the segmenter with
// and without it.

#include "langdaug/augment.hpp"
#include "langdaug/cd_trainer.hpp"
#include "langdaug/segmenter.hpp"

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace langdaug {

class LeakageError : public Error {
public:
    using Error::Error;
};

/// (offset, stride) that store exactly `samples` iterates out of n_steps: stride = floor(K/s),
/// offset = stride, pulled back to K - (s-1) stride if that would store more than s.
std::pair<int, int> stride_for_samples(int n_steps, int samples);

/// Builds the augmented set of one fold from the listed source domains.
using AugBuilder =
    std::function<AugmentedDataset(const MultiDomainDataset& data, std::span<const int> source_ids, int jobs)>;

/// Trains pairwise EBMs on demand (each ordered pair once, shared across folds) and
/// runs the Langevin sampler on the sources' training images.
class LangevinAugBuilder {
public:
    LangevinAugBuilder(EnergyArch arch, CdConfig cd, LangevinConfig ld, std::uint64_t base_seed);

    AugmentedDataset operator()(const MultiDomainDataset& data, std::span<const int> source_ids, int jobs);

    /// Models trained so far.
    std::map<DomainPair, PairModel> models() const;

    /// Copies keep sharing the model cache; only the sampler settings change.
    void set_langevin(const LangevinConfig& ld) { ld_ = ld; }

private:
    struct Shared {
        std::mutex mutex;
        std::map<DomainPair, PairModel> models;
    };
    EnergyArch arch_;
    CdConfig cd_;
    LangevinConfig ld_;
    std::uint64_t base_seed_;
    std::shared_ptr<Shared> shared_;
};

/// Throws LeakageError when any entry's source or target is the held-out domain.
void check_no_leakage(const AugmentedDataset& aug, int held_out);

struct LooOptions {
    SegTrainConfig seg;  // seed is replaced per (fold, seed index)
    int seeds = 5;
    std::vector<int> folds;  // held-out domain ids; all domains when empty
    double threshold = 0.5;
    std::uint64_t base_seed = 0;
    int jobs = 1;
};

struct LooRow {
    int fold = 0;
    std::string method;  // "erm" or "langdaug"
    int seed = 0;
    double mean_dice = 0.0;
    double mean_iou = 0.0;
    std::vector<double> dice;
    std::vector<double> iou;
};

struct FoldInfo {
    int held_out = 0;
    std::vector<int> sources;
    std::size_t augmented = 0;
    std::size_t skipped_chains = 0;
};

struct LooResult {
    std::vector<LooRow> rows;
    std::vector<FoldInfo> folds;

    double mean_dice(std::string_view method) const;
    double mean_iou(std::string_view method) const;
    /// "fold,method,seed,mean_dice,mean_iou"
    std::string to_csv() const;
    /// "fold,method,seed,sample,dice,iou"
    std::string per_sample_csv() const;
};

/// Seed of the segmenter for (fold, seed index); both arms share it.
std::uint64_t segmenter_seed(std::uint64_t base_seed, int fold, int seed_index);

LooResult leave_one_out_eval(const MultiDomainDataset& data, const AugBuilder& builder, const LooOptions& options);

}  // namespace langdaug
