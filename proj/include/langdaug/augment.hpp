#pragma once

// Langevin data augmentation: run each pairwise EBM from every training image
// of its source domain and keep the stride-selected iterates together with the
// origin's mask.

#include "langdaug/energy.hpp"
#include "langdaug/langevin.hpp"
#include "langdaug/synth.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace langdaug {

struct AugmentedEntry {
    Vector image;
    Mask mask;
    int source = 0;
    int target = 0;
    int step = 0;
    std::size_t origin_index = 0;
};

struct AugmentedDataset {
    std::vector<AugmentedEntry> entries;
    ImageShape shape;
    LangevinConfig config;
    std::map<DomainPair, std::string> ebm_checksums;
    std::size_t skipped_chains = 0;

    std::size_t size() const { return entries.size(); }
    /// Entry counts keyed by (source, target, step).
    std::map<std::tuple<int, int, int>, std::size_t> counts() const;
};

/// Training images of one source domain with their dataset indices.
struct SourceDomain {
    int domain_id = 0;
    std::vector<Vector> images;
    std::vector<Mask> masks;
    std::vector<std::size_t> origin_index;
};

/// Training split of every listed domain (all domains when `domain_ids` is empty).
std::vector<SourceDomain> source_domains(const MultiDomainDataset& dataset, std::span<const int> domain_ids = {});

AugmentedDataset generate_augmented(std::span<const SourceDomain> domains,
                                    const std::map<DomainPair, EnergyParams>& ebms, const LangevinConfig& config,
                                    std::uint64_t base_seed, int jobs = 1);

struct StreamIndex {
    bool augmented = false;
    std::size_t index = 0;

    friend bool operator==(const StreamIndex&, const StreamIndex&) = default;
};

using StreamBatch = std::vector<StreamIndex>;

/// One epoch of shuffled batches. Each full batch holds round(mix_ratio * batch_size)
/// augmented indices; the epoch ends once every source index has been used once.
std::vector<StreamBatch> assemble_training_stream(std::size_t n_src, std::size_t n_aug, double mix_ratio,
                                                  int batch_size, std::uint64_t seed, int epoch = 0);

/// aug_<i>_<j>.ldtn / .masks.ldtn / .tags.ldtn per pair plus manifest.meta.json.
void save_augmented(const AugmentedDataset& data, const std::filesystem::path& dir);
AugmentedDataset load_augmented(const std::filesystem::path& dir);

}  // namespace langdaug
