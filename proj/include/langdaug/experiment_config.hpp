#pragma once

// Strict JSON experiment configuration. Sections: data, ebm, langevin, augment,
// segmenter, theory, sweep; base_seed at top level is mandatory. Unknown keys
// anywhere are rejected.

#include "langdaug/cd_trainer.hpp"
#include "langdaug/energy.hpp"
#include "langdaug/glm_theory.hpp"
#include "langdaug/langevin.hpp"
#include "langdaug/segmenter.hpp"
#include "langdaug/synth.hpp"
#include "langdaug/theory_harness.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace langdaug {

struct EbmSection {
    EnergyKind kind = EnergyKind::conv;
    int conv_blocks = 2;
    int base_channels = 8;
    int hidden_width = 32;
    CdConfig cd;
    std::vector<int> domains;  // domains to pair up; all when empty
};

struct LangevinSection {
    LangevinConfig ld = [] {
        LangevinConfig c;
        c.step_size = 0.5;
        return c;
    }();
    /// "auto" enables channel 0 replacement on multi-channel data only.
    std::string hook = "auto";
    int hook_channel = 0;
};

struct AugmentSection {
    double mix_ratio = 0.5;
    std::optional<int> samples_per_chain;  // overrides store_offset / store_stride
};

struct SegmenterSection {
    SegTrainConfig train;
    int seeds = 5;
    double threshold = 0.5;
    bool per_sample = false;
    std::vector<int> folds;
};

struct TheorySection {
    GlmFamily family = GlmFamily::logistic;
    int d = 2;
    int k = 200;
    std::vector<double> betas{0.02, 0.04, 0.08, 0.16};
    std::vector<double> theta;  // empty -> (1, -0.5, 0, ...)
    ScanOptions scan;
    RademacherStudyConfig rademacher;
    CoverageConfig coverage;
    bool run_coverage = true;
};

struct SweepSection {
    std::string axis = "K";  // K, beta, conv_blocks, samples_per_chain
    std::vector<double> values{20, 40, 60, 80};
};

struct ExperimentConfig {
    std::uint64_t base_seed = 0;
    BenchmarkConfig data;
    EbmSection ebm;
    LangevinSection langevin;
    AugmentSection augment;
    SegmenterSection segmenter;
    TheorySection theory;
    SweepSection sweep;

    EnergyArch energy_arch() const;
    /// Augmentation-time Langevin config with hook and samples_per_chain applied.
    LangevinConfig augmentation_langevin() const;
    /// Parameter and data of the remainder scan.
    Vector theory_theta() const;
    GlmVectorDataset theory_scan_data() const;
    /// Seeds of every module follow base_seed.
    void apply_seed(std::uint64_t seed);
};

/// Throws ConfigError with the offending key path.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Fully resolved config (every default filled in); parsing it back yields the same config.
nlohmann::json to_json(const ExperimentConfig& config);

}  // namespace langdaug
