#pragma once

// Unadjusted Langevin dynamics over an energy function:
//   x_{t+1} = x_t - (step^2 / 2) * grad E(x_t) + step * eps,  eps ~ N(0, I)

#include "langdaug/energy.hpp"
#include "langdaug/errors.hpp"
#include "langdaug/numerics.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace langdaug {

template <typename DerivedX, typename DerivedG, typename DerivedN>
typename DerivedX::PlainObject langevin_step(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedG>& grad,
                                             typename DerivedX::Scalar step_size,
                                             const Eigen::MatrixBase<DerivedN>& noise) {
    if (x.size() != grad.size() || x.size() != noise.size()) {
        throw DimensionError("langevin_step: x, grad and noise must have the same shape");
    }
    if (step_size < 0) throw ConfigError("langevin_step: step size must be non-negative");
    using Scalar = typename DerivedX::Scalar;
    return x - (step_size * step_size / Scalar(2)) * grad + step_size * noise;
}

struct LangevinConfig {
    double step_size = 1.0;
    int n_steps = 40;
    int store_stride = 3;
    int store_offset = 3;
    /// Channel overwritten with the chain origin's channel after every step.
    std::optional<int> hook_channel;
    /// Clamp iterates to [0, 1] after the hook.
    bool clamp01 = false;

    void validate() const;
    /// {offset, offset + stride, ...} intersected with [1, n_steps].
    std::vector<int> stored_steps() const;
    std::size_t stored_count() const { return stored_steps().size(); }
};

struct StoredIterate {
    int step = 0;
    Vector x;
};

struct ChainRecord {
    Vector x0;
    std::vector<StoredIterate> stored;
    DomainPair pair{-1, -1};
    RngLabels rng_labels;
};

/// Replace channel `channel_index` of an HWC image with the original's channel.
Vector channel_replace_hook(const Vector& iterate, const Vector& original, int channel_index, int channels);

/// K Langevin steps from x0 under `params`, fresh N(0, I) noise from `rng` per step.
/// Throws DivergenceError on the first non-finite iterate.
ChainRecord run_chain(const Vector& x0, const EnergyParams& params, const LangevinConfig& config, RngStream rng,
                      DomainPair pair = {-1, -1});

/// Final iterate only; used for contrastive-divergence negatives.
Vector run_chain_final(const Vector& x0, const EnergyParams& params, const LangevinConfig& config, RngStream rng);

void save_chain_record(const ChainRecord& record, const LangevinConfig& config, const std::filesystem::path& base);

}  // namespace langdaug
