#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace langdaug {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Counter-based random streams
// ---------------------------------------------------------------------------

/// One (name, value) provenance tag of a random stream.
struct RngLabel {
    std::string name;
    std::int64_t value = 0;

    friend bool operator==(const RngLabel&, const RngLabel&) = default;
};

using RngLabels = std::vector<RngLabel>;

/// A deterministic random stream keyed by a base seed and an ordered list of labels.
///
/// Draw n of the stream is a pure function of (key, n), where the key hashes the
/// seed together with every label. Two streams never share mutable state, so
/// chains and workers can derive their own stream in any order and still obtain
/// the same numbers. Satisfies UniformRandomBitGenerator so it can also feed
/// standard distributions.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t base_seed, RngLabels labels);

    std::uint64_t base_seed() const noexcept { return base_seed_; }
    const RngLabels& labels() const noexcept { return labels_; }
    std::uint64_t key() const noexcept { return key_; }

    /// Stream with this stream's labels plus one more tag.
    RngStream child(std::string_view name, std::int64_t value) const;

    std::uint64_t next_u64();
    /// Uniform on [0, 1).
    double uniform();
    /// Uniform on [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform integer on [0, n).
    std::uint64_t uniform_index(std::uint64_t n);
    /// Standard normal via Box-Muller.
    double normal();
    Vector normal_vector(Eigen::Index n);
    /// Rademacher sign, +1 or -1 with equal probability.
    double sign();

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() { return next_u64(); }

private:
    std::uint64_t base_seed_;
    RngLabels labels_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Build a stream for (base_seed, labels). Labels must be non-empty.
RngStream derive_stream(std::uint64_t base_seed, RngLabels labels);

/// Fisher-Yates permutation of 0..n-1 drawn from `rng`.
std::vector<std::size_t> random_permutation(std::size_t n, RngStream& rng);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps_stab = 1e-8;
};

struct AdamState {
    Vector first_moment;
    Vector second_moment;
    std::uint64_t step_count = 0;
    AdamHyper hyper;

    static AdamState fresh(Eigen::Index n, AdamHyper hyper = {});
};

/// Bias-corrected Adam update. Returns the new parameters and state.
std::pair<Vector, AdamState> adam_step(const Vector& params, const Vector& grads, AdamState state);

/// In-place form used by the training loops.
void adam_update(Vector& params, const Vector& grads, AdamState& state);

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

using ScalarFunction = std::function<double(const Vector&)>;

/// Central-difference gradient of `f` at `x`.
Vector finite_diff_grad(const ScalarFunction& f, const Vector& x, double h = 1e-5);

/// Central difference along the listed coordinates only.
Vector finite_diff_grad(const ScalarFunction& f, const Vector& x, std::span<const Eigen::Index> coords,
                        double h = 1e-5);

/// Largest relative error |a-b| / max(|a|,|b|) over components whose magnitude
/// exceeds `floor`. Returns 0 when no component qualifies.
double max_relative_error(const Vector& a, const Vector& b, double floor = 1e-6);

// ---------------------------------------------------------------------------
// Misc plumbing
// ---------------------------------------------------------------------------

/// Run fn(0..n-1) on up to `jobs` threads. Each index runs exactly once; the
/// first exception thrown is rethrown on the caller after all workers join.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Warning sink. Defaults to stderr; tests swap it to capture messages.
using WarningHandler = std::function<void(std::string_view)>;
WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t checksum(const Vector& v);

}  // namespace langdaug
