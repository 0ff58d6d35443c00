#include "langdaug/numerics.hpp"

#include "langdaug/errors.hpp"

#include <fmt/format.h>

#include <atomic>
#include <cmath>
#include <exception>
#include <iostream>
#include <mutex>
#include <numbers>
#include <thread>

namespace langdaug {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t hash_name(std::string_view name) {
    return fnv1a64(std::as_bytes(std::span(name.data(), name.size())));
}

std::uint64_t derive_key(std::uint64_t base_seed, const RngLabels& labels) {
    std::uint64_t h = mix64(base_seed + kGolden);
    for (const auto& label : labels) {
        h = mix64(h ^ hash_name(label.name));
        h = mix64(h + kGolden * (static_cast<std::uint64_t>(label.value) ^ 0x5851F42D4C957F2DULL));
    }
    return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t base_seed, RngLabels labels)
    : base_seed_(base_seed), labels_(std::move(labels)), key_(derive_key(base_seed_, labels_)) {}

RngStream RngStream::child(std::string_view name, std::int64_t value) const {
    RngLabels labels = labels_;
    labels.push_back({std::string(name), value});
    return RngStream(base_seed_, std::move(labels));
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t c = counter_++;
    return mix64(mix64(c ^ key_) + key_ * kGolden);
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
    if (n == 0) throw ConfigError("uniform_index: empty range");
    // Lemire-style rejection to avoid modulo bias.
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t r;
    do {
        r = next_u64();
    } while (r >= limit);
    return r % n;
}

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

Vector RngStream::normal_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
}

double RngStream::sign() { return (next_u64() >> 63) ? 1.0 : -1.0; }

RngStream derive_stream(std::uint64_t base_seed, RngLabels labels) {
    if (labels.empty()) throw ConfigError("derive_stream: labels must be non-empty");
    return RngStream(base_seed, std::move(labels));
}

std::vector<std::size_t> random_permutation(std::size_t n, RngStream& rng) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_index(i));
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

AdamState AdamState::fresh(Eigen::Index n, AdamHyper hyper) {
    return AdamState{Vector::Zero(n), Vector::Zero(n), 0, hyper};
}

void adam_update(Vector& params, const Vector& grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size()) {
        throw DimensionError(fmt::format("adam_step: params {} grads {} moments {}/{}", params.size(),
                                         grads.size(), state.first_moment.size(),
                                         state.second_moment.size()));
    }
    const auto& h = state.hyper;
    state.step_count += 1;
    state.first_moment = h.beta1 * state.first_moment + (1.0 - h.beta1) * grads;
    state.second_moment = h.beta2 * state.second_moment + (1.0 - h.beta2) * grads.cwiseProduct(grads);
    const double t = static_cast<double>(state.step_count);
    const double c1 = 1.0 - std::pow(h.beta1, t);
    const double c2 = 1.0 - std::pow(h.beta2, t);
    params.array() -= h.lr * (state.first_moment.array() / c1) /
                      ((state.second_moment.array() / c2).sqrt() + h.eps_stab);
}

std::pair<Vector, AdamState> adam_step(const Vector& params, const Vector& grads, AdamState state) {
    Vector out = params;
    adam_update(out, grads, state);
    return {std::move(out), std::move(state)};
}

Vector finite_diff_grad(const ScalarFunction& f, const Vector& x, std::span<const Eigen::Index> coords,
                        double h) {
    if (!(h > 0.0)) throw ConfigError("finite_diff_grad: step must be positive");
    Vector grad = Vector::Zero(x.size());
    Vector probe = x;
    for (const Eigen::Index d : coords) {
        if (d < 0 || d >= x.size()) throw DimensionError(fmt::format("finite_diff_grad: coordinate {} out of range", d));
        probe[d] = x[d] + h;
        const double up = f(probe);
        probe[d] = x[d] - h;
        const double down = f(probe);
        probe[d] = x[d];
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError(fmt::format("finite_diff_grad: non-finite value at coordinate {}", d));
        }
        grad[d] = (up - down) / (2.0 * h);
    }
    return grad;
}

Vector finite_diff_grad(const ScalarFunction& f, const Vector& x, double h) {
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) coords[static_cast<std::size_t>(i)] = i;
    return finite_diff_grad(f, x, coords, h);
}

double max_relative_error(const Vector& a, const Vector& b, double floor) {
    if (a.size() != b.size()) throw DimensionError("max_relative_error: length mismatch");
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double scale = std::max(std::abs(a[i]), std::abs(b[i]));
        if (scale <= floor) continue;
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (first_error) std::rethrow_exception(first_error);
}

namespace {

std::mutex& warning_mutex() {
    static std::mutex m;
    return m;
}

WarningHandler& warning_handler() {
    static WarningHandler handler = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
    return handler;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
    std::lock_guard lock(warning_mutex());
    std::swap(warning_handler(), handler);
    return handler;
}

void warn(std::string_view message) {
    std::lock_guard lock(warning_mutex());
    if (warning_handler()) warning_handler()(message);
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (const std::byte b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t checksum(const Vector& v) {
    return fnv1a64(std::as_bytes(std::span(v.data(), static_cast<std::size_t>(v.size()))));
}

}  // namespace langdaug
