#pragma once

// Parametric energy functions E_theta(x) with analytic input and parameter
// gradients. The density they define, exp(-E) / Z, is never normalized.

#include "langdaug/numerics.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace langdaug {

enum class EnergyKind {
    conv,       // stride-2 3x3 conv blocks + swish, dense head to a scalar
    mlp,        // one swish hidden layer, dense head
    quadratic,  // diagnostic: E = 0.5 * |x - theta|^2
    linear,     // diagnostic: E = theta^T x
};

std::string to_string(EnergyKind kind);
EnergyKind parse_energy_kind(std::string_view name);

struct EnergyArch {
    EnergyKind kind = EnergyKind::conv;
    int conv_blocks = 2;
    int base_channels = 8;  // first block width; doubles per block
    int hidden_width = 32;
    std::vector<int> input_shape;  // {H, W, C} for conv, {d} otherwise

    Eigen::Index input_size() const;
    Eigen::Index param_count() const;
    void validate() const;

    static EnergyArch conv_net(int height, int width, int channels, int blocks);
    static EnergyArch mlp_net(int dim, int hidden);
    static EnergyArch quadratic_family(int dim);
    static EnergyArch linear_family(int dim);

    friend bool operator==(const EnergyArch&, const EnergyArch&) = default;
};

struct EnergyParams {
    EnergyArch arch;
    Vector theta;
};

template <typename Scalar>
Scalar swish(Scalar z) {
    using std::exp;
    return z / (Scalar(1) + exp(-z));
}

template <typename Scalar>
Scalar swish_derivative(Scalar z) {
    using std::exp;
    const Scalar s = Scalar(1) / (Scalar(1) + exp(-z));
    return s + z * s * (Scalar(1) - s);
}

/// Deterministic initialization in (arch, seed): LeCun-normal weights, zero biases.
EnergyParams init_energy_params(const EnergyArch& arch, std::uint64_t seed);

/// Random weights and biases at unit-ish scale, for gradient checks.
EnergyParams random_energy_params(const EnergyArch& arch, RngStream& rng);

struct EnergyEvaluation {
    double energy = 0.0;
    Vector grad_input;   // empty unless requested
    Vector grad_params;  // empty unless requested
};

EnergyEvaluation energy_evaluate(const EnergyParams& params, const Vector& x, bool want_grad_input,
                                 bool want_grad_params);

double energy_forward(const EnergyParams& params, const Vector& x);
Vector energy_grad_input(const EnergyParams& params, const Vector& x);
Vector energy_grad_params(const EnergyParams& params, const Vector& x);

/// Mean of energy_grad_params over a batch.
Vector energy_grad_params_mean(const EnergyParams& params, std::span<const Vector> batch);
double energy_mean(const EnergyParams& params, std::span<const Vector> batch);

/// Ordered (source, target) domain pair that a trained EBM bridges.
using DomainPair = std::pair<int, int>;

/// Writes base.ldtn (theta) and base.meta.json (arch + pair).
void save_energy_params(const EnergyParams& params, const std::filesystem::path& base,
                        std::optional<DomainPair> pair = std::nullopt);
std::pair<EnergyParams, std::optional<DomainPair>> load_energy_params(const std::filesystem::path& base);

}  // namespace langdaug
