#pragma once

#include <cmath>
#include <string>
#include <string_view>

namespace langdaug {

/// Exponential-family response model with natural parameter u = theta^T x.
enum class GlmFamily { gaussian, logistic, poisson };

std::string to_string(GlmFamily family);
GlmFamily parse_glm_family(std::string_view name);

/// Log-partition A(u).
template <typename Scalar>
Scalar log_partition(GlmFamily family, Scalar u) {
    using std::exp;
    using std::log1p;
    switch (family) {
        case GlmFamily::gaussian: return u * u / Scalar(2);
        case GlmFamily::logistic:
            // log(1 + e^u) without overflow
            return u > Scalar(0) ? u + log1p(exp(-u)) : log1p(exp(u));
        case GlmFamily::poisson: return exp(u);
    }
    return Scalar(0);
}

/// Mean function A'(u).
template <typename Scalar>
Scalar log_partition_d1(GlmFamily family, Scalar u) {
    using std::exp;
    switch (family) {
        case GlmFamily::gaussian: return u;
        case GlmFamily::logistic:
            return u >= Scalar(0) ? Scalar(1) / (Scalar(1) + exp(-u)) : exp(u) / (Scalar(1) + exp(u));
        case GlmFamily::poisson: return exp(u);
    }
    return Scalar(0);
}

/// Variance function A''(u).
template <typename Scalar>
Scalar log_partition_d2(GlmFamily family, Scalar u) {
    using std::exp;
    switch (family) {
        case GlmFamily::gaussian: return Scalar(1);
        case GlmFamily::logistic: {
            const Scalar s = log_partition_d1(family, u);
            return s * (Scalar(1) - s);
        }
        case GlmFamily::poisson: return exp(u);
    }
    return Scalar(0);
}

}  // namespace langdaug
