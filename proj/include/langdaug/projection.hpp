#pragma once

// Principal-component projection of flattened samples for 2-D plot data.

#include "langdaug/numerics.hpp"

namespace langdaug {

struct Projection {
    Matrix coords;              // n x m, m <= out_dim
    Vector explained_variance;  // per kept component, descending
    Matrix components;          // D x m
    Vector mean;
};

/// Rows of `samples` are observations. Components whose variance falls below
/// 1e-12 of the largest are dropped with a warning.
Projection pca_project(const Matrix& samples, Eigen::Index out_dim = 2);

}  // namespace langdaug
