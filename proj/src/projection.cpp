#include "langdaug/projection.hpp"

#include "langdaug/errors.hpp"

#include <fmt/format.h>

namespace langdaug {

Projection pca_project(const Matrix& samples, Eigen::Index out_dim) {
    if (out_dim < 1) throw ConfigError("pca_project: out_dim must be >= 1");
    if (samples.rows() < 2) throw ConfigError("pca_project: need at least two samples");
    Projection p;
    p.mean = samples.colwise().mean().transpose();
    const Matrix centered = samples.rowwise() - p.mean.transpose();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(samples.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    if (eig.info() != Eigen::Success) throw LinearAlgebraError("pca_project: eigen-decomposition failed");

    const Eigen::Index dim = cov.rows();
    const double top = std::max(eig.eigenvalues()[dim - 1], 0.0);
    Eigen::Index keep = 0;
    while (keep < std::min(out_dim, dim) && eig.eigenvalues()[dim - 1 - keep] > 1e-12 * top && top > 0.0) ++keep;
    if (keep < out_dim) {
        warn(fmt::format("pca_project: degenerate covariance, returning {} of {} components", keep, out_dim));
    }
    p.components.resize(dim, keep);
    p.explained_variance.resize(keep);
    for (Eigen::Index j = 0; j < keep; ++j) {
        Vector v = eig.eigenvectors().col(dim - 1 - j);
        // sign convention: largest-magnitude entry positive
        Eigen::Index at = 0;
        v.cwiseAbs().maxCoeff(&at);
        if (v[at] < 0.0) v = -v;
        p.components.col(j) = v;
        p.explained_variance[j] = eig.eigenvalues()[dim - 1 - j];
    }
    p.coords = centered * p.components;
    return p;
}

}  // namespace langdaug
