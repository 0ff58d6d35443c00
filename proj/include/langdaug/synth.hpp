#pragma once

// Synthetic benchmarks: a multi-domain toy segmentation set whose domains
// differ only in appearance, and Gaussian-design GLM vector data with an
// exactly known score function.

#include "langdaug/glm_family.hpp"
#include "langdaug/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

namespace langdaug {

using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>;

struct ImageShape {
    int height = 16;
    int width = 16;
    int channels = 1;

    Eigen::Index pixels() const { return Eigen::Index{height} * width; }
    Eigen::Index size() const { return pixels() * channels; }
    friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Appearance transform of one domain: gamma, contrast about 0.5, one
/// oriented sinusoid and additive Gaussian noise, applied pointwise.
struct DomainSpec {
    int domain_id = 0;
    double gamma = 1.0;
    double contrast = 1.0;
    double texture_freq = 0.0;  // cycles per image
    double texture_amp = 0.0;
    double noise_sigma = 0.0;

    friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

/// Four default domains used by the toy benchmark.
std::vector<DomainSpec> default_domain_specs();

void validate(const DomainSpec& spec, int image_size);

struct DomainData {
    DomainSpec spec;
    std::vector<Vector> images;  // HWC row-major, values in [0, 1]
    std::vector<Mask> masks;     // HW, values in {0, 1}
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;

    std::size_t size() const { return images.size(); }
};

struct MultiDomainDataset {
    ImageShape shape;
    std::uint64_t seed = 0;
    std::vector<DomainData> domains;
    double clamp_fraction = 0.0;

    std::vector<std::size_t> counts() const;
    std::vector<DomainSpec> specs() const;
};

struct BenchmarkConfig {
    int n_domains = 4;
    int n_per_domain = 50;
    int image_size = 16;
    int channels = 1;
    double train_fraction = 0.8;
    std::vector<DomainSpec> specs = default_domain_specs();
    std::uint64_t seed = 0;
};

MultiDomainDataset generate_benchmark(const BenchmarkConfig& config);
MultiDomainDataset generate_benchmark(int n_domains, int n_per_domain, int image_size,
                                      const std::vector<DomainSpec>& specs, std::uint64_t seed);

struct BaseRendering {
    Vector image;  // untransformed intensities
    Mask mask;
};

/// Content of sample `sample_index`: ellipse geometry and base intensities. Depends only on (seed, index).
BaseRendering render_base(const ImageShape& shape, std::uint64_t seed, std::uint64_t sample_index);

/// Apply a domain's appearance transform. `clamped` (optional) accumulates the clamped pixel count.
Vector apply_domain(const DomainSpec& spec, const ImageShape& shape, const Vector& base, std::uint64_t seed,
                    std::uint64_t sample_index, std::size_t* clamped = nullptr);

// ---------------------------------------------------------------------------

struct GlmVectorDataset {
    Matrix x;  // k x d
    Vector y;
    Vector mu;
    Matrix sigma_mat;
    Matrix precision;  // (pseudo-)inverse of sigma_mat
    Vector theta_star;
    GlmFamily family = GlmFamily::logistic;
    std::uint64_t seed = 0;

    Eigen::Index size() const { return x.rows(); }
    Eigen::Index dim() const { return x.cols(); }
    /// Stein score s(x) = grad log N(x; mu, sigma) = -precision (x - mu).
    Vector score(const Vector& point) const;
    /// Scores of every row, k x d.
    Matrix scores() const;
    double log_density(const Vector& point) const;
};

/// Rows i.i.d. N(mu, sigma); responses from `family` at natural parameter theta_star^T x.
GlmVectorDataset generate_vector_glm(Eigen::Index k, const Vector& mu, const Matrix& sigma_mat,
                                     const Vector& theta_star, GlmFamily family, std::uint64_t seed);

/// Rank-r data x = U diag(sqrt(latent_variances)) z embedded in d = U.rows() dimensions (U orthonormal columns).
GlmVectorDataset generate_embedded_glm(Eigen::Index k, const Vector& latent_variances, const Matrix& embedding,
                                       const Vector& theta_star, GlmFamily family, std::uint64_t seed);

/// d x r matrix with orthonormal columns, drawn from Haar measure.
Matrix random_orthonormal(Eigen::Index d, Eigen::Index r, RngStream& rng);

/// Draw a response for natural parameter u.
double sample_response(GlmFamily family, double u, RngStream& rng);

// ---------------------------------------------------------------------------

/// `base` is a path stem: writes base.ldtn (+ companions) and base.meta.json.
void save_dataset(const MultiDomainDataset& dataset, const std::filesystem::path& base);
void save_dataset(const GlmVectorDataset& dataset, const std::filesystem::path& base);

MultiDomainDataset load_benchmark(const std::filesystem::path& base);
GlmVectorDataset load_glm_dataset(const std::filesystem::path& base);

using AnyDataset = std::variant<MultiDomainDataset, GlmVectorDataset>;
AnyDataset load_dataset(const std::filesystem::path& base);

}  // namespace langdaug
