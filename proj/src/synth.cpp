#include "langdaug/synth.hpp"

#include "langdaug/errors.hpp"
#include "langdaug/tensor_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace langdaug {

std::string to_string(GlmFamily family) {
    switch (family) {
        case GlmFamily::gaussian: return "gaussian";
        case GlmFamily::logistic: return "logistic";
        case GlmFamily::poisson: return "poisson";
    }
    return "unknown";
}

GlmFamily parse_glm_family(std::string_view name) {
    if (name == "gaussian") return GlmFamily::gaussian;
    if (name == "logistic") return GlmFamily::logistic;
    if (name == "poisson") return GlmFamily::poisson;
    throw ConfigError(fmt::format("unknown GLM family \"{}\" (expected gaussian, logistic or poisson)", name));
}

std::vector<DomainSpec> default_domain_specs() {
    return {
        {0, 0.6, 1.00, 2.0, 0.06, 0.03},
        {1, 0.9, 1.15, 3.0, 0.08, 0.04},
        {2, 1.2, 0.85, 1.0, 0.05, 0.03},
        {3, 1.6, 1.10, 4.0, 0.07, 0.05},
    };
}

void validate(const DomainSpec& spec, int image_size) {
    if (!(spec.gamma > 0.0) || !(spec.contrast > 0.0)) {
        throw ConfigError(fmt::format("domain {}: gamma and contrast must be positive", spec.domain_id));
    }
    if (spec.texture_freq < 0.0 || spec.texture_freq > image_size / 2.0) {
        throw ConfigError(fmt::format("domain {}: texture_freq {} outside [0, {}]", spec.domain_id, spec.texture_freq,
                                      image_size / 2.0));
    }
    if (spec.texture_amp < 0.0 || spec.noise_sigma < 0.0) {
        throw ConfigError(fmt::format("domain {}: texture_amp and noise_sigma must be non-negative", spec.domain_id));
    }
}

std::vector<std::size_t> MultiDomainDataset::counts() const {
    std::vector<std::size_t> out;
    for (const auto& d : domains) out.push_back(d.size());
    return out;
}

std::vector<DomainSpec> MultiDomainDataset::specs() const {
    std::vector<DomainSpec> out;
    for (const auto& d : domains) out.push_back(d.spec);
    return out;
}

BaseRendering render_base(const ImageShape& shape, std::uint64_t seed, std::uint64_t sample_index) {
    auto rng = derive_stream(seed, {{"content", static_cast<std::int64_t>(sample_index)}});
    const double h = shape.height;
    const double w = shape.width;
    const double cy = rng.uniform(0.3, 0.7) * h;
    const double cx = rng.uniform(0.3, 0.7) * w;
    const double ay = rng.uniform(0.15, 0.35) * h;
    const double ax = rng.uniform(0.15, 0.35) * w;
    const double rot = rng.uniform(0.0, std::numbers::pi);
    const double fg = rng.uniform(0.6, 0.8);
    const double bg = rng.uniform(0.15, 0.35);
    const double c = std::cos(rot);
    const double s = std::sin(rot);

    BaseRendering out{Vector(shape.size()), Mask(shape.pixels())};
    for (int y = 0; y < shape.height; ++y) {
        for (int x = 0; x < shape.width; ++x) {
            const double dy = y + 0.5 - cy;
            const double dx = x + 0.5 - cx;
            const double u = (c * dx + s * dy) / ax;
            const double v = (-s * dx + c * dy) / ay;
            const bool inside = u * u + v * v <= 1.0;
            const Eigen::Index p = Eigen::Index{y} * shape.width + x;
            out.mask[p] = inside ? 1 : 0;
            const double level = inside ? fg : bg;
            for (int ch = 0; ch < shape.channels; ++ch) {
                // extra channels are dimmer copies so multi-channel data carries a luminance-like channel 0
                out.image[p * shape.channels + ch] = ch == 0 ? level : level * (1.0 - 0.25 * ch / shape.channels);
            }
        }
    }
    return out;
}

Vector apply_domain(const DomainSpec& spec, const ImageShape& shape, const Vector& base, std::uint64_t seed,
                    std::uint64_t sample_index, std::size_t* clamped) {
    if (base.size() != shape.size()) throw DimensionError("apply_domain: base image does not match shape");
    const auto sample = static_cast<std::int64_t>(sample_index);
    auto noise_rng = derive_stream(seed, {{"noise", spec.domain_id}, {"sample", sample}});
    auto phase_rng = derive_stream(seed, {{"texture", spec.domain_id}, {"sample", sample}});
    const double phase = phase_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double orient = 0.7 * spec.domain_id;
    const double kx = 2.0 * std::numbers::pi * spec.texture_freq * std::cos(orient) / shape.width;
    const double ky = 2.0 * std::numbers::pi * spec.texture_freq * std::sin(orient) / shape.height;

    Vector out(base.size());
    std::size_t n_clamped = 0;
    for (int y = 0; y < shape.height; ++y) {
        for (int x = 0; x < shape.width; ++x) {
            const double texture =
                spec.texture_amp > 0.0 ? spec.texture_amp * std::sin(kx * x + ky * y + phase) : 0.0;
            for (int ch = 0; ch < shape.channels; ++ch) {
                const Eigen::Index i = (Eigen::Index{y} * shape.width + x) * shape.channels + ch;
                double v = base[i];
                if (spec.gamma != 1.0) v = std::pow(v, spec.gamma);
                if (spec.contrast != 1.0) v = 0.5 + spec.contrast * (v - 0.5);
                if (spec.texture_amp > 0.0) v += texture;
                if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise_rng.normal();
                if (v < 0.0 || v > 1.0) {
                    ++n_clamped;
                    v = std::clamp(v, 0.0, 1.0);
                }
                out[i] = v;
            }
        }
    }
    if (clamped) *clamped += n_clamped;
    return out;
}

MultiDomainDataset generate_benchmark(const BenchmarkConfig& config) {
    if (config.n_domains < 2) throw ConfigError("generate_benchmark: need at least 2 domains");
    if (config.image_size < 8) throw ConfigError("generate_benchmark: image_size must be >= 8");
    if (config.n_per_domain < 1) throw ConfigError("generate_benchmark: n_per_domain must be >= 1");
    if (config.channels < 1) throw ConfigError("generate_benchmark: channels must be >= 1");
    if (static_cast<int>(config.specs.size()) != config.n_domains) {
        throw ConfigError(fmt::format("generate_benchmark: {} domain specs for {} domains", config.specs.size(),
                                      config.n_domains));
    }
    if (!(config.train_fraction > 0.0 && config.train_fraction <= 1.0)) {
        throw ConfigError("generate_benchmark: train_fraction must be in (0, 1]");
    }
    for (const auto& s : config.specs) validate(s, config.image_size);

    MultiDomainDataset ds;
    ds.shape = {config.image_size, config.image_size, config.channels};
    ds.seed = config.seed;
    std::size_t clamped = 0;
    for (int d = 0; d < config.n_domains; ++d) {
        DomainData dom;
        dom.spec = config.specs[static_cast<std::size_t>(d)];
        for (int j = 0; j < config.n_per_domain; ++j) {
            const auto index = static_cast<std::uint64_t>(d) * static_cast<std::uint64_t>(config.n_per_domain) +
                               static_cast<std::uint64_t>(j);
            auto base = render_base(ds.shape, config.seed, index);
            dom.images.push_back(apply_domain(dom.spec, ds.shape, base.image, config.seed, index, &clamped));
            dom.masks.push_back(std::move(base.mask));
        }
        auto split_rng = derive_stream(config.seed, {{"split", dom.spec.domain_id}});
        auto perm = random_permutation(dom.images.size(), split_rng);
        const auto n_train = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::floor(config.train_fraction * static_cast<double>(perm.size()))));
        dom.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
        dom.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
        std::sort(dom.train.begin(), dom.train.end());
        std::sort(dom.test.begin(), dom.test.end());
        ds.domains.push_back(std::move(dom));
    }
    const double total = static_cast<double>(config.n_domains) * config.n_per_domain * ds.shape.size();
    ds.clamp_fraction = static_cast<double>(clamped) / total;
    return ds;
}

MultiDomainDataset generate_benchmark(int n_domains, int n_per_domain, int image_size,
                                      const std::vector<DomainSpec>& specs, std::uint64_t seed) {
    BenchmarkConfig cfg;
    cfg.n_domains = n_domains;
    cfg.n_per_domain = n_per_domain;
    cfg.image_size = image_size;
    cfg.specs = specs;
    cfg.seed = seed;
    return generate_benchmark(cfg);
}

// ---------------------------------------------------------------------------

Vector GlmVectorDataset::score(const Vector& point) const { return -precision * (point - mu); }

Matrix GlmVectorDataset::scores() const {
    return -(x.rowwise() - mu.transpose()) * precision.transpose();
}

double GlmVectorDataset::log_density(const Vector& point) const {
    // Normalizer omitted: only gradients of this are ever compared.
    const Vector r = point - mu;
    return -0.5 * r.dot(precision * r);
}

double sample_response(GlmFamily family, double u, RngStream& rng) {
    switch (family) {
        case GlmFamily::gaussian: return u + rng.normal();
        case GlmFamily::logistic: return rng.uniform() < log_partition_d1(family, u) ? 1.0 : 0.0;
        case GlmFamily::poisson: {
            if (u > 30.0) throw NumericError(fmt::format("poisson natural parameter {} exceeds 30", u));
            std::poisson_distribution<long> dist(std::exp(u));
            return static_cast<double>(dist(rng));
        }
    }
    return 0.0;
}

namespace {

GlmVectorDataset draw_responses(GlmVectorDataset ds, std::uint64_t seed) {
    ds.y.resize(ds.x.rows());
    const Vector u = ds.x * ds.theta_star;
    for (Eigen::Index i = 0; i < ds.x.rows(); ++i) {
        auto rng = derive_stream(seed, {{"glm_response", i}});
        ds.y[i] = sample_response(ds.family, u[i], rng);
    }
    return ds;
}

}  // namespace

GlmVectorDataset generate_vector_glm(Eigen::Index k, const Vector& mu, const Matrix& sigma_mat,
                                     const Vector& theta_star, GlmFamily family, std::uint64_t seed) {
    const Eigen::Index d = mu.size();
    if (sigma_mat.rows() != d || sigma_mat.cols() != d || theta_star.size() != d) {
        throw DimensionError("generate_vector_glm: mu, sigma and theta_star dimensions disagree");
    }
    if (!sigma_mat.isApprox(sigma_mat.transpose(), 1e-12)) throw LinearAlgebraError("sigma is not symmetric");
    Eigen::LLT<Matrix> llt(sigma_mat);
    if (llt.info() != Eigen::Success) throw LinearAlgebraError("sigma is not positive definite");

    GlmVectorDataset ds;
    ds.mu = mu;
    ds.sigma_mat = sigma_mat;
    ds.precision = llt.solve(Matrix::Identity(d, d));
    ds.theta_star = theta_star;
    ds.family = family;
    ds.seed = seed;
    ds.x.resize(k, d);
    const Matrix lower = llt.matrixL();
    for (Eigen::Index i = 0; i < k; ++i) {
        auto rng = derive_stream(seed, {{"glm_row", i}});
        ds.x.row(i) = (mu + lower * rng.normal_vector(d)).transpose();
    }
    return draw_responses(std::move(ds), seed);
}

GlmVectorDataset generate_embedded_glm(Eigen::Index k, const Vector& latent_variances, const Matrix& embedding,
                                       const Vector& theta_star, GlmFamily family, std::uint64_t seed) {
    const Eigen::Index r = latent_variances.size();
    const Eigen::Index d = embedding.rows();
    if (embedding.cols() != r || theta_star.size() != d) {
        throw DimensionError("generate_embedded_glm: embedding, variances and theta_star disagree");
    }
    if ((latent_variances.array() <= 0.0).any()) throw LinearAlgebraError("latent variances must be positive");

    GlmVectorDataset ds;
    ds.mu = Vector::Zero(d);
    ds.sigma_mat = embedding * latent_variances.asDiagonal() * embedding.transpose();
    ds.precision = embedding * latent_variances.cwiseInverse().asDiagonal() * embedding.transpose();
    ds.theta_star = theta_star;
    ds.family = family;
    ds.seed = seed;
    ds.x.resize(k, d);
    const Vector scale = latent_variances.cwiseSqrt();
    for (Eigen::Index i = 0; i < k; ++i) {
        auto rng = derive_stream(seed, {{"glm_row", i}});
        ds.x.row(i) = (embedding * scale.cwiseProduct(rng.normal_vector(r))).transpose();
    }
    return draw_responses(std::move(ds), seed);
}

Matrix random_orthonormal(Eigen::Index d, Eigen::Index r, RngStream& rng) {
    if (r > d) throw DimensionError("random_orthonormal: more columns than rows");
    Matrix g(d, r);
    for (Eigen::Index j = 0; j < r; ++j)
        for (Eigen::Index i = 0; i < d; ++i) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(d, r);
    // fix column signs so the draw is Haar-distributed
    const Matrix rr = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < r; ++j)
        if (rr(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

std::filesystem::path with_suffix(const std::filesystem::path& base, std::string_view suffix) {
    return std::filesystem::path(base.string() + std::string(suffix));
}

json to_json(const DomainSpec& s) {
    return {{"domain_id", s.domain_id},       {"gamma", s.gamma},
            {"contrast", s.contrast},         {"texture_freq", s.texture_freq},
            {"texture_amp", s.texture_amp},   {"noise_sigma", s.noise_sigma}};
}

DomainSpec spec_from_json(const json& j) {
    DomainSpec s;
    s.domain_id = j.at("domain_id").get<int>();
    s.gamma = j.at("gamma").get<double>();
    s.contrast = j.at("contrast").get<double>();
    s.texture_freq = j.at("texture_freq").get<double>();
    s.texture_amp = j.at("texture_amp").get<double>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    return s;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
    return rows;
}

Matrix matrix_from_json(const json& j) {
    Matrix m(static_cast<Eigen::Index>(j.size()), j.empty() ? 0 : static_cast<Eigen::Index>(j[0].size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) = vector_from_json(j[static_cast<std::size_t>(i)]).transpose();
    return m;
}

void check_format_version(const json& meta, const std::filesystem::path& where) {
    const int version = meta.value("format_version", -1);
    if (version != kFormatVersion) {
        throw FormatError(fmt::format("{}: format_version {} (expected {})", where.string(), version, kFormatVersion));
    }
}

}  // namespace

void save_dataset(const MultiDomainDataset& dataset, const std::filesystem::path& base) {
    const auto& shape = dataset.shape;
    std::size_t total = 0;
    for (const auto& d : dataset.domains) total += d.size();

    Tensor images{{total, static_cast<std::uint64_t>(shape.height), static_cast<std::uint64_t>(shape.width),
                   static_cast<std::uint64_t>(shape.channels)},
                  Vector(static_cast<Eigen::Index>(total) * shape.size()),
                  Dtype::f64};
    Tensor masks{{total, static_cast<std::uint64_t>(shape.height), static_cast<std::uint64_t>(shape.width)},
                 Vector(static_cast<Eigen::Index>(total) * shape.pixels()),
                 Dtype::f32};
    Eigen::Index n = 0;
    for (const auto& d : dataset.domains) {
        for (std::size_t j = 0; j < d.size(); ++j, ++n) {
            images.data.segment(n * shape.size(), shape.size()) = d.images[j];
            masks.data.segment(n * shape.pixels(), shape.pixels()) = d.masks[j].cast<double>().matrix();
        }
    }
    write_ldtn(with_suffix(base, ".ldtn"), images);
    write_ldtn(with_suffix(base, ".masks.ldtn"), masks);

    json domains = json::array();
    json counts = json::array();
    json split = json::array();
    for (const auto& d : dataset.domains) {
        domains.push_back(to_json(d.spec));
        counts.push_back(d.size());
        split.push_back({{"train", d.train}, {"test", d.test}});
    }
    write_json(with_suffix(base, ".meta.json"),
               {{"format_version", kFormatVersion},
                {"kind", "multi_domain"},
                {"seed", dataset.seed},
                {"image_shape", {shape.height, shape.width, shape.channels}},
                {"domains", domains},
                {"counts", counts},
                {"split", split},
                {"clamp_fraction", dataset.clamp_fraction}});
}

void save_dataset(const GlmVectorDataset& dataset, const std::filesystem::path& base) {
    const auto k = static_cast<std::uint64_t>(dataset.size());
    const auto d = static_cast<std::uint64_t>(dataset.dim());
    Tensor x{{k, d}, Vector(dataset.x.size()), Dtype::f64};
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(x.data.data(), dataset.size(),
                                                                                       dataset.dim()) = dataset.x;
    write_ldtn(with_suffix(base, ".ldtn"), x);
    write_ldtn(with_suffix(base, ".y.ldtn"), Tensor{{k}, dataset.y, Dtype::f64});
    write_json(with_suffix(base, ".meta.json"), {{"format_version", kFormatVersion},
                                                 {"kind", "glm"},
                                                 {"seed", dataset.seed},
                                                 {"family", to_string(dataset.family)},
                                                 {"mu", vector_json(dataset.mu)},
                                                 {"sigma_mat", matrix_json(dataset.sigma_mat)},
                                                 {"precision", matrix_json(dataset.precision)},
                                                 {"theta_star", vector_json(dataset.theta_star)},
                                                 {"counts", {k}}});
}

MultiDomainDataset load_benchmark(const std::filesystem::path& base) {
    const auto meta_path = with_suffix(base, ".meta.json");
    const json meta = read_json(meta_path);
    check_format_version(meta, meta_path);
    if (meta.value("kind", "") != "multi_domain") throw FormatError(fmt::format("{}: not a multi-domain dataset", meta_path.string()));

    MultiDomainDataset ds;
    const auto shape = meta.at("image_shape").get<std::vector<int>>();
    if (shape.size() != 3) throw FormatError("image_shape must have 3 entries");
    ds.shape = {shape[0], shape[1], shape[2]};
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.clamp_fraction = meta.value("clamp_fraction", 0.0);

    const Tensor images = read_ldtn(with_suffix(base, ".ldtn"));
    const Tensor masks = read_ldtn(with_suffix(base, ".masks.ldtn"));
    const auto counts = meta.at("counts").get<std::vector<std::size_t>>();
    std::size_t total = 0;
    for (auto c : counts) total += c;
    if (images.dims.size() != 4 || images.dims[0] != total ||
        images.element_count() != total * static_cast<std::uint64_t>(ds.shape.size())) {
        throw FormatError(fmt::format("{}: image tensor does not match metadata", base.string()));
    }
    if (masks.element_count() != total * static_cast<std::uint64_t>(ds.shape.pixels())) {
        throw FormatError(fmt::format("{}: mask tensor does not match metadata", base.string()));
    }
    const auto& domains = meta.at("domains");
    const auto& split = meta.at("split");
    if (domains.size() != counts.size() || split.size() != counts.size()) {
        throw FormatError(fmt::format("{}: domains/counts/split lengths differ", meta_path.string()));
    }
    Eigen::Index n = 0;
    for (std::size_t di = 0; di < counts.size(); ++di) {
        DomainData dom;
        dom.spec = spec_from_json(domains[di]);
        dom.train = split[di].at("train").get<std::vector<std::size_t>>();
        dom.test = split[di].at("test").get<std::vector<std::size_t>>();
        for (std::size_t j = 0; j < counts[di]; ++j, ++n) {
            dom.images.push_back(images.data.segment(n * ds.shape.size(), ds.shape.size()));
            dom.masks.push_back(masks.data.segment(n * ds.shape.pixels(), ds.shape.pixels()).array().cast<std::uint8_t>());
        }
        ds.domains.push_back(std::move(dom));
    }
    return ds;
}

GlmVectorDataset load_glm_dataset(const std::filesystem::path& base) {
    const auto meta_path = with_suffix(base, ".meta.json");
    const json meta = read_json(meta_path);
    check_format_version(meta, meta_path);
    if (meta.value("kind", "") != "glm") throw FormatError(fmt::format("{}: not a GLM dataset", meta_path.string()));

    GlmVectorDataset ds;
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.family = parse_glm_family(meta.at("family").get<std::string>());
    ds.mu = vector_from_json(meta.at("mu"));
    ds.sigma_mat = matrix_from_json(meta.at("sigma_mat"));
    ds.precision = matrix_from_json(meta.at("precision"));
    ds.theta_star = vector_from_json(meta.at("theta_star"));

    const Tensor x = read_ldtn(with_suffix(base, ".ldtn"));
    const Tensor y = read_ldtn(with_suffix(base, ".y.ldtn"));
    if (x.dims.size() != 2 || y.dims.size() != 1 || x.dims[0] != y.dims[0] ||
        x.dims[1] != static_cast<std::uint64_t>(ds.mu.size())) {
        throw FormatError(fmt::format("{}: tensor shapes do not match metadata", base.string()));
    }
    const auto k = static_cast<Eigen::Index>(x.dims[0]);
    const auto d = static_cast<Eigen::Index>(x.dims[1]);
    ds.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(x.data.data(), k, d);
    ds.y = y.data;
    return ds;
}

AnyDataset load_dataset(const std::filesystem::path& base) {
    const auto meta_path = with_suffix(base, ".meta.json");
    const auto kind = read_json(meta_path).value("kind", "");
    if (kind == "multi_domain") return load_benchmark(base);
    if (kind == "glm") return load_glm_dataset(base);
    throw FormatError(fmt::format("{}: unknown dataset kind \"{}\"", meta_path.string(), kind));
}

}  // namespace langdaug
