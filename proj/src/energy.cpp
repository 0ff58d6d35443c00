#include "langdaug/energy.hpp"

#include "conv_ops.hpp"
#include "langdaug/errors.hpp"
#include "langdaug/tensor_io.hpp"

#include <fmt/format.h>

#include <cmath>

namespace langdaug {

using detail::ConvGeometry;

std::string to_string(EnergyKind kind) {
    switch (kind) {
        case EnergyKind::conv: return "conv";
        case EnergyKind::mlp: return "mlp";
        case EnergyKind::quadratic: return "quadratic";
        case EnergyKind::linear: return "linear";
    }
    return "unknown";
}

EnergyKind parse_energy_kind(std::string_view name) {
    if (name == "conv") return EnergyKind::conv;
    if (name == "mlp") return EnergyKind::mlp;
    if (name == "quadratic") return EnergyKind::quadratic;
    if (name == "linear") return EnergyKind::linear;
    throw ConfigError(fmt::format("unknown energy kind \"{}\"", name));
}

namespace {

std::vector<ConvGeometry> conv_layers(const EnergyArch& arch) {
    std::vector<ConvGeometry> layers;
    int h = arch.input_shape[0];
    int w = arch.input_shape[1];
    int c = arch.input_shape[2];
    for (int b = 0; b < arch.conv_blocks; ++b) {
        ConvGeometry g{h, w, c, arch.base_channels << b, 2};
        layers.push_back(g);
        h = g.out_h();
        w = g.out_w();
        c = g.out_c;
    }
    return layers;
}

}  // namespace

EnergyArch EnergyArch::conv_net(int height, int width, int channels, int blocks) {
    EnergyArch a;
    a.kind = EnergyKind::conv;
    a.conv_blocks = blocks;
    a.input_shape = {height, width, channels};
    return a;
}

EnergyArch EnergyArch::mlp_net(int dim, int hidden) {
    EnergyArch a;
    a.kind = EnergyKind::mlp;
    a.hidden_width = hidden;
    a.input_shape = {dim};
    return a;
}

EnergyArch EnergyArch::quadratic_family(int dim) {
    EnergyArch a;
    a.kind = EnergyKind::quadratic;
    a.input_shape = {dim};
    return a;
}

EnergyArch EnergyArch::linear_family(int dim) {
    EnergyArch a;
    a.kind = EnergyKind::linear;
    a.input_shape = {dim};
    return a;
}

void EnergyArch::validate() const {
    if (kind == EnergyKind::conv) {
        if (input_shape.size() != 3) throw ConfigError("conv energy needs input_shape {H, W, C}");
        if (conv_blocks < 1 || conv_blocks > 7) {
            throw ConfigError(fmt::format("conv_blocks must be in 1..7, got {}", conv_blocks));
        }
        if (base_channels < 1) throw ConfigError("base_channels must be positive");
    } else {
        if (input_shape.size() != 1) throw ConfigError(fmt::format("{} energy needs input_shape {{d}}", to_string(kind)));
        if (kind == EnergyKind::mlp && hidden_width < 1) throw ConfigError("hidden_width must be positive");
    }
    for (int d : input_shape)
        if (d < 1) throw ConfigError("input_shape entries must be positive");
}

Eigen::Index EnergyArch::input_size() const {
    Eigen::Index n = 1;
    for (int d : input_shape) n *= d;
    return n;
}

Eigen::Index EnergyArch::param_count() const {
    validate();
    switch (kind) {
        case EnergyKind::conv: {
            Eigen::Index n = 0;
            const auto layers = conv_layers(*this);
            for (const auto& g : layers) n += g.param_count();
            return n + layers.back().out_size() + 1;
        }
        case EnergyKind::mlp: return Eigen::Index{hidden_width} * input_size() + 2 * hidden_width + 1;
        case EnergyKind::quadratic:
        case EnergyKind::linear: return input_size();
    }
    return 0;
}

namespace {

// Shared body of init/random: fill weights with N(0, weight_scale^2 / fan_in), biases with N(0, bias_scale^2).
EnergyParams fill_params(const EnergyArch& arch, RngStream& rng, double weight_scale, double bias_scale) {
    EnergyParams p{arch, Vector::Zero(arch.param_count())};
    Eigen::Index at = 0;
    auto fill = [&](Eigen::Index n, double stddev) {
        for (Eigen::Index i = 0; i < n; ++i) p.theta[at + i] = stddev * rng.normal();
        at += n;
    };
    switch (arch.kind) {
        case EnergyKind::conv: {
            const auto layers = conv_layers(arch);
            for (const auto& g : layers) {
                fill(g.weight_count(), weight_scale / std::sqrt(9.0 * g.in_c));
                fill(g.out_c, bias_scale);
            }
            const auto head = layers.back().out_size();
            fill(head, weight_scale / std::sqrt(static_cast<double>(head)));
            fill(1, bias_scale);
            break;
        }
        case EnergyKind::mlp: {
            const auto d = arch.input_size();
            fill(Eigen::Index{arch.hidden_width} * d, weight_scale / std::sqrt(static_cast<double>(d)));
            fill(arch.hidden_width, bias_scale);
            fill(arch.hidden_width, weight_scale / std::sqrt(static_cast<double>(arch.hidden_width)));
            fill(1, bias_scale);
            break;
        }
        case EnergyKind::quadratic:
        case EnergyKind::linear: fill(arch.input_size(), bias_scale); break;
    }
    return p;
}

}  // namespace

EnergyParams init_energy_params(const EnergyArch& arch, std::uint64_t seed) {
    auto rng = derive_stream(seed, {{"energy_init", static_cast<std::int64_t>(arch.kind)}});
    return fill_params(arch, rng, 1.0, 0.0);
}

EnergyParams random_energy_params(const EnergyArch& arch, RngStream& rng) {
    return fill_params(arch, rng, 1.0, 0.5);
}

namespace {

EnergyEvaluation evaluate_conv(const EnergyParams& params, const Vector& x, bool want_x, bool want_theta) {
    const auto layers = conv_layers(params.arch);
    const double* theta = params.theta.data();

    std::vector<Vector> pre(layers.size());   // pre-activations
    std::vector<Vector> post(layers.size());  // swish outputs
    std::vector<std::ptrdiff_t> offsets(layers.size());
    std::ptrdiff_t at = 0;
    const double* input = x.data();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& g = layers[l];
        offsets[l] = at;
        pre[l].resize(g.out_size());
        detail::conv3x3_forward(g, input, theta + at, theta + at + g.weight_count(), pre[l].data());
        post[l] = pre[l].unaryExpr([](double z) { return swish(z); });
        at += g.param_count();
        input = post[l].data();
    }
    const auto head_n = layers.back().out_size();
    const Eigen::Map<const Vector> head_w(theta + at, head_n);
    EnergyEvaluation out;
    out.energy = head_w.dot(post.back()) + theta[at + head_n];
    if (!std::isfinite(out.energy)) throw NumericError("conv energy: non-finite value");
    if (!want_x && !want_theta) return out;

    if (want_theta) {
        out.grad_params = Vector::Zero(params.theta.size());
        out.grad_params.segment(at, head_n) = post.back();
        out.grad_params[at + head_n] = 1.0;
    }
    Vector grad = head_w;  // dE / d post[l]
    for (std::size_t l = layers.size(); l-- > 0;) {
        const auto& g = layers[l];
        for (Eigen::Index i = 0; i < grad.size(); ++i) grad[i] *= swish_derivative(pre[l][i]);
        const bool need_input = l > 0 || want_x;
        Vector grad_in = need_input ? Vector::Zero(l > 0 ? post[l - 1].size() : x.size()) : Vector();
        double* gw = want_theta ? out.grad_params.data() + offsets[l] : nullptr;
        double* gb = want_theta ? gw + g.weight_count() : nullptr;
        const double* in = l > 0 ? post[l - 1].data() : x.data();
        detail::conv3x3_backward(g, in, theta + offsets[l], grad.data(), need_input ? grad_in.data() : nullptr, gw, gb);
        if (!need_input) break;
        grad = std::move(grad_in);
    }
    if (want_x) out.grad_input = std::move(grad);
    return out;
}

EnergyEvaluation evaluate_mlp(const EnergyParams& params, const Vector& x, bool want_x, bool want_theta) {
    const auto d = params.arch.input_size();
    const Eigen::Index h = params.arch.hidden_width;
    const double* theta = params.theta.data();
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w1(theta, h, d);
    const Eigen::Map<const Vector> b1(theta + h * d, h);
    const Eigen::Map<const Vector> w2(theta + h * d + h, h);
    const double b2 = theta[h * d + 2 * h];

    const Vector z = w1 * x + b1;
    const Vector a = z.unaryExpr([](double v) { return swish(v); });
    EnergyEvaluation out;
    out.energy = w2.dot(a) + b2;
    if (!std::isfinite(out.energy)) throw NumericError("mlp energy: non-finite value");
    if (!want_x && !want_theta) return out;

    const Vector dz = w2.cwiseProduct(z.unaryExpr([](double v) { return swish_derivative(v); }));
    if (want_x) out.grad_input = w1.transpose() * dz;
    if (want_theta) {
        out.grad_params.resize(params.theta.size());
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out.grad_params.data(), h,
                                                                                           d) = dz * x.transpose();
        out.grad_params.segment(h * d, h) = dz;
        out.grad_params.segment(h * d + h, h) = a;
        out.grad_params[h * d + 2 * h] = 1.0;
    }
    return out;
}

}  // namespace

EnergyEvaluation energy_evaluate(const EnergyParams& params, const Vector& x, bool want_grad_input,
                                 bool want_grad_params) {
    const auto& arch = params.arch;
    if (x.size() != arch.input_size()) {
        throw DimensionError(fmt::format("energy: input length {} does not match arch input size {}", x.size(),
                                         arch.input_size()));
    }
    if (params.theta.size() != arch.param_count()) {
        throw DimensionError(fmt::format("energy: theta length {} does not match parameter count {}",
                                         params.theta.size(), arch.param_count()));
    }
    switch (arch.kind) {
        case EnergyKind::conv: return evaluate_conv(params, x, want_grad_input, want_grad_params);
        case EnergyKind::mlp: return evaluate_mlp(params, x, want_grad_input, want_grad_params);
        case EnergyKind::quadratic: {
            const Vector r = x - params.theta;
            EnergyEvaluation out{0.5 * r.squaredNorm(), {}, {}};
            if (want_grad_input) out.grad_input = r;
            if (want_grad_params) out.grad_params = -r;
            return out;
        }
        case EnergyKind::linear: {
            EnergyEvaluation out{params.theta.dot(x), {}, {}};
            if (want_grad_input) out.grad_input = params.theta;
            if (want_grad_params) out.grad_params = x;
            return out;
        }
    }
    throw ConfigError("energy: unknown kind");
}

double energy_forward(const EnergyParams& params, const Vector& x) {
    return energy_evaluate(params, x, false, false).energy;
}

Vector energy_grad_input(const EnergyParams& params, const Vector& x) {
    return energy_evaluate(params, x, true, false).grad_input;
}

Vector energy_grad_params(const EnergyParams& params, const Vector& x) {
    return energy_evaluate(params, x, false, true).grad_params;
}

Vector energy_grad_params_mean(const EnergyParams& params, std::span<const Vector> batch) {
    if (batch.empty()) throw ConfigError("energy_grad_params_mean: empty batch");
    Vector sum = Vector::Zero(params.theta.size());
    for (const auto& x : batch) sum += energy_grad_params(params, x);
    return sum / static_cast<double>(batch.size());
}

double energy_mean(const EnergyParams& params, std::span<const Vector> batch) {
    if (batch.empty()) throw ConfigError("energy_mean: empty batch");
    double sum = 0.0;
    for (const auto& x : batch) sum += energy_forward(params, x);
    return sum / static_cast<double>(batch.size());
}

void save_energy_params(const EnergyParams& params, const std::filesystem::path& base,
                        std::optional<DomainPair> pair) {
    write_ldtn(base.string() + ".ldtn",
               Tensor{{static_cast<std::uint64_t>(params.theta.size())}, params.theta, Dtype::f64});
    nlohmann::json meta{{"format_version", 1},
                        {"kind", "energy_params"},
                        {"arch",
                         {{"kind", to_string(params.arch.kind)},
                          {"conv_blocks", params.arch.conv_blocks},
                          {"base_channels", params.arch.base_channels},
                          {"hidden_width", params.arch.hidden_width},
                          {"input_shape", params.arch.input_shape}}},
                        {"param_count", params.theta.size()},
                        {"checksum", fmt::format("{:016x}", checksum(params.theta))}};
    if (pair) meta["pair"] = {{"source", pair->first}, {"target", pair->second}};
    write_json(base.string() + ".meta.json", meta);
}

std::pair<EnergyParams, std::optional<DomainPair>> load_energy_params(const std::filesystem::path& base) {
    const auto meta = read_json(base.string() + ".meta.json");
    if (meta.value("kind", "") != "energy_params") {
        throw FormatError(fmt::format("{}.meta.json: not an energy parameter file", base.string()));
    }
    const auto& a = meta.at("arch");
    EnergyParams p;
    p.arch.kind = parse_energy_kind(a.at("kind").get<std::string>());
    p.arch.conv_blocks = a.at("conv_blocks").get<int>();
    p.arch.base_channels = a.at("base_channels").get<int>();
    p.arch.hidden_width = a.at("hidden_width").get<int>();
    p.arch.input_shape = a.at("input_shape").get<std::vector<int>>();
    p.theta = read_ldtn(base.string() + ".ldtn").data;
    if (p.theta.size() != p.arch.param_count()) {
        throw FormatError(fmt::format("{}: theta length {} does not match arch ({})", base.string(), p.theta.size(),
                                      p.arch.param_count()));
    }
    std::optional<DomainPair> pair;
    if (meta.contains("pair")) pair = DomainPair{meta["pair"].at("source").get<int>(), meta["pair"].at("target").get<int>()};
    return {std::move(p), pair};
}

}  // namespace langdaug
