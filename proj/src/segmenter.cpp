#include "langdaug/segmenter.hpp"

#include "conv_ops.hpp"
#include "langdaug/errors.hpp"

#include <fmt/format.h>

#include <cmath>

namespace langdaug {

using detail::ConvGeometry;
using detail::sigmoid;

namespace {

struct SegLayout {
    ConvGeometry conv1;
    ConvGeometry conv2;
    std::ptrdiff_t conv2_at;
    std::ptrdiff_t head_at;
    std::ptrdiff_t total;
};

SegLayout layout(const SegArch& arch) {
    const auto& s = arch.shape;
    SegLayout l{{s.height, s.width, s.channels, arch.width, 1}, {s.height, s.width, arch.width, arch.width, 1}, 0, 0, 0};
    l.conv2_at = l.conv1.param_count();
    l.head_at = l.conv2_at + l.conv2.param_count();
    l.total = l.head_at + arch.width + 1;
    return l;
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct Forward {
    Vector z1, a1, z2, a2, logits;
};

Forward forward(const SegModel& model, const Vector& image, const SegLayout& l) {
    if (image.size() != model.arch.shape.size()) {
        throw DimensionError(fmt::format("segmenter: image length {} does not match shape {}", image.size(),
                                         model.arch.shape.size()));
    }
    if (model.theta.size() != l.total) throw DimensionError("segmenter: theta length does not match arch");
    const double* th = model.theta.data();
    const auto px = model.arch.shape.pixels();
    const int w = model.arch.width;
    Forward f;
    f.z1.resize(l.conv1.out_size());
    detail::conv3x3_forward(l.conv1, image.data(), th, th + l.conv1.weight_count(), f.z1.data());
    f.a1 = f.z1.unaryExpr([](double z) { return swish(z); });
    f.z2.resize(l.conv2.out_size());
    detail::conv3x3_forward(l.conv2, f.a1.data(), th + l.conv2_at, th + l.conv2_at + l.conv2.weight_count(), f.z2.data());
    f.a2 = f.z2.unaryExpr([](double z) { return swish(z); });
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> a2(f.a2.data(), px, w);
    const Eigen::Map<const Vector> head(th + l.head_at, w);
    f.logits = (a2 * head).array() + th[l.head_at + w];
    return f;
}

}  // namespace

Eigen::Index SegArch::param_count() const { return layout(*this).total; }

SegModel init_seg_model(const SegArch& arch, std::uint64_t seed) {
    const auto l = layout(arch);
    SegModel m{arch, Vector::Zero(l.total)};
    auto rng = derive_stream(seed, {{"seg_init", 0}});
    auto fill = [&](std::ptrdiff_t at, std::ptrdiff_t n, double stddev) {
        for (std::ptrdiff_t i = 0; i < n; ++i) m.theta[at + i] = stddev * rng.normal();
    };
    fill(0, l.conv1.weight_count(), 1.0 / std::sqrt(9.0 * arch.shape.channels));
    fill(l.conv2_at, l.conv2.weight_count(), 1.0 / std::sqrt(9.0 * arch.width));
    fill(l.head_at, arch.width, 1.0 / std::sqrt(static_cast<double>(arch.width)));
    return m;
}

Vector seg_logits(const SegModel& model, const Vector& image) { return forward(model, image, layout(model.arch)).logits; }

Mask predict_mask(const SegModel& model, const Vector& image, double threshold) {
    const Vector logits = seg_logits(model, image);
    Mask out(logits.size());
    for (Eigen::Index i = 0; i < logits.size(); ++i) out[i] = sigmoid(logits[i]) >= threshold ? 1 : 0;
    return out;
}

SegLoss seg_loss(const SegModel& model, const Vector& image, const Mask& mask, bool want_grad) {
    const auto l = layout(model.arch);
    const auto px = model.arch.shape.pixels();
    if (mask.size() != px) throw DimensionError("seg_loss: mask does not match image shape");
    const Forward f = forward(model, image, l);

    const Vector y = mask.cast<double>().matrix();
    const Vector p = f.logits.unaryExpr([](double z) { return sigmoid(z); });
    SegLoss out;
    double bce = 0.0;
    for (Eigen::Index i = 0; i < px; ++i) bce += softplus(f.logits[i]) - y[i] * f.logits[i];
    out.bce = bce / static_cast<double>(px);
    const double num = 2.0 * p.dot(y) + 1.0;
    const double den = p.sum() + y.sum() + 1.0;
    out.dice_loss = 1.0 - num / den;
    out.loss = out.bce + out.dice_loss;
    if (!std::isfinite(out.loss)) throw NumericError("seg_loss: non-finite loss");
    if (!want_grad) return out;

    // dL/dlogit
    Vector g(px);
    for (Eigen::Index i = 0; i < px; ++i) {
        const double d_dice_dp = -(2.0 * y[i] * den - num) / (den * den);
        g[i] = (p[i] - y[i]) / static_cast<double>(px) + d_dice_dp * p[i] * (1.0 - p[i]);
    }

    const int w = model.arch.width;
    const double* th = model.theta.data();
    out.grad = Vector::Zero(l.total);
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> a2(f.a2.data(), px, w);
    const Eigen::Map<const Vector> head(th + l.head_at, w);
    out.grad.segment(l.head_at, w) = a2.transpose() * g;
    out.grad[l.head_at + w] = g.sum();

    Vector dz2(px * w);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(dz2.data(), px, w) =
        g * head.transpose();
    for (Eigen::Index i = 0; i < dz2.size(); ++i) dz2[i] *= swish_derivative(f.z2[i]);

    Vector da1 = Vector::Zero(f.a1.size());
    double* grad = out.grad.data();
    detail::conv3x3_backward(l.conv2, f.a1.data(), th + l.conv2_at, dz2.data(), da1.data(), grad + l.conv2_at,
                             grad + l.conv2_at + l.conv2.weight_count());
    for (Eigen::Index i = 0; i < da1.size(); ++i) da1[i] *= swish_derivative(f.z1[i]);
    detail::conv3x3_backward(l.conv1, image.data(), th, da1.data(), nullptr, grad, grad + l.conv1.weight_count());
    return out;
}

LabeledImages labeled_from(const AugmentedDataset& aug) {
    LabeledImages out;
    out.images.reserve(aug.size());
    out.masks.reserve(aug.size());
    for (const auto& e : aug.entries) {
        out.images.push_back(e.image);
        out.masks.push_back(e.mask);
    }
    return out;
}

SegModel train_segmenter(const LabeledImages& source, const LabeledImages& augmented, const ImageShape& shape,
                         const SegTrainConfig& config) {
    if (config.epochs < 0) throw ConfigError("train_segmenter: epochs must be >= 0");
    if (source.size() == 0) throw ConfigError("train_segmenter: empty source set");
    SegModel model = init_seg_model({shape, config.width}, config.seed);
    AdamState adam = AdamState::fresh(model.theta.size(), config.adam);
    long batch_id = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto stream = assemble_training_stream(source.size(), augmented.size(), config.mix_ratio,
                                                     config.batch_size, config.seed, epoch);
        for (const auto& batch : stream) {
            Vector grad = Vector::Zero(model.theta.size());
            for (const auto& item : batch) {
                const auto& set = item.augmented ? augmented : source;
                const auto loss = seg_loss(model, set.images[item.index], set.masks[item.index], true);
                grad += loss.grad;
            }
            grad /= static_cast<double>(batch.size());
            if (!grad.allFinite()) throw TrainingError(fmt::format("segmenter: non-finite loss at batch {}", batch_id), batch_id);
            adam_update(model.theta, grad, adam);
            ++batch_id;
        }
    }
    return model;
}

EvalResult evaluate_segmenter(const SegModel& model, std::span<const Vector> images, std::span<const Mask> masks,
                              double threshold) {
    if (images.size() != masks.size()) throw DimensionError("evaluate_segmenter: image/mask counts differ");
    EvalResult r;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Mask pred = predict_mask(model, images[i], threshold);
        r.dice.push_back(dice(pred, masks[i]));
        r.iou.push_back(iou(pred, masks[i]));
    }
    if (!images.empty()) {
        r.mean_dice = Eigen::Map<const Vector>(r.dice.data(), static_cast<Eigen::Index>(r.dice.size())).mean();
        r.mean_iou = Eigen::Map<const Vector>(r.iou.data(), static_cast<Eigen::Index>(r.iou.size())).mean();
    }
    return r;
}

}  // namespace langdaug
