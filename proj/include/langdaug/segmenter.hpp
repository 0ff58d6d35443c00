#pragma once

// Small per-pixel segmenter (two 3x3 swish convs and a 1x1 logit head),
// overlap metrics, and the ERM training loop over mixed source/Langevin data.

#include "langdaug/augment.hpp"
#include "langdaug/numerics.hpp"
#include "langdaug/synth.hpp"

#include <span>
#include <string>
#include <vector>

namespace langdaug {

template <typename DerivedA, typename DerivedB>
void require_same_shape(const Eigen::ArrayBase<DerivedA>& a, const Eigen::ArrayBase<DerivedB>& b) {
    if (a.size() != b.size()) throw DimensionError("mask shapes differ");
}

/// 2|a n b| / (|a| + |b|); 1 when both masks are empty.
template <typename DerivedA, typename DerivedB>
double dice(const Eigen::ArrayBase<DerivedA>& a, const Eigen::ArrayBase<DerivedB>& b) {
    require_same_shape(a, b);
    const double inter = ((a != 0) && (b != 0)).count();
    const double total = static_cast<double>((a != 0).count() + (b != 0).count());
    return total == 0.0 ? 1.0 : 2.0 * inter / total;
}

/// |a n b| / |a u b|; 1 when both masks are empty.
template <typename DerivedA, typename DerivedB>
double iou(const Eigen::ArrayBase<DerivedA>& a, const Eigen::ArrayBase<DerivedB>& b) {
    require_same_shape(a, b);
    const double inter = ((a != 0) && (b != 0)).count();
    const double uni = ((a != 0) || (b != 0)).count();
    return uni == 0.0 ? 1.0 : inter / uni;
}

struct SegArch {
    ImageShape shape;
    int width = 8;

    Eigen::Index param_count() const;
};

struct SegModel {
    SegArch arch;
    Vector theta;
};

SegModel init_seg_model(const SegArch& arch, std::uint64_t seed);

/// Per-pixel logits, length H*W.
Vector seg_logits(const SegModel& model, const Vector& image);

Mask predict_mask(const SegModel& model, const Vector& image, double threshold = 0.5);

struct SegLoss {
    double loss = 0.0;  // bce + dice_loss
    double bce = 0.0;
    double dice_loss = 0.0;
    Vector grad;  // empty unless requested
};

/// Mean pixel binary cross-entropy plus (1 - soft Dice) with smoothing 1.
SegLoss seg_loss(const SegModel& model, const Vector& image, const Mask& mask, bool want_grad);

struct LabeledImages {
    std::vector<Vector> images;
    std::vector<Mask> masks;

    std::size_t size() const { return images.size(); }
};

LabeledImages labeled_from(const AugmentedDataset& aug);

struct SegTrainConfig {
    int epochs = 30;
    int batch_size = 8;
    double mix_ratio = 0.0;
    AdamHyper adam{0.01, 0.9, 0.99, 1e-8};
    std::uint64_t seed = 0;
    int width = 8;
};

/// Adam on the batch-mean loss over assemble_training_stream batches, one stream per epoch.
SegModel train_segmenter(const LabeledImages& source, const LabeledImages& augmented, const ImageShape& shape,
                         const SegTrainConfig& config);

struct EvalResult {
    int domain_id = 0;
    std::uint64_t seed = 0;
    std::string config_checksum;
    std::vector<double> dice;
    std::vector<double> iou;
    double mean_dice = 0.0;
    double mean_iou = 0.0;
};

EvalResult evaluate_segmenter(const SegModel& model, std::span<const Vector> images, std::span<const Mask> masks,
                              double threshold = 0.5);

}  // namespace langdaug
