#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "oodseg/datamodel.hpp"

namespace oodseg::metrics {

struct PixelReport {
    double ap = 0.0;
    double auroc = 0.0;
    double fpr95 = 0.0;
};

/// 8-connected component labels; 0 is background, components are numbered
/// 1..count in row-major order of their first pixel.
struct ComponentLabeling {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint32_t> ids;
    std::uint32_t count = 0;

    std::uint32_t at(std::size_t y, std::size_t x) const { return ids[y * width + x]; }
};

struct ComponentReport {
    double tau = 0.5;
    std::size_t tp = 0;
    std::size_t fn = 0;
    std::size_t fp = 0;
    double mean_siou = 0.0;  // over gt components, 0 when there are none
    double mean_ppv = 0.0;   // over predicted components, 0 when there are none
    double f1 = 0.0;
    double f1_mean = 0.0;  // F1 averaged over tau in {0.25, 0.30, ..., 0.75}
};

/// The eleven overlap thresholds behind ComponentReport::f1_mean.
std::array<double, 11> tau_sweep() noexcept;

ComponentLabeling connected_components(const BinaryMask& mask);

/// |k n K(k)| / |(k u K(k)) \ A(k)|: K(k) is the union of predicted
/// components touching gt component k, A(k) the pixels of all other gt
/// components.
double siou(std::uint32_t gt_component, const ComponentLabeling& pred, const ComponentLabeling& gt);

/// Fraction of a predicted component lying on ground truth.
double ppv(std::uint32_t pred_component, const ComponentLabeling& pred, const ComponentLabeling& gt);

/// 2 TP / (2 TP + FN + FP); 1 when all counts are zero.
double f1_from_counts(std::size_t tp, std::size_t fn, std::size_t fp) noexcept;

/// TP: gt components with sIoU > tau. FN: the remaining gt components.
/// FP: predicted components with PPV <= tau.
ComponentReport component_f1(const BinaryMask& pred, const BinaryMask& gt, double tau = 0.5);
ComponentReport component_f1(const ComponentLabeling& pred, const ComponentLabeling& gt, double tau = 0.5);

// Pixel-level ranking metrics. Equal scores form one threshold group, so the
// results do not depend on the order of tied pixels.

/// Step-wise area under the precision-recall curve. With a single class the
/// result is the positive rate (1 or 0).
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);
/// Trapezoidal area under the ROC curve. Needs both classes.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);
/// FPR at the first (highest) threshold where TPR reaches 0.95. Needs both
/// classes.
double fpr_at_95_tpr(std::span<const double> scores, std::span<const std::uint8_t> labels);

PixelReport pixel_metrics(std::span<const double> scores, std::span<const std::uint8_t> labels);
PixelReport pixel_metrics(const ScoreMap& scores, const BinaryMask& gt);

}  // namespace oodseg::metrics
