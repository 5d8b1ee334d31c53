#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "oodseg/datamodel.hpp"
#include "oodseg/diffmath/optim.hpp"
#include "oodseg/diffmath/tape.hpp"
#include "oodseg/normalize.hpp"

namespace oodseg::adt {

using diffmath::Tape;
using diffmath::Tensor;
using diffmath::Var;

// Region descriptor layout: mean, std, 9 deciles, 16-bin histogram over
// [alpha, alpha + 0.5], then an empty-region flag.
inline constexpr std::size_t kHistogramBins = 16;
inline constexpr std::size_t kStatFeatures = 2 + 9 + kHistogramBins;
inline constexpr std::size_t kDescriptorSize = kStatFeatures + 1;
inline constexpr std::size_t kHiddenUnits = 32;
inline constexpr double kCrossEntropyEps = 1e-7;

using Descriptor = std::array<double, kDescriptorSize>;

enum class RampMode {
    centered,       // clamp((I - T) / delta + 0.5, 0, 1)
    paper_literal,  // clamp((I - T + delta) / delta, 0, 1), both regions
};

enum class DivergenceMode {
    hinge,    // gamma * max(0, margin - |t_fg - t_bg|)
    literal,  // gamma * |t_fg - t_bg|
};

std::string_view to_string(RampMode mode) noexcept;
std::string_view to_string(DivergenceMode mode) noexcept;
/// "centered" | "literal"
RampMode parse_ramp_mode(std::string_view name);
/// "hinge" | "literal"
DivergenceMode parse_divergence_mode(std::string_view name);

struct AdtConfig {
    double delta = 0.1;
    double gamma = 0.1;
    double margin = 0.05;
    RampMode ramp = RampMode::centered;
    DivergenceMode divergence = DivergenceMode::hinge;

    void validate() const;
};

/// Pooled statistics of the normalized scores inside `region`. Features are
/// centred on the range midpoint and scaled so the range maps to [-1, 1].
/// An empty region is described by the whole map with the flag set to 1.
Descriptor region_descriptor(const ScoreMap& norm, const BinaryMask& region, double alpha);

/// Two-layer head: 28 -> 32 (tanh) -> 1, squashed into (alpha, alpha + 0.5).
struct ThresholdPredictor {
    Tensor w1;  // [28 x 32]
    Tensor b1;  // [1 x 32]
    Tensor w2;  // [32 x 1]
    Tensor b2;  // [1 x 1]

    /// Uniform(+-1/sqrt(fan_in)) weights, zero biases, so the initial output
    /// sits near alpha + 0.25.
    static ThresholdPredictor initialize(std::mt19937_64& rng);

    std::vector<Tensor> parameters() const { return {w1, b1, w2, b2}; }
    static ThresholdPredictor from_parameters(std::span<const Tensor> params);
};

struct PredictorVars {
    Var w1, b1, w2, b2;
};

PredictorVars bind(Tape& tape, const ThresholdPredictor& predictor, bool trainable = true);
PredictorVars bind(std::span<const Var> params);

/// Threshold node ([1 x 1]) for one region descriptor.
Var predict_threshold(Tape& tape, const PredictorVars& predictor, const Descriptor& descriptor, double alpha);
double predict_threshold(const ThresholdPredictor& predictor, const Descriptor& descriptor, double alpha);

/// Foreground and background predictors; same architecture, separate weights.
struct AdtModel {
    ThresholdPredictor fg;
    ThresholdPredictor bg;

    static AdtModel initialize(std::uint64_t seed);
    /// fg tensors followed by bg tensors.
    std::vector<Tensor> parameters() const;
    static AdtModel from_parameters(std::span<const Tensor> params);
};

struct ThresholdPair {
    double t_fg = 0.0;
    double t_bg = 0.0;
};

/// t_fg from the descriptor of norm over fg, t_bg from norm over (1 - fg).
ThresholdPair predict_thresholds(const ScoreMap& norm, const BinaryMask& fg, const AdtModel& model, double alpha);

/// Per-pixel anomaly probability in [0, 1].
class ProbabilityMap {
public:
    ProbabilityMap(std::size_t height, std::size_t width, std::vector<double> values);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    ScoreMap as_scoremap() const { return ScoreMap(height_, width_, values_); }

private:
    std::size_t height_;
    std::size_t width_;
    std::vector<double> values_;
};

/// The linear ramp for a single pixel against its region's threshold.
double ramp(double norm_value, double threshold, const AdtConfig& config) noexcept;

ProbabilityMap relaxed_binarize(const ScoreMap& norm, const BinaryMask& fg, const ThresholdPair& t,
                                const AdtConfig& config);
/// Differentiable form; returns an [H*W] node.
Var relaxed_binarize(Tape& tape, const ScoreMap& norm, const BinaryMask& fg, const Var& t_fg, const Var& t_bg,
                     const AdtConfig& config);

/// Label 1 iff P >= 0.5.
BinaryMask hard_segment(const ProbabilityMap& p);

/// CE over fg pixels with target y, plus CE of the background normality
/// probability (1 - P) against (1 - y) over bg pixels, plus the divergence
/// term. Each CE is a mean over its region; an empty region contributes 0.
Var adt_loss(Tape& tape, const Var& p, const BinaryMask& fg, const BinaryMask& gt, const Var& t_fg, const Var& t_bg,
             const AdtConfig& config);
double adt_loss(const ProbabilityMap& p, const BinaryMask& fg, const BinaryMask& gt, const ThresholdPair& t,
                const AdtConfig& config);

struct TrainOptions {
    NormConfig norm;
    AdtConfig adt;
    diffmath::AdamWConfig optim;
    std::size_t epochs = 300;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
};

struct TrainResult {
    AdtModel model;
    std::vector<double> epoch_loss;  // mean adt_loss over the dataset, per epoch
};

/// Fits both predictors on the scenes (boxes give the fg mask). Fully
/// deterministic for a given seed.
TrainResult train_adt(std::span<const LabeledScene> dataset, const TrainOptions& options);

}  // namespace oodseg::adt
