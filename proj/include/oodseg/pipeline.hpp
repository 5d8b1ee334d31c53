#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oodseg/adtnet.hpp"
#include "oodseg/datamodel.hpp"
#include "oodseg/metrics.hpp"
#include "oodseg/normalize.hpp"
#include "oodseg/ouafs.hpp"

namespace oodseg::pipeline {

using diffmath::Tape;
using diffmath::Tensor;
using diffmath::Var;

struct LossWeights {
    double detect = 0.5;
    double orth = 0.1;
    double adt = 0.1;
};

struct PipelineConfig {
    NormConfig norm;
    adt::AdtConfig adt;
    LossWeights weights;
    std::filesystem::path adt_params;
    std::filesystem::path fusion_params;

    void validate() const;
};

/// Placeholder for the detector's own loss; always a constant 0.
Var detect_loss_stub(Tape& tape);

/// weights.detect * detect + weights.orth * orth + weights.adt * adt
Var total_loss(const Var& detect, const Var& orth, const Var& adt, const PipelineConfig& config);
double total_loss(double detect, double orth, double adt, const PipelineConfig& config);

struct RefineResult {
    BinaryMask mask;
    adt::ThresholdPair thresholds;
    ScoreMap normalized;
    adt::ProbabilityMap probability;
};

/// boxes -> fg mask -> normalization -> thresholds -> relaxed map -> mask.
/// Errors are rethrown with the failing stage prefixed to the message.
RefineResult refine(const ScoreMap& scores, const BoxSet& boxes, const adt::AdtModel& model,
                    const PipelineConfig& config);

adt::AdtModel load_adt_model(const std::filesystem::path& path);
void save_adt_model(const adt::AdtModel& model, const std::filesystem::path& path);

// Fusion runs on a pooled copy of the score map with a fixed stub encoder.
inline constexpr std::size_t kFusionChannels = 4;
inline constexpr std::size_t kFusionClasses = 3;
inline constexpr std::size_t kFusionLayers = 3;
inline constexpr std::size_t kFusionGrid = 8;

ouafs::FusionParams fusion_layout();
ouafs::FusionParams load_fusion_params(const std::filesystem::path& path);
void save_fusion_params(const ouafs::FusionParams& params, const std::filesystem::path& path);

/// [kFusionGrid^2 x 3] image: block-mean score, row and column coordinates.
Tensor stub_image(const ScoreMap& scores);

struct FusionInputs {
    std::vector<Tensor> features;
    ouafs::UncertaintyMaps uncertainty;
};
FusionInputs fusion_inputs(const ScoreMap& scores, std::uint64_t seed);

struct FusionTrainResult {
    ouafs::FusionParams params;
    std::vector<double> epoch_loss;
};

/// Minimizes the weighted orthogonal loss of the fused stack.
FusionTrainResult train_fusion(std::span<const LabeledScene> dataset, const adt::TrainOptions& options,
                               const LossWeights& weights = {});

struct GradCheckCase {
    std::string name;
    std::uint64_t seed = 0;
    double max_error = 0.0;
};

/// Finite-difference checks of the orthogonal loss (free vectors and the
/// full fused stack), the threshold loss and the weighted total, per seed.
std::vector<GradCheckCase> gradcheck_suite(std::span<const std::uint64_t> seeds);

struct EvalReport {
    std::optional<metrics::PixelReport> pixel;  // empty when gt has one class
    double ap = 0.0;
    metrics::ComponentReport component;  // counts pooled over images
    double f1_image_mean = 0.0;
    std::size_t images = 0;
};

/// Pixel metrics pool every image; `scores` may be empty, in which case the
/// masks themselves are ranked.
EvalReport evaluate(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt,
                    std::span<const ScoreMap> scores, double tau = 0.5);

struct AblationRow {
    double alpha = 0.0;
    NormStrategy strategy = NormStrategy::region_adaptive;
    metrics::PixelReport pixel;  // on the pooled decision margin I_norm - T
    double component_f1 = 0.0;   // mean per-image F1 of the refined masks
    double mean_t_fg = 0.0;
    double mean_t_bg = 0.0;
    bool in_range = true;  // normalized maps and thresholds inside [alpha, alpha + 0.5]
};

/// Trains one model per (alpha, strategy) on `train` and scores it on `test`.
std::vector<AblationRow> ablate_normalization(std::span<const LabeledScene> train, std::span<const LabeledScene> test,
                                              std::span<const double> alphas, const adt::TrainOptions& base,
                                              double tau = 0.5);

}  // namespace oodseg::pipeline
