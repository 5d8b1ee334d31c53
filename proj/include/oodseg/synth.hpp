#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oodseg/datamodel.hpp"
#include "oodseg/normalize.hpp"

namespace oodseg::synth {

enum class ShapeFamily { rectangle, ellipse };

std::string_view to_string(ShapeFamily shape) noexcept;
ShapeFamily parse_shape(std::string_view name);

/// Scene family. The defaults produce the biased family: the background gets
/// a vertical ramp `bias_amplitude * (1 - y / (H - 1))`, strongest on the top
/// row, so top background rivals bottom anomalies.
struct SceneSpec {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t count = 250;  // scenes written by gen-synth
    std::size_t min_objects = 1;
    std::size_t max_objects = 3;
    std::size_t min_extent = 6;
    std::size_t max_extent = 14;
    ShapeFamily shape = ShapeFamily::ellipse;
    double anomaly_mean = 2.0;
    double anomaly_std = 0.5;
    double background_mean = 0.0;
    double background_std = 0.5;
    double bias_amplitude = 2.0;
    std::size_t box_expand = 3;  // each side grows by 0..box_expand px
    std::size_t box_shift = 0;   // box offset by -box_shift..box_shift px per axis
    double drop_probability = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
};

/// key=value lines; `#` starts a comment. Unknown keys are rejected.
SceneSpec parse_spec(std::string_view text, const std::string& origin = "<spec>");
SceneSpec read_spec(const std::filesystem::path& path);
std::string format_spec(const SceneSpec& spec);

struct SynthSample {
    ScoreMap scores;
    BinaryMask gt;
    BoxSet boxes;              // jittered detections that survived the drop
    std::vector<Box> objects;  // tight bounds of each gt object
    std::vector<bool> dropped; // per object: its detection was dropped

    LabeledScene scene() const { return LabeledScene{scores, gt, boxes}; }
};

/// One scene from `spec.seed`.
SynthSample generate_scene(const SceneSpec& spec);

/// Seed of scene `index` in a dataset generated from `base_seed`.
std::uint64_t scene_seed(std::uint64_t base_seed, std::size_t index) noexcept;

/// `count` scenes, scene i generated with scene_seed(spec.seed, i).
std::vector<SynthSample> generate_dataset(const SceneSpec& spec, std::size_t count);

/// Writes `<id>.scores`, `<id>.gt`, `<id>.boxes` with ids scene_0000, ...
void write_dataset(std::span<const SynthSample> samples, const std::filesystem::path& dir);

inline constexpr double kGridResolution = 0.005;

struct GlobalOracle {
    double threshold = 0.0;
    double score = 0.0;  // mean per-image component F1
};

/// Grid search over raw scores, thresholds min + j * resolution up to one
/// step past the maximum, pixel positive iff score >= threshold. Ties go to
/// the middle of the first best run of grid points.
GlobalOracle best_global_threshold(std::span<const LabeledScene> samples, double tau = 0.5,
                                   double resolution = kGridResolution);

struct RegionOracle {
    std::optional<double> t_fg;  // empty when no sample has a foreground
    std::optional<double> t_bg;  // empty when no sample has a background
    double score = 0.0;
};

/// Searches (t_fg, t_bg) on normalized maps over [alpha, alpha + 0.5]. The
/// diagonal t_fg = t_bg is searched first, then each threshold is swept with
/// the other held fixed until neither sweep improves.
RegionOracle best_region_thresholds(std::span<const LabeledScene> samples, const NormConfig& norm = {},
                                    double tau = 0.5, double resolution = kGridResolution);

/// Mean per-image component F1 of per-region thresholding on normalized maps.
double region_threshold_score(std::span<const ScoreMap> normalized, std::span<const BinaryMask> fg,
                              std::span<const BinaryMask> gt, double t_fg, double t_bg, double tau = 0.5);

}  // namespace oodseg::synth
