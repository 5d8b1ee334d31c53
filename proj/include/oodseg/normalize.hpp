#pragma once

#include <array>
#include <cstddef>
#include <string_view>

#include "oodseg/datamodel.hpp"

namespace oodseg {

enum class NormStrategy {
    none,
    global_linear,
    global_sigmoid,
    region_separate,
    region_adaptive,
};

inline constexpr std::array<NormStrategy, 5> kAllStrategies = {
    NormStrategy::none,          NormStrategy::global_linear,   NormStrategy::global_sigmoid,
    NormStrategy::region_separate, NormStrategy::region_adaptive,
};

std::string_view to_string(NormStrategy strategy) noexcept;
/// Accepts the CLI names: none, global-linear, global-sigmoid,
/// region-separate, region-adaptive.
NormStrategy parse_strategy(std::string_view name);

struct NormConfig {
    double alpha = 0.3;
    NormStrategy strategy = NormStrategy::region_adaptive;

    /// Throws ValidationError unless alpha is in [0, 0.5].
    void validate() const;
};

struct RegionStats {
    double mu_fg = 0.0;
    double mu_bg = 0.0;
    std::size_t fg_count = 0;
    std::size_t bg_count = 0;

    bool fg_empty() const noexcept { return fg_count == 0; }
    bool bg_empty() const noexcept { return bg_count == 0; }
};

/// Mean score inside and outside `fg`. An empty region takes the global
/// mean and is reported with a zero count.
RegionStats region_means(const ScoreMap& map, const BinaryMask& fg);

/// I_norm = 0.5 * sigmoid(I - mu_region) + alpha, where the region is picked
/// per pixel by `fg`. Output lies in [alpha, alpha + 0.5].
ScoreMap arns_normalize(const ScoreMap& map, const BinaryMask& fg, double alpha);

/// Applies one of the normalization strategies:
///   none             identity
///   global-linear    min-max of the whole map onto [alpha, alpha + 0.5]
///   global-sigmoid   0.5 * sigmoid(I - global mean) + alpha
///   region-separate  min-max per region onto [alpha, alpha + 0.5]
///   region-adaptive  arns_normalize
/// A constant input under min-max maps to the midpoint alpha + 0.25.
ScoreMap normalize_with_strategy(const ScoreMap& map, const BinaryMask& fg, const NormConfig& config);

}  // namespace oodseg
