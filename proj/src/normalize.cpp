#include "oodseg/normalize.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "oodseg/diffmath/tape.hpp"
#include "oodseg/errors.hpp"

namespace oodseg {

std::string_view to_string(NormStrategy strategy) noexcept {
    switch (strategy) {
        case NormStrategy::none: return "none";
        case NormStrategy::global_linear: return "global-linear";
        case NormStrategy::global_sigmoid: return "global-sigmoid";
        case NormStrategy::region_separate: return "region-separate";
        case NormStrategy::region_adaptive: return "region-adaptive";
    }
    return "unknown";
}

NormStrategy parse_strategy(std::string_view name) {
    for (NormStrategy s : kAllStrategies) {
        if (to_string(s) == name) return s;
    }
    throw ValidationError("unknown normalization strategy \"" + std::string(name) + "\"");
}

void NormConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 0.5)) {
        throw ValidationError("normalization: alpha " + std::to_string(alpha) + " outside [0, 0.5]");
    }
}

RegionStats region_means(const ScoreMap& map, const BinaryMask& fg) {
    require_same_size(map, fg, "region_means");
    double sum_fg = 0.0, sum_bg = 0.0;
    RegionStats s;
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (fg[i]) {
            sum_fg += map[i];
            ++s.fg_count;
        } else {
            sum_bg += map[i];
            ++s.bg_count;
        }
    }
    const double global = (sum_fg + sum_bg) / static_cast<double>(map.size());
    s.mu_fg = s.fg_count ? sum_fg / static_cast<double>(s.fg_count) : global;
    s.mu_bg = s.bg_count ? sum_bg / static_cast<double>(s.bg_count) : global;
    return s;
}

ScoreMap arns_normalize(const ScoreMap& map, const BinaryMask& fg, double alpha) {
    NormConfig{alpha, NormStrategy::region_adaptive}.validate();
    const RegionStats stats = region_means(map, fg);
    std::vector<double> out(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
        const double mu = fg[i] ? stats.mu_fg : stats.mu_bg;
        out[i] = 0.5 * diffmath::sigmoid(map[i] - mu) + alpha;
    }
    return ScoreMap(map.height(), map.width(), std::move(out));
}

namespace {

// Min-max rescale of the selected pixels onto [alpha, alpha + 0.5].
void rescale_min_max(const ScoreMap& map, const std::vector<bool>& select, double alpha, std::vector<double>& out) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (!select[i]) continue;
        lo = std::min(lo, map[i]);
        hi = std::max(hi, map[i]);
    }
    if (lo > hi) return;  // empty selection
    const double span = hi - lo;
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (!select[i]) continue;
        out[i] = span > 0.0 ? alpha + 0.5 * (map[i] - lo) / span : alpha + 0.25;
    }
}

}  // namespace

ScoreMap normalize_with_strategy(const ScoreMap& map, const BinaryMask& fg, const NormConfig& config) {
    config.validate();
    require_same_size(map, fg, "normalize");
    const double alpha = config.alpha;
    switch (config.strategy) {
        case NormStrategy::none: return map;
        case NormStrategy::region_adaptive: return arns_normalize(map, fg, alpha);
        case NormStrategy::global_linear: {
            std::vector<double> out(map.size());
            rescale_min_max(map, std::vector<bool>(map.size(), true), alpha, out);
            return ScoreMap(map.height(), map.width(), std::move(out));
        }
        case NormStrategy::global_sigmoid: {
            double mean = 0.0;
            for (double v : map.scores()) mean += v;
            mean /= static_cast<double>(map.size());
            std::vector<double> out(map.size());
            for (std::size_t i = 0; i < map.size(); ++i) out[i] = 0.5 * diffmath::sigmoid(map[i] - mean) + alpha;
            return ScoreMap(map.height(), map.width(), std::move(out));
        }
        case NormStrategy::region_separate: {
            std::vector<bool> in_fg(map.size()), in_bg(map.size());
            for (std::size_t i = 0; i < map.size(); ++i) {
                in_fg[i] = fg[i];
                in_bg[i] = !fg[i];
            }
            std::vector<double> out(map.size());
            rescale_min_max(map, in_fg, alpha, out);
            rescale_min_max(map, in_bg, alpha, out);
            return ScoreMap(map.height(), map.width(), std::move(out));
        }
    }
    throw ValidationError("normalize: unhandled strategy");
}

}  // namespace oodseg
