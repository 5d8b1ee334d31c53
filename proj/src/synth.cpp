#include "oodseg/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "oodseg/errors.hpp"
#include "oodseg/io.hpp"
#include "oodseg/metrics.hpp"

namespace oodseg::synth {

std::string_view to_string(ShapeFamily shape) noexcept {
    return shape == ShapeFamily::rectangle ? "rectangle" : "ellipse";
}

ShapeFamily parse_shape(std::string_view name) {
    if (name == "rectangle") return ShapeFamily::rectangle;
    if (name == "ellipse") return ShapeFamily::ellipse;
    throw ValidationError("unknown shape family '" + std::string(name) + "' (expected rectangle or ellipse)");
}

void SceneSpec::validate() const {
    if (height == 0 || width == 0) throw ValidationError("scene spec: dimensions must be positive");
    if (min_objects > max_objects) throw ValidationError("scene spec: min_objects exceeds max_objects");
    if (min_extent == 0 || min_extent > max_extent) {
        throw ValidationError("scene spec: need 0 < min_extent <= max_extent");
    }
    if (!(anomaly_std > 0.0) || !(background_std > 0.0)) throw ValidationError("scene spec: stds must be positive");
    for (double v : {anomaly_mean, anomaly_std, background_mean, background_std, bias_amplitude}) {
        if (!std::isfinite(v)) throw ValidationError("scene spec: non-finite distribution parameter");
    }
    if (!(drop_probability >= 0.0 && drop_probability <= 1.0)) {
        throw ValidationError("scene spec: drop_probability must be in [0, 1]");
    }
}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(std::string_view value, std::string_view key, const std::string& origin, std::size_t line) {
    T out{};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
        throw ParseError(ParseErrorKind::invalid_value, origin,
                         "line " + std::to_string(line) + ": bad value '" + std::string(value) + "' for " +
                             std::string(key));
    }
    return out;
}

}  // namespace

SceneSpec parse_spec(std::string_view text, const std::string& origin) {
    SceneSpec spec;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ParseError(ParseErrorKind::invalid_value, origin,
                             "line " + std::to_string(line_no) + ": expected key=value");
        }
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));
        auto size = [&] { return parse_number<std::size_t>(value, key, origin, line_no); };
        auto real = [&] { return parse_number<double>(value, key, origin, line_no); };
        if (key == "height") spec.height = size();
        else if (key == "width") spec.width = size();
        else if (key == "count") spec.count = size();
        else if (key == "min_objects") spec.min_objects = size();
        else if (key == "max_objects") spec.max_objects = size();
        else if (key == "min_extent") spec.min_extent = size();
        else if (key == "max_extent") spec.max_extent = size();
        else if (key == "shape") {
            try {
                spec.shape = parse_shape(value);
            } catch (const ValidationError& e) {
                throw ParseError(ParseErrorKind::invalid_value, origin, e.what());
            }
        }
        else if (key == "anomaly_mean") spec.anomaly_mean = real();
        else if (key == "anomaly_std") spec.anomaly_std = real();
        else if (key == "background_mean") spec.background_mean = real();
        else if (key == "background_std") spec.background_std = real();
        else if (key == "bias_amplitude") spec.bias_amplitude = real();
        else if (key == "box_expand") spec.box_expand = size();
        else if (key == "box_shift") spec.box_shift = size();
        else if (key == "drop_probability") spec.drop_probability = real();
        else if (key == "seed") spec.seed = parse_number<std::uint64_t>(value, key, origin, line_no);
        else {
            throw ParseError(ParseErrorKind::invalid_value, origin,
                             "line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
        }
    }
    spec.validate();
    return spec;
}

SceneSpec read_spec(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(ParseErrorKind::io, path.string(), "cannot open for reading");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_spec(ss.str(), path.string());
}

std::string format_spec(const SceneSpec& spec) {
    auto real = [](double v) {
        char buf[64];
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, res.ptr);
    };
    std::ostringstream out;
    out << "height=" << spec.height << "\nwidth=" << spec.width << "\ncount=" << spec.count
        << "\nmin_objects=" << spec.min_objects << "\nmax_objects=" << spec.max_objects
        << "\nmin_extent=" << spec.min_extent << "\nmax_extent=" << spec.max_extent << "\nshape=" << to_string(spec.shape)
        << "\nanomaly_mean=" << real(spec.anomaly_mean) << "\nanomaly_std=" << real(spec.anomaly_std)
        << "\nbackground_mean=" << real(spec.background_mean) << "\nbackground_std=" << real(spec.background_std)
        << "\nbias_amplitude=" << real(spec.bias_amplitude) << "\nbox_expand=" << spec.box_expand
        << "\nbox_shift=" << spec.box_shift << "\ndrop_probability=" << real(spec.drop_probability)
        << "\nseed=" << spec.seed << "\n";
    return out.str();
}

namespace {

constexpr int kPlacementRetries = 1000;

struct Rect {
    int x0, y0, x1, y1;
};

bool separated(const Rect& a, const Rect& b) {
    // One free pixel between bounding boxes keeps objects from touching
    // under 8-connectivity.
    return a.x1 + 1 <= b.x0 || b.x1 + 1 <= a.x0 || a.y1 + 1 <= b.y0 || b.y1 + 1 <= a.y0;
}

}  // namespace

SynthSample generate_scene(const SceneSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const int h = static_cast<int>(spec.height), w = static_cast<int>(spec.width);

    const std::size_t n_objects =
        std::uniform_int_distribution<std::size_t>(spec.min_objects, spec.max_objects)(rng);
    std::vector<Rect> rects;
    for (std::size_t k = 0; k < n_objects; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
            std::uniform_int_distribution<int> extent(static_cast<int>(spec.min_extent),
                                                      static_cast<int>(spec.max_extent));
            const int ow = std::min(extent(rng), w), oh = std::min(extent(rng), h);
            const int x0 = std::uniform_int_distribution<int>(0, w - ow)(rng);
            const int y0 = std::uniform_int_distribution<int>(0, h - oh)(rng);
            const Rect r{x0, y0, x0 + ow, y0 + oh};
            if (std::all_of(rects.begin(), rects.end(), [&](const Rect& o) { return separated(r, o); })) {
                rects.push_back(r);
                placed = true;
            }
        }
        if (!placed) {
            throw Error("synth.placement", "could not place object " + std::to_string(k + 1) + " of " +
                                               std::to_string(n_objects) + " without overlap after " +
                                               std::to_string(kPlacementRetries) + " attempts");
        }
    }

    std::vector<std::uint8_t> gt(spec.height * spec.width, 0);
    std::vector<Box> objects;
    for (const Rect& r : rects) {
        const double cx = 0.5 * (r.x0 + r.x1), cy = 0.5 * (r.y0 + r.y1);
        const double rx = 0.5 * (r.x1 - r.x0), ry = 0.5 * (r.y1 - r.y0);
        Box tight{r.x1, r.y1, r.x0, r.y0, 1.0};
        for (int y = r.y0; y < r.y1; ++y) {
            for (int x = r.x0; x < r.x1; ++x) {
                bool inside = true;
                if (spec.shape == ShapeFamily::ellipse) {
                    const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
                    inside = dx * dx + dy * dy <= 1.0;
                }
                if (!inside) continue;
                gt[static_cast<std::size_t>(y) * spec.width + static_cast<std::size_t>(x)] = 1;
                tight.x0 = std::min(tight.x0, x);
                tight.y0 = std::min(tight.y0, y);
                tight.x1 = std::max(tight.x1, x + 1);
                tight.y1 = std::max(tight.y1, y + 1);
            }
        }
        objects.push_back(tight);
    }

    std::normal_distribution<double> anomaly(spec.anomaly_mean, spec.anomaly_std);
    std::normal_distribution<double> background(spec.background_mean, spec.background_std);
    std::vector<double> scores(gt.size());
    for (std::size_t y = 0; y < spec.height; ++y) {
        const double bias =
            spec.height > 1 ? spec.bias_amplitude * (1.0 - static_cast<double>(y) / static_cast<double>(spec.height - 1))
                            : spec.bias_amplitude;
        for (std::size_t x = 0; x < spec.width; ++x) {
            const std::size_t i = y * spec.width + x;
            scores[i] = (gt[i] ? anomaly(rng) : background(rng)) + bias;
        }
    }

    std::vector<Box> boxes;
    std::vector<bool> dropped;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> confidence(0.5, 1.0);
    const int expand = static_cast<int>(spec.box_expand), shift = static_cast<int>(spec.box_shift);
    for (const Box& o : objects) {
        std::uniform_int_distribution<int> grow(0, expand);
        std::uniform_int_distribution<int> offset(-shift, shift);
        const int l = grow(rng), t = grow(rng), r = grow(rng), b = grow(rng);
        // The offset never moves the box clear of its object.
        const int sx = std::clamp(offset(rng), -(o.width() + r - 1), o.width() + l - 1);
        const int sy = std::clamp(offset(rng), -(o.height() + b - 1), o.height() + t - 1);
        const double conf = confidence(rng);
        const bool drop = unit(rng) < spec.drop_probability;
        dropped.push_back(drop);
        if (drop) continue;
        Box box{std::max(0, o.x0 - l + sx), std::max(0, o.y0 - t + sy), std::min(w, o.x1 + r + sx),
                std::min(h, o.y1 + b + sy), conf};
        boxes.push_back(box);
    }

    return SynthSample{ScoreMap(spec.height, spec.width, std::move(scores)),
                       BinaryMask(spec.height, spec.width, std::move(gt)), BoxSet(std::move(boxes)),
                       std::move(objects), std::move(dropped)};
}

std::uint64_t scene_seed(std::uint64_t base_seed, std::size_t index) noexcept {
    // splitmix64 finalizer over (base, index)
    std::uint64_t z = base_seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::vector<SynthSample> generate_dataset(const SceneSpec& spec, std::size_t count) {
    std::vector<SynthSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        SceneSpec s = spec;
        s.seed = scene_seed(spec.seed, i);
        out.push_back(generate_scene(s));
    }
    return out;
}

void write_dataset(std::span<const SynthSample> samples, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ParseError(ParseErrorKind::io, dir.string(), "cannot create directory: " + ec.message());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "scene_%04zu", i);
        io::write_scoremap(samples[i].scores, dir / (std::string(id) + ".scores"));
        io::write_mask(samples[i].gt, dir / (std::string(id) + ".gt"));
        io::write_boxes(samples[i].boxes, dir / (std::string(id) + ".boxes"));
    }
}

namespace {

std::size_t first_best_middle(const std::vector<double>& values) {
    const double best = *std::max_element(values.begin(), values.end());
    std::size_t first = 0;
    while (values[first] != best) ++first;
    std::size_t last = first;
    while (last + 1 < values.size() && values[last + 1] == best) ++last;
    return first + (last - first) / 2;
}

double image_f1(const ScoreMap& map, const BinaryMask& gt, double tau, auto&& threshold_of) {
    std::vector<std::uint8_t> labels(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) labels[i] = map[i] >= threshold_of(i) ? 1 : 0;
    return metrics::component_f1(BinaryMask(map.height(), map.width(), std::move(labels)), gt, tau).f1;
}

}  // namespace

GlobalOracle best_global_threshold(std::span<const LabeledScene> samples, double tau, double resolution) {
    if (samples.empty()) throw ValidationError("best_global_threshold: no samples");
    if (!(resolution > 0.0)) throw ValidationError("best_global_threshold: resolution must be positive");
    double lo = samples[0].scores[0], hi = lo;
    for (const LabeledScene& s : samples) {
        require_same_size(s.scores, s.gt, "best_global_threshold");
        for (double v : s.scores.scores()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const auto steps = static_cast<std::size_t>(std::floor((hi - lo) / resolution)) + 2;
    std::vector<double> score(steps, 0.0);
    for (std::size_t j = 0; j < steps; ++j) {
        const double t = lo + static_cast<double>(j) * resolution;
        double total = 0.0;
        for (const LabeledScene& s : samples) total += image_f1(s.scores, s.gt, tau, [t](std::size_t) { return t; });
        score[j] = total / static_cast<double>(samples.size());
    }
    const std::size_t j = first_best_middle(score);
    return GlobalOracle{lo + static_cast<double>(j) * resolution, score[j]};
}

double region_threshold_score(std::span<const ScoreMap> normalized, std::span<const BinaryMask> fg,
                              std::span<const BinaryMask> gt, double t_fg, double t_bg, double tau) {
    if (normalized.empty() || normalized.size() != fg.size() || normalized.size() != gt.size()) {
        throw ValidationError("region_threshold_score: need equally many non-empty maps and masks");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < normalized.size(); ++k) {
        const BinaryMask& region = fg[k];
        total += image_f1(normalized[k], gt[k], tau, [&](std::size_t i) { return region[i] ? t_fg : t_bg; });
    }
    return total / static_cast<double>(normalized.size());
}

RegionOracle best_region_thresholds(std::span<const LabeledScene> samples, const NormConfig& norm, double tau,
                                    double resolution) {
    if (samples.empty()) throw ValidationError("best_region_thresholds: no samples");
    if (!(resolution > 0.0)) throw ValidationError("best_region_thresholds: resolution must be positive");
    norm.validate();
    std::vector<ScoreMap> maps;
    std::vector<BinaryMask> fgs, gts;
    bool any_fg = false, any_bg = false;
    for (const LabeledScene& s : samples) {
        require_same_size(s.scores, s.gt, "best_region_thresholds");
        BinaryMask fg = boxes_to_mask(s.boxes, s.scores.height(), s.scores.width());
        any_fg = any_fg || fg.count() > 0;
        any_bg = any_bg || fg.count() < fg.size();
        maps.push_back(normalize_with_strategy(s.scores, fg, norm));
        fgs.push_back(std::move(fg));
        gts.push_back(s.gt);
    }
    const auto steps = static_cast<std::size_t>(std::lround(0.5 / resolution)) + 1;
    auto grid = [&](std::size_t j) { return norm.alpha + static_cast<double>(j) * resolution; };
    auto eval = [&](std::size_t jf, std::size_t jb) {
        return region_threshold_score(maps, fgs, gts, grid(jf), grid(jb), tau);
    };

    std::vector<double> line(steps);
    for (std::size_t j = 0; j < steps; ++j) line[j] = eval(j, j);
    std::size_t jf = first_best_middle(line), jb = jf;
    double best = line[jf];

    for (bool improved = true; improved;) {
        improved = false;
        if (any_fg) {
            for (std::size_t j = 0; j < steps; ++j) line[j] = eval(j, jb);
            const std::size_t cand = first_best_middle(line);
            if (line[cand] > best) {
                best = line[cand];
                jf = cand;
                improved = true;
            }
        }
        if (any_bg) {
            for (std::size_t j = 0; j < steps; ++j) line[j] = eval(jf, j);
            const std::size_t cand = first_best_middle(line);
            if (line[cand] > best) {
                best = line[cand];
                jb = cand;
                improved = true;
            }
        }
    }
    RegionOracle out;
    out.score = best;
    if (any_fg) out.t_fg = grid(jf);
    if (any_bg) out.t_bg = grid(jb);
    return out;
}

}  // namespace oodseg::synth
