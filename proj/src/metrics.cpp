#include "oodseg/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <string>

#include "oodseg/errors.hpp"

namespace oodseg::metrics {

std::array<double, 11> tau_sweep() noexcept {
    std::array<double, 11> taus{};
    for (std::size_t i = 0; i < taus.size(); ++i) taus[i] = static_cast<double>(25 + 5 * i) / 100.0;
    return taus;
}

namespace {

std::uint32_t find_root(std::vector<std::uint32_t>& parent, std::uint32_t x) {
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

void unite(std::vector<std::uint32_t>& parent, std::uint32_t a, std::uint32_t b) {
    a = find_root(parent, a);
    b = find_root(parent, b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent[a] = b;
}

void require_same_grid(const ComponentLabeling& a, const ComponentLabeling& b) {
    if (a.height != b.height || a.width != b.width) throw ShapeError("component metrics: labelings differ in size");
}

// Per-component tallies shared by sIoU, PPV and the F1 counts.
struct Overlaps {
    std::vector<std::size_t> gt_size;        // indexed by gt id
    std::vector<std::size_t> pred_size;      // indexed by pred id
    std::vector<std::size_t> pred_off_gt;    // pred pixels with gt id 0
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> pairs;  // (gt, pred) -> pixels
};

Overlaps tally(const ComponentLabeling& pred, const ComponentLabeling& gt) {
    require_same_grid(pred, gt);
    Overlaps o;
    o.gt_size.assign(gt.count + 1, 0);
    o.pred_size.assign(pred.count + 1, 0);
    o.pred_off_gt.assign(pred.count + 1, 0);
    for (std::size_t i = 0; i < gt.ids.size(); ++i) {
        const std::uint32_t g = gt.ids[i];
        const std::uint32_t p = pred.ids[i];
        ++o.gt_size[g];
        ++o.pred_size[p];
        if (p != 0 && g == 0) ++o.pred_off_gt[p];
        if (p != 0 && g != 0) ++o.pairs[{g, p}];
    }
    return o;
}

std::vector<double> siou_all(const Overlaps& o, std::uint32_t gt_count) {
    std::vector<std::size_t> inter(gt_count + 1, 0), extra(gt_count + 1, 0);
    for (const auto& [key, n] : o.pairs) {
        inter[key.first] += n;
        extra[key.first] += o.pred_off_gt[key.second];
    }
    std::vector<double> out(gt_count + 1, 0.0);
    for (std::uint32_t k = 1; k <= gt_count; ++k) {
        out[k] = static_cast<double>(inter[k]) / static_cast<double>(o.gt_size[k] + extra[k]);
    }
    return out;
}

std::vector<double> ppv_all(const Overlaps& o, std::uint32_t pred_count) {
    std::vector<double> out(pred_count + 1, 0.0);
    for (std::uint32_t j = 1; j <= pred_count; ++j) {
        out[j] = static_cast<double>(o.pred_size[j] - o.pred_off_gt[j]) / static_cast<double>(o.pred_size[j]);
    }
    return out;
}

}  // namespace

ComponentLabeling connected_components(const BinaryMask& mask) {
    const std::size_t h = mask.height(), w = mask.width();
    std::vector<std::uint32_t> provisional(h * w, 0);
    std::vector<std::uint32_t> parent{0};

    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            if (!mask.at(y, x)) continue;
            std::uint32_t label = 0;
            // Already-visited 8-neighbours: W, NW, N, NE.
            const std::ptrdiff_t offsets[4][2] = {{0, -1}, {-1, -1}, {-1, 0}, {-1, 1}};
            for (const auto& off : offsets) {
                const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(y) + off[0];
                const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(x) + off[1];
                if (ny < 0 || nx < 0 || nx >= static_cast<std::ptrdiff_t>(w)) continue;
                const std::uint32_t n = provisional[static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx)];
                if (n == 0) continue;
                if (label == 0) {
                    label = n;
                } else {
                    unite(parent, label, n);
                }
            }
            if (label == 0) {
                label = static_cast<std::uint32_t>(parent.size());
                parent.push_back(label);
            }
            provisional[y * w + x] = label;
        }
    }

    ComponentLabeling out{h, w, std::vector<std::uint32_t>(h * w, 0), 0};
    std::vector<std::uint32_t> final_id(parent.size(), 0);
    for (std::size_t i = 0; i < provisional.size(); ++i) {
        if (provisional[i] == 0) continue;
        const std::uint32_t root = find_root(parent, provisional[i]);
        if (final_id[root] == 0) final_id[root] = ++out.count;
        out.ids[i] = final_id[root];
    }
    return out;
}

double siou(std::uint32_t gt_component, const ComponentLabeling& pred, const ComponentLabeling& gt) {
    if (gt_component == 0 || gt_component > gt.count) {
        throw ValidationError("siou: no gt component " + std::to_string(gt_component));
    }
    return siou_all(tally(pred, gt), gt.count)[gt_component];
}

double ppv(std::uint32_t pred_component, const ComponentLabeling& pred, const ComponentLabeling& gt) {
    if (pred_component == 0 || pred_component > pred.count) {
        throw ValidationError("ppv: no predicted component " + std::to_string(pred_component));
    }
    return ppv_all(tally(pred, gt), pred.count)[pred_component];
}

double f1_from_counts(std::size_t tp, std::size_t fn, std::size_t fp) noexcept {
    const std::size_t denom = 2 * tp + fn + fp;
    if (denom == 0) return 1.0;
    return static_cast<double>(2 * tp) / static_cast<double>(denom);
}

ComponentReport component_f1(const ComponentLabeling& pred, const ComponentLabeling& gt, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("component_f1: tau must lie in (0, 1)");
    const Overlaps o = tally(pred, gt);
    const std::vector<double> s = siou_all(o, gt.count);
    const std::vector<double> q = ppv_all(o, pred.count);

    auto counts_at = [&](double t) {
        ComponentReport r;
        r.tau = t;
        for (std::uint32_t k = 1; k <= gt.count; ++k) (s[k] > t ? r.tp : r.fn) += 1;
        for (std::uint32_t j = 1; j <= pred.count; ++j) {
            if (q[j] <= t) ++r.fp;
        }
        r.f1 = f1_from_counts(r.tp, r.fn, r.fp);
        return r;
    };

    ComponentReport report = counts_at(tau);
    if (gt.count > 0) {
        report.mean_siou = std::accumulate(s.begin() + 1, s.end(), 0.0) / static_cast<double>(gt.count);
    }
    if (pred.count > 0) {
        report.mean_ppv = std::accumulate(q.begin() + 1, q.end(), 0.0) / static_cast<double>(pred.count);
    }
    double total = 0.0;
    const auto taus = tau_sweep();
    for (double t : taus) total += counts_at(t).f1;
    report.f1_mean = total / static_cast<double>(taus.size());
    return report;
}

ComponentReport component_f1(const BinaryMask& pred, const BinaryMask& gt, double tau) {
    require_same_size(pred, gt, "component_f1");
    return component_f1(connected_components(pred), connected_components(gt), tau);
}

namespace {

struct RankedCurve {
    // Cumulative counts after each tie group, highest scores first.
    std::vector<std::size_t> tp;
    std::vector<std::size_t> fp;
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

RankedCurve rank(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) {
        throw ShapeError("pixel metrics: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
    }
    if (scores.empty()) throw ValidationError("pixel metrics: no pixels");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RankedCurve c;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (labels[order[i]] ? tp : fp) += 1;
        const bool group_ends = i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]];
        if (group_ends) {
            c.tp.push_back(tp);
            c.fp.push_back(fp);
        }
    }
    c.positives = tp;
    c.negatives = fp;
    return c;
}

void require_both_classes(const RankedCurve& c, const char* metric) {
    if (c.positives == 0 || c.negatives == 0) {
        throw ValidationError(std::string(metric) + ": ground truth must contain both classes");
    }
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    const RankedCurve c = rank(scores, labels);
    if (c.positives == 0 || c.negatives == 0) {
        return static_cast<double>(c.positives) / static_cast<double>(scores.size());
    }
    double ap = 0.0;
    std::size_t prev_tp = 0;
    for (std::size_t g = 0; g < c.tp.size(); ++g) {
        if (c.tp[g] == prev_tp) continue;
        const double recall_step = static_cast<double>(c.tp[g] - prev_tp) / static_cast<double>(c.positives);
        const double precision = static_cast<double>(c.tp[g]) / static_cast<double>(c.tp[g] + c.fp[g]);
        ap += recall_step * precision;
        prev_tp = c.tp[g];
    }
    return ap;
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    const RankedCurve c = rank(scores, labels);
    require_both_classes(c, "auroc");
    const double np = static_cast<double>(c.positives);
    const double nn = static_cast<double>(c.negatives);
    double area = 0.0;
    double prev_tpr = 0.0, prev_fpr = 0.0;
    for (std::size_t g = 0; g < c.tp.size(); ++g) {
        const double tpr = static_cast<double>(c.tp[g]) / np;
        const double fpr = static_cast<double>(c.fp[g]) / nn;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    return area;
}

double fpr_at_95_tpr(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    const RankedCurve c = rank(scores, labels);
    require_both_classes(c, "fpr95");
    for (std::size_t g = 0; g < c.tp.size(); ++g) {
        // TPR >= 0.95 in exact integer arithmetic.
        if (100 * c.tp[g] >= 95 * c.positives) {
            return static_cast<double>(c.fp[g]) / static_cast<double>(c.negatives);
        }
    }
    return 1.0;
}

PixelReport pixel_metrics(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    return PixelReport{average_precision(scores, labels), auroc(scores, labels), fpr_at_95_tpr(scores, labels)};
}

PixelReport pixel_metrics(const ScoreMap& scores, const BinaryMask& gt) {
    require_same_size(scores, gt, "pixel_metrics");
    return pixel_metrics(scores.scores(), gt.labels());
}

}  // namespace oodseg::metrics
