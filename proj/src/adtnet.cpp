#include "oodseg/adtnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "oodseg/errors.hpp"

namespace oodseg::adt {

namespace dm = diffmath;

std::string_view to_string(RampMode mode) noexcept {
    return mode == RampMode::centered ? "centered" : "literal";
}

std::string_view to_string(DivergenceMode mode) noexcept {
    return mode == DivergenceMode::hinge ? "hinge" : "literal";
}

RampMode parse_ramp_mode(std::string_view name) {
    if (name == "centered") return RampMode::centered;
    if (name == "literal") return RampMode::paper_literal;
    throw ValidationError("unknown ramp mode \"" + std::string(name) + "\"");
}

DivergenceMode parse_divergence_mode(std::string_view name) {
    if (name == "hinge") return DivergenceMode::hinge;
    if (name == "literal") return DivergenceMode::literal;
    throw ValidationError("unknown divergence mode \"" + std::string(name) + "\"");
}

void AdtConfig::validate() const {
    if (!(delta > 0.0)) throw ValidationError("adt: delta must be positive");
    if (!(gamma >= 0.0)) throw ValidationError("adt: gamma must be non-negative");
    if (!(margin >= 0.0)) throw ValidationError("adt: margin must be non-negative");
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

Descriptor region_descriptor(const ScoreMap& norm, const BinaryMask& region, double alpha) {
    require_same_size(norm, region, "region_descriptor");
    std::vector<double> values;
    values.reserve(norm.size());
    for (std::size_t i = 0; i < norm.size(); ++i) {
        if (region[i]) values.push_back(norm[i]);
    }
    const bool empty = values.empty();
    if (empty) values.assign(norm.scores().begin(), norm.scores().end());
    std::sort(values.begin(), values.end());

    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double stddev = std::sqrt(var / n);

    const double mid = alpha + 0.25;
    auto centred = [mid](double v) { return 4.0 * (v - mid); };

    Descriptor d{};
    std::size_t k = 0;
    d[k++] = centred(mean);
    d[k++] = 4.0 * stddev;
    for (int q = 1; q <= 9; ++q) d[k++] = centred(quantile_sorted(values, q / 10.0));
    std::array<double, kHistogramBins> hist{};
    for (double v : values) {
        const double pos = (v - alpha) / 0.5 * static_cast<double>(kHistogramBins);
        const auto bin = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(kHistogramBins - 1)));
        hist[bin] += 1.0 / n;
    }
    for (double h : hist) d[k++] = h;
    d[k++] = empty ? 1.0 : 0.0;
    return d;
}

ThresholdPredictor ThresholdPredictor::initialize(std::mt19937_64& rng) {
    auto uniform = [&rng](std::size_t rows, std::size_t cols, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> v(rows * cols);
        for (double& x : v) x = dist(rng);
        return Tensor::matrix(rows, cols, std::move(v));
    };
    ThresholdPredictor p;
    p.w1 = uniform(kDescriptorSize, kHiddenUnits, kDescriptorSize);
    p.b1 = Tensor::zeros({1, kHiddenUnits});
    p.w2 = uniform(kHiddenUnits, 1, kHiddenUnits);
    p.b2 = Tensor::zeros({1, 1});
    return p;
}

ThresholdPredictor ThresholdPredictor::from_parameters(std::span<const Tensor> params) {
    if (params.size() != 4) throw ValidationError("threshold predictor: expected 4 tensors");
    const ThresholdPredictor shape = {Tensor::zeros({kDescriptorSize, kHiddenUnits}), Tensor::zeros({1, kHiddenUnits}),
                                      Tensor::zeros({kHiddenUnits, 1}), Tensor::zeros({1, 1})};
    const std::vector<Tensor> expected = shape.parameters();
    for (std::size_t i = 0; i < 4; ++i) {
        if (!params[i].same_shape(expected[i])) {
            throw ShapeError("threshold predictor: tensor " + std::to_string(i) + " has shape " +
                             dm::shape_to_string(params[i].shape()) + ", expected " +
                             dm::shape_to_string(expected[i].shape()));
        }
    }
    return ThresholdPredictor{params[0], params[1], params[2], params[3]};
}

PredictorVars bind(Tape& tape, const ThresholdPredictor& p, bool trainable) {
    auto leaf = [&](const Tensor& t) { return trainable ? tape.variable(t) : tape.constant(t); };
    return PredictorVars{leaf(p.w1), leaf(p.b1), leaf(p.w2), leaf(p.b2)};
}

PredictorVars bind(std::span<const Var> params) {
    if (params.size() != 4) throw ValidationError("threshold predictor: expected 4 nodes");
    return PredictorVars{params[0], params[1], params[2], params[3]};
}

Var predict_threshold(Tape& tape, const PredictorVars& p, const Descriptor& descriptor, double alpha) {
    Var x = tape.constant(Tensor::matrix(1, kDescriptorSize, std::vector<double>(descriptor.begin(), descriptor.end())));
    Var hidden = dm::tanh(dm::add_row(dm::matmul(x, p.w1), p.b1));
    Var logit = dm::clamp(dm::add_row(dm::matmul(hidden, p.w2), p.b2), -30.0, 30.0);
    return dm::sigmoid(logit) * 0.5 + alpha;
}

double predict_threshold(const ThresholdPredictor& predictor, const Descriptor& descriptor, double alpha) {
    Tape tape;
    return predict_threshold(tape, bind(tape, predictor, false), descriptor, alpha).item();
}

AdtModel AdtModel::initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    AdtModel m;
    m.fg = ThresholdPredictor::initialize(rng);
    m.bg = ThresholdPredictor::initialize(rng);
    return m;
}

std::vector<Tensor> AdtModel::parameters() const {
    std::vector<Tensor> out = fg.parameters();
    for (Tensor& t : bg.parameters()) out.push_back(std::move(t));
    return out;
}

AdtModel AdtModel::from_parameters(std::span<const Tensor> params) {
    if (params.size() != 8) throw ValidationError("adt model: expected 8 tensors, got " + std::to_string(params.size()));
    return AdtModel{ThresholdPredictor::from_parameters(params.subspan(0, 4)),
                    ThresholdPredictor::from_parameters(params.subspan(4, 4))};
}

ThresholdPair predict_thresholds(const ScoreMap& norm, const BinaryMask& fg, const AdtModel& model, double alpha) {
    require_same_size(norm, fg, "predict_thresholds");
    return ThresholdPair{predict_threshold(model.fg, region_descriptor(norm, fg, alpha), alpha),
                         predict_threshold(model.bg, region_descriptor(norm, fg.complement(), alpha), alpha)};
}

ProbabilityMap::ProbabilityMap(std::size_t height, std::size_t width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
    if (height_ == 0 || width_ == 0 || values_.size() != height_ * width_) {
        throw ValidationError("probability map: inconsistent dimensions");
    }
    for (double v : values_) {
        if (!(v >= 0.0 && v <= 1.0)) throw NumericError("probability map: value outside [0,1]");
    }
}

namespace {

double ramp_offset(const AdtConfig& config) { return config.ramp == RampMode::centered ? 0.5 : 1.0; }

}  // namespace

double ramp(double norm_value, double threshold, const AdtConfig& config) noexcept {
    return std::clamp((norm_value - threshold) / config.delta + ramp_offset(config), 0.0, 1.0);
}

ProbabilityMap relaxed_binarize(const ScoreMap& norm, const BinaryMask& fg, const ThresholdPair& t,
                                const AdtConfig& config) {
    config.validate();
    require_same_size(norm, fg, "relaxed_binarize");
    std::vector<double> p(norm.size());
    for (std::size_t i = 0; i < norm.size(); ++i) p[i] = ramp(norm[i], fg[i] ? t.t_fg : t.t_bg, config);
    return ProbabilityMap(norm.height(), norm.width(), std::move(p));
}

namespace {

Tensor mask_tensor(const BinaryMask& m) {
    std::vector<double> v(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) v[i] = m[i] ? 1.0 : 0.0;
    return Tensor::vector(std::move(v));
}

Var ramp_node(const Var& values, const Var& threshold, const AdtConfig& config) {
    Var delta = values.tape().constant(Tensor::scalar(config.delta));
    return dm::clamp((values - threshold) / delta + ramp_offset(config), 0.0, 1.0);
}

}  // namespace

Var relaxed_binarize(Tape& tape, const ScoreMap& norm, const BinaryMask& fg, const Var& t_fg, const Var& t_bg,
                     const AdtConfig& config) {
    config.validate();
    require_same_size(norm, fg, "relaxed_binarize");
    Var values = tape.constant(Tensor::vector(std::vector<double>(norm.scores().begin(), norm.scores().end())));
    return dm::select(mask_tensor(fg), ramp_node(values, t_fg, config), ramp_node(values, t_bg, config));
}

BinaryMask hard_segment(const ProbabilityMap& p) {
    std::vector<std::uint8_t> labels(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) labels[i] = p[i] >= 0.5 ? 1 : 0;
    return BinaryMask(p.height(), p.width(), std::move(labels));
}

Var adt_loss(Tape& tape, const Var& p, const BinaryMask& fg, const BinaryMask& gt, const Var& t_fg, const Var& t_bg,
             const AdtConfig& config) {
    config.validate();
    require_same_size(fg, gt, "adt_loss");
    if (p.value().size() != fg.size()) {
        throw ShapeError("adt_loss: probability map has " + std::to_string(p.value().size()) + " pixels, masks " +
                         std::to_string(fg.size()));
    }
    const dm::Shape flat{fg.size()};
    Var probs = p.shape() == flat ? p : dm::reshape(p, flat);

    std::vector<double> target(gt.size()), normal_target(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        target[i] = gt[i] ? 1.0 : 0.0;
        normal_target[i] = 1.0 - target[i];
    }
    const Tensor fg_mask = mask_tensor(fg);
    const Tensor bg_mask = mask_tensor(fg.complement());
    const std::size_t fg_count = fg.count();

    Var loss = tape.constant(Tensor::scalar(0.0));
    if (fg_count > 0) {
        loss = loss + dm::masked_mean(dm::bce(probs, Tensor::vector(target), kCrossEntropyEps), fg_mask);
    }
    if (fg_count < fg.size()) {
        Var normal = 1.0 - probs;
        loss = loss + dm::masked_mean(dm::bce(normal, Tensor::vector(normal_target), kCrossEntropyEps), bg_mask);
    }
    Var gap = dm::abs(dm::reshape(t_fg - t_bg, {}));
    Var divergence = config.divergence == DivergenceMode::hinge ? dm::relu(config.margin - gap) : gap;
    return loss + divergence * config.gamma;
}

double adt_loss(const ProbabilityMap& p, const BinaryMask& fg, const BinaryMask& gt, const ThresholdPair& t,
                const AdtConfig& config) {
    Tape tape;
    Var pv = tape.constant(Tensor::vector(std::vector<double>(p.values().begin(), p.values().end())));
    return adt_loss(tape, pv, fg, gt, tape.constant(Tensor::scalar(t.t_fg)), tape.constant(Tensor::scalar(t.t_bg)),
                    config)
        .item();
}

namespace {

struct PreparedScene {
    ScoreMap norm;
    BinaryMask fg;
    BinaryMask gt;
    Descriptor fg_desc;
    Descriptor bg_desc;
};

}  // namespace

TrainResult train_adt(std::span<const LabeledScene> dataset, const TrainOptions& options) {
    if (dataset.empty()) throw ValidationError("train_adt: empty dataset");
    if (options.batch_size == 0) throw ValidationError("train_adt: batch size must be positive");
    options.norm.validate();
    options.adt.validate();
    const double alpha = options.norm.alpha;

    std::vector<PreparedScene> scenes;
    scenes.reserve(dataset.size());
    for (const LabeledScene& s : dataset) {
        require_same_size(s.scores, s.gt, "train_adt");
        BinaryMask fg = boxes_to_mask(s.boxes, s.scores.height(), s.scores.width());
        ScoreMap norm = normalize_with_strategy(s.scores, fg, options.norm);
        Descriptor fd = region_descriptor(norm, fg, alpha);
        Descriptor bd = region_descriptor(norm, fg.complement(), alpha);
        scenes.push_back(PreparedScene{std::move(norm), std::move(fg), s.gt, fd, bd});
    }

    TrainResult result{AdtModel::initialize(options.seed), {}};
    std::vector<Tensor> params = result.model.parameters();
    dm::OptimState state(options.optim, params);
    std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(scenes.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t stop = std::min(order.size(), start + options.batch_size);
            Tape tape;
            std::vector<Var> leaves;
            for (const Tensor& t : params) leaves.push_back(tape.variable(t));
            const PredictorVars fg_vars = bind(std::span<const Var>(leaves).subspan(0, 4));
            const PredictorVars bg_vars = bind(std::span<const Var>(leaves).subspan(4, 4));

            Var batch_loss = tape.constant(Tensor::scalar(0.0));
            for (std::size_t k = start; k < stop; ++k) {
                const PreparedScene& s = scenes[order[k]];
                Var t_fg = predict_threshold(tape, fg_vars, s.fg_desc, alpha);
                Var t_bg = predict_threshold(tape, bg_vars, s.bg_desc, alpha);
                Var p = relaxed_binarize(tape, s.norm, s.fg, t_fg, t_bg, options.adt);
                Var loss = adt_loss(tape, p, s.fg, s.gt, t_fg, t_bg, options.adt);
                epoch_total += loss.item();
                batch_loss = batch_loss + loss;
            }
            batch_loss = batch_loss * (1.0 / static_cast<double>(stop - start));
            tape.backward(batch_loss);
            std::vector<Tensor> grads;
            grads.reserve(leaves.size());
            for (const Var& leaf : leaves) grads.push_back(leaf.grad());
            dm::optimizer_step(params, grads, state);
        }
        state.end_epoch();
        result.epoch_loss.push_back(epoch_total / static_cast<double>(scenes.size()));
    }
    result.model = AdtModel::from_parameters(params);
    return result;
}

}  // namespace oodseg::adt
