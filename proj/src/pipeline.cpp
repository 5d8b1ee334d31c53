#include "oodseg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oodseg/diffmath/gradcheck.hpp"
#include "oodseg/errors.hpp"
#include "oodseg/io.hpp"

namespace oodseg::pipeline {

namespace dm = diffmath;

void PipelineConfig::validate() const {
    norm.validate();
    adt.validate();
    for (double w : {weights.detect, weights.orth, weights.adt}) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("pipeline: loss weights must be finite and >= 0");
    }
}

Var detect_loss_stub(Tape& tape) { return tape.constant(Tensor::scalar(0.0)); }

Var total_loss(const Var& detect, const Var& orth, const Var& adt, const PipelineConfig& config) {
    return detect * config.weights.detect + orth * config.weights.orth + adt * config.weights.adt;
}

double total_loss(double detect, double orth, double adt, const PipelineConfig& config) {
    return config.weights.detect * detect + config.weights.orth * orth + config.weights.adt * adt;
}

namespace {

template <class F>
auto stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.kind(), std::string("refine: ") + name + ": " + e.what());
    }
}

}  // namespace

RefineResult refine(const ScoreMap& scores, const BoxSet& boxes, const adt::AdtModel& model,
                    const PipelineConfig& config) {
    stage("config", [&] {
        config.validate();
        return 0;
    });
    BinaryMask fg = stage("boxes", [&] {
        boxes.validate_canvas(scores.height(), scores.width());
        return boxes_to_mask(boxes, scores.height(), scores.width());
    });
    ScoreMap norm = stage("normalize", [&] { return normalize_with_strategy(scores, fg, config.norm); });
    adt::ThresholdPair t =
        stage("thresholds", [&] { return adt::predict_thresholds(norm, fg, model, config.norm.alpha); });
    adt::ProbabilityMap p = stage("binarize", [&] { return adt::relaxed_binarize(norm, fg, t, config.adt); });
    BinaryMask mask = stage("segment", [&] { return adt::hard_segment(p); });
    return RefineResult{std::move(mask), t, std::move(norm), std::move(p)};
}

adt::AdtModel load_adt_model(const std::filesystem::path& path) {
    const std::vector<Tensor> layout = adt::AdtModel::initialize(0).parameters();
    return adt::AdtModel::from_parameters(io::read_parameters(io::kThresholdParamsMagic, layout, path));
}

void save_adt_model(const adt::AdtModel& model, const std::filesystem::path& path) {
    io::write_parameters(io::kThresholdParamsMagic, model.parameters(), path);
}

ouafs::FusionParams fusion_layout() {
    return ouafs::FusionParams::initialize(kFusionChannels, kFusionClasses, kFusionLayers, 0);
}

ouafs::FusionParams load_fusion_params(const std::filesystem::path& path) {
    const ouafs::FusionParams layout = fusion_layout();
    return ouafs::FusionParams::from_parameters(
        layout, io::read_parameters(io::kFusionParamsMagic, layout.parameters(), path));
}

void save_fusion_params(const ouafs::FusionParams& params, const std::filesystem::path& path) {
    io::write_parameters(io::kFusionParamsMagic, params.parameters(), path);
}

Tensor stub_image(const ScoreMap& scores) {
    const std::size_t g = kFusionGrid, h = scores.height(), w = scores.width();
    std::vector<double> out;
    out.reserve(g * g * 3);
    for (std::size_t by = 0; by < g; ++by) {
        const std::size_t y0 = by * h / g, y1 = std::max(y0 + 1, (by + 1) * h / g);
        for (std::size_t bx = 0; bx < g; ++bx) {
            const std::size_t x0 = bx * w / g, x1 = std::max(x0 + 1, (bx + 1) * w / g);
            double s = 0.0;
            for (std::size_t y = y0; y < y1; ++y)
                for (std::size_t x = x0; x < x1; ++x) s += scores.at(y, x);
            out.push_back(s / static_cast<double>((y1 - y0) * (x1 - x0)));
            out.push_back(static_cast<double>(by) / static_cast<double>(g - 1));
            out.push_back(static_cast<double>(bx) / static_cast<double>(g - 1));
        }
    }
    return Tensor::matrix(g * g, 3, std::move(out));
}

FusionInputs fusion_inputs(const ScoreMap& scores, std::uint64_t seed) {
    const Tensor image = stub_image(scores);
    return FusionInputs{ouafs::stub_encoder(image, kFusionLayers, kFusionChannels, seed),
                        ouafs::UncertaintyMaps::from_probabilities(
                            ouafs::stub_segmentation(image, kFusionClasses, seed + 1))};
}

FusionTrainResult train_fusion(std::span<const LabeledScene> dataset, const adt::TrainOptions& options,
                               const LossWeights& weights) {
    if (dataset.empty()) throw ValidationError("train_fusion: empty dataset");
    if (options.batch_size == 0) throw ValidationError("train_fusion: batch size must be positive");
    std::vector<FusionInputs> inputs;
    inputs.reserve(dataset.size());
    for (const LabeledScene& s : dataset) inputs.push_back(fusion_inputs(s.scores, options.seed));

    FusionTrainResult result{ouafs::FusionParams::initialize(kFusionChannels, kFusionClasses, kFusionLayers,
                                                             options.seed),
                             {}};
    std::vector<Tensor> params = result.params.parameters();
    dm::OptimState state(options.optim, params);
    std::mt19937_64 rng(options.seed ^ 0x5851f42d4c957f2dULL);
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t stop = std::min(order.size(), start + options.batch_size);
            Tape tape;
            std::vector<Var> leaves;
            for (const Tensor& t : params) leaves.push_back(tape.variable(t));
            const std::vector<ouafs::FusionLayerVars> vars = ouafs::bind(leaves);
            Var batch = tape.constant(Tensor::scalar(0.0));
            for (std::size_t k = start; k < stop; ++k) {
                const FusionInputs& in = inputs[order[k]];
                std::vector<Var> stack;
                for (const Tensor& f : in.features) stack.push_back(tape.constant(f));
                Var loss = ouafs::fuse_stack(tape, stack, in.uncertainty, vars, result.params.lambda1,
                                             result.params.lambda2)
                               .loss *
                           weights.orth;
                epoch_total += loss.item();
                batch = batch + loss;
            }
            batch = batch * (1.0 / static_cast<double>(stop - start));
            tape.backward(batch);
            std::vector<Tensor> grads;
            for (const Var& leaf : leaves) grads.push_back(leaf.grad());
            dm::optimizer_step(params, grads, state);
        }
        state.end_epoch();
        result.epoch_loss.push_back(epoch_total / static_cast<double>(inputs.size()));
    }
    result.params = ouafs::FusionParams::from_parameters(result.params, params);
    return result;
}

namespace {

Tensor random_tensor(std::mt19937_64& rng, dm::Shape shape) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(dm::shape_size(shape));
    for (double& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

struct ThresholdProblem {
    ScoreMap norm;
    BinaryMask fg;
    BinaryMask gt;
    adt::Descriptor fg_desc;
    adt::Descriptor bg_desc;
};

constexpr double kCheckAlpha = 0.3;
constexpr std::size_t kCheckSide = 8;

ThresholdProblem threshold_problem(std::mt19937_64& rng) {
    std::normal_distribution<double> score(0.0, 1.0);
    std::bernoulli_distribution coin(0.3);
    std::vector<double> raw(kCheckSide * kCheckSide);
    std::vector<std::uint8_t> gt(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        gt[i] = coin(rng) ? 1 : 0;
        raw[i] = score(rng) + (gt[i] ? 1.0 : 0.0);
    }
    const BoxSet boxes({Box{1, 2, 6, 7, 0.9}});
    BinaryMask fg = boxes_to_mask(boxes, kCheckSide, kCheckSide);
    ScoreMap norm = arns_normalize(ScoreMap(kCheckSide, kCheckSide, std::move(raw)), fg, kCheckAlpha);
    adt::Descriptor fd = adt::region_descriptor(norm, fg, kCheckAlpha);
    adt::Descriptor bd = adt::region_descriptor(norm, fg.complement(), kCheckAlpha);
    return ThresholdProblem{std::move(norm), std::move(fg), BinaryMask(kCheckSide, kCheckSide, std::move(gt)), fd,
                            bd};
}

Var threshold_term(Tape& tape, std::span<const Var> leaves, const ThresholdProblem& pr, const adt::AdtConfig& cfg) {
    const adt::PredictorVars fg = adt::bind(leaves.subspan(0, 4));
    const adt::PredictorVars bg = adt::bind(leaves.subspan(4, 4));
    Var t_fg = adt::predict_threshold(tape, fg, pr.fg_desc, kCheckAlpha);
    Var t_bg = adt::predict_threshold(tape, bg, pr.bg_desc, kCheckAlpha);
    Var p = adt::relaxed_binarize(tape, pr.norm, pr.fg, t_fg, t_bg, cfg);
    return adt::adt_loss(tape, p, pr.fg, pr.gt, t_fg, t_bg, cfg);
}

struct FusionProblem {
    std::vector<Tensor> features;
    ouafs::UncertaintyMaps uncertainty;
};

FusionProblem fusion_problem(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Tensor image = random_tensor(rng, {16, 3});
    return FusionProblem{ouafs::stub_encoder(image, kFusionLayers, kFusionChannels, seed),
                         ouafs::UncertaintyMaps::from_probabilities(
                             ouafs::stub_segmentation(image, kFusionClasses, seed + 1))};
}

Var fusion_term(Tape& tape, std::span<const Var> leaves, const FusionProblem& pr) {
    std::vector<Var> stack;
    for (const Tensor& f : pr.features) stack.push_back(tape.constant(f));
    const std::vector<ouafs::FusionLayerVars> vars = ouafs::bind(leaves);
    return ouafs::fuse_stack(tape, stack, pr.uncertainty, vars, 1.0, 1.0).loss;
}

}  // namespace

std::vector<GradCheckCase> gradcheck_suite(std::span<const std::uint64_t> seeds) {
    std::vector<GradCheckCase> out;
    const adt::AdtConfig cfg;
    const PipelineConfig pipe;
    for (std::uint64_t seed : seeds) {
        std::mt19937_64 rng(seed);

        const std::vector<Tensor> pair = {random_tensor(rng, {16}), random_tensor(rng, {16})};
        out.push_back({"orthogonal_pair", seed,
                       dm::finite_diff_check(
                           [](Tape&, std::span<const Var> v) { return ouafs::ouafs_loss(v, 1.0, 1.0); }, pair)
                           .max_relative_error});

        const FusionProblem fp = fusion_problem(seed);
        const std::vector<Tensor> fusion =
            ouafs::FusionParams::initialize(kFusionChannels, kFusionClasses, kFusionLayers, seed).parameters();
        out.push_back({"fusion_stack", seed,
                       dm::finite_diff_check(
                           [&](Tape& tape, std::span<const Var> v) { return fusion_term(tape, v, fp); }, fusion)
                           .max_relative_error});

        const ThresholdProblem tp = threshold_problem(rng);
        const std::vector<Tensor> model = adt::AdtModel::initialize(seed).parameters();
        out.push_back({"threshold_loss", seed,
                       dm::finite_diff_check(
                           [&](Tape& tape, std::span<const Var> v) { return threshold_term(tape, v, tp, cfg); },
                           model)
                           .max_relative_error});

        std::vector<Tensor> all = model;
        all.insert(all.end(), fusion.begin(), fusion.end());
        out.push_back({"total_loss", seed,
                       dm::finite_diff_check(
                           [&](Tape& tape, std::span<const Var> v) {
                               Var adt_term = threshold_term(tape, v.subspan(0, 8), tp, cfg);
                               Var orth_term = fusion_term(tape, v.subspan(8), fp);
                               return total_loss(detect_loss_stub(tape), orth_term, adt_term, pipe);
                           },
                           all)
                           .max_relative_error});
    }
    return out;
}

EvalReport evaluate(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt,
                    std::span<const ScoreMap> scores, double tau) {
    if (pred.empty()) throw ValidationError("evaluate: no images");
    if (pred.size() != gt.size()) throw ValidationError("evaluate: prediction and ground-truth counts differ");
    if (!scores.empty() && scores.size() != pred.size()) throw ValidationError("evaluate: score map count differs");

    const std::array<double, 11> taus = metrics::tau_sweep();
    std::vector<double> pooled_scores;
    std::vector<std::uint8_t> pooled_labels;
    std::array<std::size_t, 11> tp{}, fn{}, fp{};
    std::size_t gt_components = 0, pred_components = 0;
    double siou_total = 0.0, ppv_total = 0.0, image_f1 = 0.0;

    EvalReport report;
    report.images = pred.size();
    report.component.tau = tau;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        require_same_size(pred[k], gt[k], "evaluate");
        if (!scores.empty()) require_same_size(scores[k], gt[k], "evaluate");
        for (std::size_t i = 0; i < gt[k].size(); ++i) {
            pooled_scores.push_back(scores.empty() ? (pred[k][i] ? 1.0 : 0.0) : scores[k][i]);
            pooled_labels.push_back(gt[k][i] ? 1 : 0);
        }
        const metrics::ComponentLabeling pl = metrics::connected_components(pred[k]);
        const metrics::ComponentLabeling gl = metrics::connected_components(gt[k]);
        const metrics::ComponentReport at_tau = metrics::component_f1(pl, gl, tau);
        report.component.tp += at_tau.tp;
        report.component.fn += at_tau.fn;
        report.component.fp += at_tau.fp;
        image_f1 += at_tau.f1;
        siou_total += at_tau.mean_siou * gl.count;
        ppv_total += at_tau.mean_ppv * pl.count;
        gt_components += gl.count;
        pred_components += pl.count;
        for (std::size_t j = 0; j < taus.size(); ++j) {
            const metrics::ComponentReport r = metrics::component_f1(pl, gl, taus[j]);
            tp[j] += r.tp;
            fn[j] += r.fn;
            fp[j] += r.fp;
        }
    }
    report.component.f1 = metrics::f1_from_counts(report.component.tp, report.component.fn, report.component.fp);
    double f1_sum = 0.0;
    for (std::size_t j = 0; j < taus.size(); ++j) f1_sum += metrics::f1_from_counts(tp[j], fn[j], fp[j]);
    report.component.f1_mean = f1_sum / static_cast<double>(taus.size());
    report.component.mean_siou = gt_components ? siou_total / static_cast<double>(gt_components) : 0.0;
    report.component.mean_ppv = pred_components ? ppv_total / static_cast<double>(pred_components) : 0.0;
    report.f1_image_mean = image_f1 / static_cast<double>(pred.size());

    report.ap = metrics::average_precision(pooled_scores, pooled_labels);
    const std::size_t positives = static_cast<std::size_t>(std::count(pooled_labels.begin(), pooled_labels.end(), 1));
    if (positives > 0 && positives < pooled_labels.size()) report.pixel = metrics::pixel_metrics(pooled_scores, pooled_labels);
    return report;
}

std::vector<AblationRow> ablate_normalization(std::span<const LabeledScene> train, std::span<const LabeledScene> test,
                                              std::span<const double> alphas, const adt::TrainOptions& base,
                                              double tau) {
    if (test.empty()) throw ValidationError("ablate_normalization: empty test set");
    std::vector<AblationRow> rows;
    for (double alpha : alphas) {
        for (NormStrategy strategy : kAllStrategies) {
            adt::TrainOptions options = base;
            options.norm = NormConfig{alpha, strategy};
            const adt::AdtModel model = adt::train_adt(train, options).model;

            AblationRow row;
            row.alpha = alpha;
            row.strategy = strategy;
            std::vector<double> margins;
            std::vector<std::uint8_t> labels;
            double f1 = 0.0;
            for (const LabeledScene& s : test) {
                const BinaryMask fg = boxes_to_mask(s.boxes, s.scores.height(), s.scores.width());
                const ScoreMap norm = normalize_with_strategy(s.scores, fg, options.norm);
                const adt::ThresholdPair t = adt::predict_thresholds(norm, fg, model, alpha);
                for (std::size_t i = 0; i < norm.size(); ++i) {
                    margins.push_back(norm[i] - (fg[i] ? t.t_fg : t.t_bg));
                    labels.push_back(s.gt[i] ? 1 : 0);
                    if (strategy != NormStrategy::none &&
                        (norm[i] < alpha - 1e-12 || norm[i] > alpha + 0.5 + 1e-12)) {
                        row.in_range = false;
                    }
                }
                for (double v : {t.t_fg, t.t_bg}) {
                    if (!(v >= alpha && v <= alpha + 0.5)) row.in_range = false;
                }
                row.mean_t_fg += t.t_fg;
                row.mean_t_bg += t.t_bg;
                const BinaryMask mask = adt::hard_segment(adt::relaxed_binarize(norm, fg, t, options.adt));
                f1 += metrics::component_f1(mask, s.gt, tau).f1;
            }
            const double n = static_cast<double>(test.size());
            row.mean_t_fg /= n;
            row.mean_t_bg /= n;
            row.component_f1 = f1 / n;
            row.pixel = metrics::pixel_metrics(margins, labels);
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace oodseg::pipeline
