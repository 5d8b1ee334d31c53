#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "oodseg/errors.hpp"
#include "oodseg/pipeline.hpp"
#include "oodseg/synth.hpp"

using namespace oodseg;
using namespace oodseg::pipeline;

namespace {

ScoreMap random_map(std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(h * w);
    for (double& x : v) x = n(rng);
    return ScoreMap(h, w, std::move(v));
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("oodseg_pipeline_" + name);
}

}  // namespace

TEST(TotalLoss, ZeroAndWeightedExample) {
    PipelineConfig c;
    EXPECT_EQ(total_loss(0.0, 0.0, 0.0, c), 0.0);
    // 0.5 * 1 + 0.1 * 2 + 0.1 * 0
    EXPECT_NEAR(total_loss(1.0, 2.0, 0.0, c), 0.7, 1e-15);
}

TEST(TotalLoss, LinearInEachTerm) {
    PipelineConfig c;
    c.weights = {0.3, 0.7, 1.9};
    const double base = total_loss(0.2, 0.4, 0.6, c);
    EXPECT_NEAR(total_loss(1.2, 0.4, 0.6, c) - base, 0.3, 1e-12);
    EXPECT_NEAR(total_loss(0.2, 1.4, 0.6, c) - base, 0.7, 1e-12);
    EXPECT_NEAR(total_loss(0.2, 0.4, 1.6, c) - base, 1.9, 1e-12);
}

TEST(TotalLoss, TapeMatchesScalarAndGradientsAreWeights) {
    PipelineConfig c;
    Tape tape;
    Var d = tape.variable(Tensor::scalar(0.25));
    Var o = tape.variable(Tensor::scalar(1.5));
    Var a = tape.variable(Tensor::scalar(-0.75));
    Var l = total_loss(d, o, a, c);
    EXPECT_DOUBLE_EQ(l.item(), total_loss(0.25, 1.5, -0.75, c));
    tape.backward(l);
    EXPECT_DOUBLE_EQ(d.grad().item(), 0.5);
    EXPECT_DOUBLE_EQ(o.grad().item(), 0.1);
    EXPECT_DOUBLE_EQ(a.grad().item(), 0.1);
}

TEST(TotalLoss, DetectStubIsConstantZero) {
    Tape tape;
    EXPECT_EQ(detect_loss_stub(tape).item(), 0.0);
}

TEST(GradCheck, SuiteBelowTolerance) {
    const std::uint64_t seeds[] = {0, 1};
    const auto cases = gradcheck_suite(seeds);
    EXPECT_EQ(cases.size(), 8u);
    for (const GradCheckCase& c : cases) EXPECT_LE(c.max_error, 1e-4) << c.name << " seed " << c.seed;
}

TEST(Refine, NoBoxesUsesBackgroundThresholdOnly) {
    const adt::AdtModel model = adt::AdtModel::initialize(3);
    PipelineConfig c;
    const ScoreMap s = random_map(12, 10, 1);
    const RefineResult r = refine(s, BoxSet{}, model, c);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double p = adt::ramp(r.normalized[i], r.thresholds.t_bg, c.adt);
        EXPECT_EQ(r.probability[i], p);
        EXPECT_EQ(r.mask[i], p >= 0.5);
    }
}

TEST(Refine, FullBoxUsesForegroundThresholdOnly) {
    const adt::AdtModel model = adt::AdtModel::initialize(3);
    PipelineConfig c;
    const ScoreMap s = random_map(12, 10, 2);
    const BoxSet boxes({Box{0, 0, 10, 12, 1.0}});
    const RefineResult r = refine(s, boxes, model, c);
    for (std::size_t i = 0; i < s.size(); ++i)
        EXPECT_EQ(r.probability[i], adt::ramp(r.normalized[i], r.thresholds.t_fg, c.adt));
}

TEST(Refine, StagesRecomputeExactly) {
    const adt::AdtModel model = adt::AdtModel::initialize(5);
    PipelineConfig c;
    c.norm.alpha = 0.2;
    const ScoreMap s = random_map(16, 16, 3);
    const BoxSet boxes({Box{2, 3, 9, 8, 0.9}, Box{10, 10, 16, 15, 0.6}});
    const RefineResult r = refine(s, boxes, model, c);
    const BinaryMask fg = boxes_to_mask(boxes, 16, 16);
    const ScoreMap norm = arns_normalize(s, fg, 0.2);
    EXPECT_EQ(r.normalized, norm);
    const adt::ThresholdPair t = adt::predict_thresholds(norm, fg, model, 0.2);
    EXPECT_EQ(r.thresholds.t_fg, t.t_fg);
    EXPECT_EQ(r.thresholds.t_bg, t.t_bg);
    const adt::ProbabilityMap p = adt::relaxed_binarize(norm, fg, t, c.adt);
    EXPECT_TRUE(std::equal(p.values().begin(), p.values().end(), r.probability.values().begin()));
    EXPECT_EQ(r.mask, adt::hard_segment(p));
}

TEST(Refine, ErrorsNameTheStage) {
    const adt::AdtModel model = adt::AdtModel::initialize(0);
    PipelineConfig c;
    const ScoreMap s = random_map(8, 8, 4);
    try {
        refine(s, BoxSet({Box{0, 0, 9, 4, 1.0}}), model, c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "validation");
        EXPECT_NE(std::string(e.what()).find("refine: boxes: "), std::string::npos) << e.what();
    }
    c.norm.alpha = 0.6;
    try {
        refine(s, BoxSet{}, model, c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("refine: config: "), std::string::npos) << e.what();
    }
}

TEST(Models, AdtRoundTrip) {
    const adt::AdtModel m = adt::AdtModel::initialize(11);
    const auto path = temp_file("adt.params");
    save_adt_model(m, path);
    const adt::AdtModel back = load_adt_model(path);
    const auto a = m.parameters(), b = back.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(std::ranges::equal(a[i].data(), b[i].data()));
}

TEST(Models, FusionRoundTripAndWrongFileRejected) {
    const ouafs::FusionParams f = fusion_layout();
    const auto path = temp_file("fusion.params");
    save_fusion_params(f, path);
    const auto a = f.parameters(), b = load_fusion_params(path).parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(std::ranges::equal(a[i].data(), b[i].data()));
    EXPECT_THROW(load_adt_model(path), ParseError);
}

TEST(Fusion, StubImagePoolsBlocks) {
    std::vector<double> v(16 * 16);
    for (std::size_t y = 0; y < 16; ++y)
        for (std::size_t x = 0; x < 16; ++x) v[y * 16 + x] = static_cast<double>(y / 2 * 8 + x / 2);
    const Tensor img = stub_image(ScoreMap(16, 16, v));
    ASSERT_EQ(img.rows(), 64u);
    ASSERT_EQ(img.cols(), 3u);
    for (std::size_t c = 0; c < 64; ++c) EXPECT_DOUBLE_EQ(img.data()[c * 3], static_cast<double>(c));
}

TEST(Fusion, TrainingLowersLoss) {
    synth::SceneSpec spec;
    spec.height = spec.width = 16;
    spec.min_extent = 3;
    spec.max_extent = 5;
    std::vector<LabeledScene> data;
    for (const auto& s : synth::generate_dataset(spec, 4)) data.push_back(s.scene());
    adt::TrainOptions o;
    o.epochs = 30;
    const FusionTrainResult r = train_fusion(data, o);
    ASSERT_EQ(r.epoch_loss.size(), 30u);
    EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(Evaluate, IdenticalMasksArePerfect) {
    std::vector<BinaryMask> m;
    m.push_back(BinaryMask(4, 4, {1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 1, 0, 0, 1, 1}));
    m.push_back(BinaryMask::zeros(4, 4));
    const EvalReport r = evaluate(m, m, {});
    EXPECT_EQ(r.images, 2u);
    EXPECT_EQ(r.component.f1, 1.0);
    EXPECT_EQ(r.component.fp, 0u);
    ASSERT_TRUE(r.pixel.has_value());
    EXPECT_EQ(r.pixel->ap, 1.0);
    EXPECT_EQ(r.pixel->auroc, 1.0);
    EXPECT_EQ(r.pixel->fpr95, 0.0);
}

TEST(Evaluate, SingleClassHasNoPixelReport) {
    std::vector<BinaryMask> m{BinaryMask::zeros(3, 3)};
    const EvalReport r = evaluate(m, m, {});
    EXPECT_FALSE(r.pixel.has_value());
    EXPECT_THROW(evaluate(m, std::vector<BinaryMask>{}, {}), ValidationError);
}
