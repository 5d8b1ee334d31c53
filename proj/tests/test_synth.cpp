#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "oodseg/errors.hpp"
#include "oodseg/io.hpp"
#include "oodseg/metrics.hpp"
#include "oodseg/synth.hpp"

using namespace oodseg;
using namespace oodseg::synth;

namespace {

SceneSpec unbiased_separable() {
    SceneSpec s;
    s.height = s.width = 32;
    s.bias_amplitude = 0.0;
    s.anomaly_mean = 10.0;
    s.anomaly_std = 0.1;
    s.background_std = 0.1;
    s.box_expand = 0;
    s.drop_probability = 0.0;
    return s;
}

std::vector<LabeledScene> scenes(const std::vector<SynthSample>& samples) {
    std::vector<LabeledScene> out;
    for (const SynthSample& s : samples) out.push_back(s.scene());
    return out;
}

}  // namespace

TEST(Spec, ParseAndFormatRoundTrip) {
    SceneSpec s;
    s.shape = ShapeFamily::rectangle;
    s.anomaly_mean = 1.75;
    s.seed = 123456789012345ULL;
    s.box_shift = 2;
    const SceneSpec back = parse_spec(format_spec(s));
    EXPECT_EQ(format_spec(back), format_spec(s));
    EXPECT_EQ(back.shape, ShapeFamily::rectangle);
    EXPECT_EQ(back.seed, s.seed);
}

TEST(Spec, CommentsBlankLinesAndErrors) {
    const SceneSpec s = parse_spec("# family\n\nheight = 10\nwidth=12 # trailing\n");
    EXPECT_EQ(s.height, 10u);
    EXPECT_EQ(s.width, 12u);
    EXPECT_THROW(parse_spec("colour=red\n"), ParseError);
    EXPECT_THROW(parse_spec("height=ten\n"), ParseError);
    EXPECT_THROW(parse_spec("height\n"), ParseError);
    EXPECT_THROW(parse_spec("anomaly_std=0\n"), ValidationError);
    EXPECT_THROW(parse_spec("drop_probability=1.5\n"), ValidationError);
    EXPECT_THROW(parse_spec("shape=hexagon\n"), ParseError);
}

TEST(Generate, ZeroObjects) {
    SceneSpec s;
    s.min_objects = s.max_objects = 0;
    s.bias_amplitude = 0.0;
    const SynthSample x = generate_scene(s);
    EXPECT_EQ(x.gt.count(), 0u);
    EXPECT_TRUE(x.boxes.empty());
    EXPECT_TRUE(x.objects.empty());
    double mean = 0.0;
    for (double v : x.scores.scores()) mean += v;
    EXPECT_NEAR(mean / static_cast<double>(x.scores.size()), 0.0, 0.05);
}

TEST(Generate, ZeroJitterBoxesAreTight) {
    SceneSpec s;
    s.box_expand = 0;
    s.drop_probability = 0.0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        s.seed = seed;
        const SynthSample x = generate_scene(s);
        ASSERT_EQ(x.boxes.size(), x.objects.size());
        for (std::size_t k = 0; k < x.objects.size(); ++k) {
            const Box& b = x.boxes.boxes()[k];
            const Box& o = x.objects[k];
            EXPECT_EQ(b.x0, o.x0);
            EXPECT_EQ(b.y0, o.y0);
            EXPECT_EQ(b.x1, o.x1);
            EXPECT_EQ(b.y1, o.y1);
        }
    }
}

TEST(Generate, ObjectsDoNotTouchAndMatchGt) {
    SceneSpec s;
    s.min_objects = s.max_objects = 3;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        s.seed = seed;
        const SynthSample x = generate_scene(s);
        EXPECT_EQ(metrics::connected_components(x.gt).count, 3u);
        std::size_t pixels = 0;
        for (const Box& o : x.objects) {
            EXPECT_GE(o.width(), 1);
            EXPECT_LE(o.width(), 14);
            for (int y = o.y0; y < o.y1; ++y)
                for (int xx = o.x0; xx < o.x1; ++xx) pixels += x.gt.at(y, xx);
        }
        EXPECT_EQ(pixels, x.gt.count());
    }
}

TEST(Generate, JitterWithoutDropKeepsOverlap) {
    SceneSpec s;
    s.drop_probability = 0.0;
    s.box_shift = 5;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        s.seed = seed;
        const SynthSample x = generate_scene(s);
        ASSERT_EQ(x.boxes.size(), x.objects.size());
        for (std::size_t k = 0; k < x.objects.size(); ++k) {
            const Box& b = x.boxes.boxes()[k];
            const Box& o = x.objects[k];
            bool hit = false;
            for (int y = std::max(b.y0, o.y0); y < std::min(b.y1, o.y1) && !hit; ++y)
                for (int xx = std::max(b.x0, o.x0); xx < std::min(b.x1, o.x1) && !hit; ++xx) hit = x.gt.at(y, xx);
            EXPECT_TRUE(hit) << "seed " << seed << " object " << k;
        }
    }
}

TEST(Generate, DropProbabilityOneDropsEverything) {
    SceneSpec s;
    s.drop_probability = 1.0;
    const SynthSample x = generate_scene(s);
    EXPECT_TRUE(x.boxes.empty());
    EXPECT_TRUE(std::all_of(x.dropped.begin(), x.dropped.end(), [](bool d) { return d; }));
}

TEST(Generate, Deterministic) {
    SceneSpec s;
    s.seed = 99;
    const SynthSample a = generate_scene(s), b = generate_scene(s);
    EXPECT_EQ(a.scores, b.scores);
    EXPECT_EQ(a.gt, b.gt);
    EXPECT_EQ(a.boxes, b.boxes);
    s.seed = 100;
    EXPECT_FALSE(generate_scene(s).scores == a.scores);
}

TEST(Generate, PlacementFailureIsAnError) {
    SceneSpec s;
    s.height = s.width = 8;
    s.min_objects = s.max_objects = 5;
    s.min_extent = s.max_extent = 6;
    try {
        generate_scene(s);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "synth.placement");
    }
}

TEST(Generate, BiasMakesTopBackgroundRivalBottomAnomalies) {
    SceneSpec s;
    s.bias_amplitude = 4.0;
    std::vector<double> top_bg, bottom_fg;
    for (const SynthSample& x : generate_dataset(s, 60)) {
        for (std::size_t y = 0; y < s.height; ++y)
            for (std::size_t xx = 0; xx < s.width; ++xx) {
                if (y < 8 && !x.gt.at(y, xx)) top_bg.push_back(x.scores.at(y, xx));
                if (y >= s.height - 8 && x.gt.at(y, xx)) bottom_fg.push_back(x.scores.at(y, xx));
            }
    }
    ASSERT_FALSE(bottom_fg.empty());
    std::sort(top_bg.begin(), top_bg.end());
    std::sort(bottom_fg.begin(), bottom_fg.end());
    const double top_median = top_bg[top_bg.size() / 2];
    const double bottom_median = bottom_fg[bottom_fg.size() / 2];
    EXPECT_GT(top_median, bottom_median);
}

TEST(Oracle, GlobalSeparableIsPerfect) {
    const auto data = scenes(generate_dataset(unbiased_separable(), 10));
    const GlobalOracle g = best_global_threshold(data);
    EXPECT_EQ(g.score, 1.0);
}

TEST(Oracle, GlobalTwoScoresPicksMidpoint) {
    const LabeledScene s{ScoreMap(1, 2, {0.0, 1.0}), BinaryMask(1, 2, {0, 1}), BoxSet{}};
    const GlobalOracle g = best_global_threshold(std::span(&s, 1));
    // grid 0, 0.005, ..., every t in (0, 1] separates; the middle of j = 1..200
    EXPECT_NEAR(g.threshold, 0.5, 1e-12);
    EXPECT_EQ(g.score, 1.0);
}

TEST(Oracle, BiasedFamilyDefeatsGlobalThreshold) {
    SceneSpec s;
    s.bias_amplitude = 4.0;  // 2x the fg/bg mean gap
    const auto data = scenes(generate_dataset(s, 20));
    const GlobalOracle g = best_global_threshold(data);
    EXPECT_LT(g.score, 0.9);
    const RegionOracle r = best_region_thresholds(data);
    EXPECT_GE(r.score, g.score + 0.05);
}

TEST(Oracle, RegionMatchesGlobalOnUnbiasedSeparable) {
    const auto data = scenes(generate_dataset(unbiased_separable(), 10));
    const RegionOracle r = best_region_thresholds(data);
    EXPECT_EQ(r.score, 1.0);
    ASSERT_TRUE(r.t_fg && r.t_bg);
    // boxes are tight, so everything in the box is anomalous and every point
    // of the diagonal up to the first miss works
    EXPECT_NEAR(*r.t_fg, *r.t_bg, 0.25);
}

TEST(Oracle, RegionEmptyForegroundFlag) {
    SceneSpec s;
    s.drop_probability = 1.0;
    const auto data = scenes(generate_dataset(s, 3));
    const RegionOracle r = best_region_thresholds(data);
    EXPECT_FALSE(r.t_fg.has_value());
    EXPECT_TRUE(r.t_bg.has_value());
}

TEST(Oracle, RegionScoreAgreesWithDirectEvaluation) {
    SceneSpec s;
    const auto data = scenes(generate_dataset(s, 5));
    const RegionOracle r = best_region_thresholds(data);
    std::vector<ScoreMap> maps;
    std::vector<BinaryMask> fgs, gts;
    for (const LabeledScene& x : data) {
        fgs.push_back(boxes_to_mask(x.boxes, x.scores.height(), x.scores.width()));
        maps.push_back(arns_normalize(x.scores, fgs.back(), 0.3));
        gts.push_back(x.gt);
    }
    EXPECT_DOUBLE_EQ(region_threshold_score(maps, fgs, gts, *r.t_fg, *r.t_bg), r.score);
    EXPECT_LE(region_threshold_score(maps, fgs, gts, *r.t_fg + 0.05, *r.t_bg), r.score);
}

TEST(Oracle, EmptyInputRejected) {
    EXPECT_THROW(best_global_threshold({}), ValidationError);
    EXPECT_THROW(best_region_thresholds({}), ValidationError);
}

TEST(Dataset, WriteReadBack) {
    const auto dir = std::filesystem::temp_directory_path() / "oodseg_synth_ds";
    std::filesystem::remove_all(dir);
    SceneSpec s;
    s.height = s.width = 16;
    s.min_extent = 3;
    s.max_extent = 5;
    const auto samples = generate_dataset(s, 3);
    write_dataset(samples, dir);
    EXPECT_EQ(io::read_scoremap(dir / "scene_0002.scores").size(), 256u);
    EXPECT_EQ(io::read_mask(dir / "scene_0001.gt"), samples[1].gt);
    EXPECT_EQ(io::read_boxes(dir / "scene_0000.boxes"), samples[0].boxes);
}
