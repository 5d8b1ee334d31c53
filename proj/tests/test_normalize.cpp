#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oodseg/errors.hpp"
#include "oodseg/normalize.hpp"

using namespace oodseg;

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(RegionMeans, MatchHandComputation) {
    const ScoreMap m(2, 2, {1, 3, 5, 7});
    const BinaryMask fg(2, 2, {1, 1, 0, 0});
    const RegionStats s = region_means(m, fg);
    EXPECT_DOUBLE_EQ(s.mu_fg, 2.0);
    EXPECT_DOUBLE_EQ(s.mu_bg, 6.0);
    EXPECT_EQ(s.fg_count, 2u);
    EXPECT_EQ(s.bg_count, 2u);
}

TEST(RegionMeans, EmptyRegionFallsBackToGlobalMean) {
    const ScoreMap m(1, 4, {1, 2, 3, 6});
    const RegionStats s = region_means(m, BinaryMask::zeros(1, 4));
    EXPECT_TRUE(s.fg_empty());
    EXPECT_DOUBLE_EQ(s.mu_fg, 3.0);
    EXPECT_DOUBLE_EQ(s.mu_bg, 3.0);
}

TEST(Arns, PixelAtRegionMeanMapsToMidpoint) {
    const ScoreMap m(1, 3, {1, 2, 3});
    const ScoreMap n = arns_normalize(m, BinaryMask::ones(1, 3), 0.3);
    EXPECT_DOUBLE_EQ(n[1], 0.55);
}

TEST(Arns, MatchesFormulaPerRegion) {
    const ScoreMap m(2, 2, {0.0, 4.0, -1.0, 2.0});
    const BinaryMask fg(2, 2, {0, 1, 0, 1});
    const ScoreMap n = arns_normalize(m, fg, 0.2);
    // mu_fg = 3, mu_bg = -0.5
    EXPECT_NEAR(n[0], 0.5 * logistic(0.5) + 0.2, 1e-15);
    EXPECT_NEAR(n[1], 0.5 * logistic(1.0) + 0.2, 1e-15);
    EXPECT_NEAR(n[2], 0.5 * logistic(-0.5) + 0.2, 1e-15);
    EXPECT_NEAR(n[3], 0.5 * logistic(-1.0) + 0.2, 1e-15);
}

TEST(Arns, RangeAndMonotonicityOnRandomMaps) {
    std::mt19937_64 rng(3);
    for (int k = 0; k < 50; ++k) {
        const std::size_t h = 1 + rng() % 16, w = 1 + rng() % 16;
        const double alpha = std::uniform_real_distribution<double>(0.0, 0.5)(rng);
        std::normal_distribution<double> d(0.0, 4.0);
        std::vector<double> s(h * w);
        std::vector<std::uint8_t> f(h * w);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = d(rng);
            f[i] = rng() % 3 == 0;
        }
        const ScoreMap m(h, w, s);
        const BinaryMask fg(h, w, f);
        const ScoreMap n = arns_normalize(m, fg, alpha);
        for (std::size_t i = 0; i < n.size(); ++i) {
            ASSERT_GE(n[i], alpha - 1e-12);
            ASSERT_LE(n[i], alpha + 0.5 + 1e-12);
            for (std::size_t j = 0; j < n.size(); ++j) {
                if (fg[i] == fg[j] && m[i] < m[j]) {
                    ASSERT_LT(n[i], n[j]);
                }
            }
        }
    }
}

TEST(Arns, AlphaOutsideRangeRejected) {
    const ScoreMap m(1, 1, {0.0});
    EXPECT_THROW(arns_normalize(m, BinaryMask::zeros(1, 1), -0.1), ValidationError);
    EXPECT_THROW(arns_normalize(m, BinaryMask::zeros(1, 1), 0.6), ValidationError);
    EXPECT_THROW(arns_normalize(m, BinaryMask::zeros(1, 2), 0.3), Error);
}

TEST(Strategies, NamesRoundTrip) {
    for (NormStrategy s : kAllStrategies) EXPECT_EQ(parse_strategy(to_string(s)), s);
    EXPECT_THROW(parse_strategy("bogus"), ValidationError);
}

TEST(Strategies, NoneIsIdentity) {
    const ScoreMap m(1, 3, {-5, 0.5, 9});
    EXPECT_EQ(normalize_with_strategy(m, BinaryMask::zeros(1, 3), {0.3, NormStrategy::none}), m);
}

TEST(Strategies, GlobalLinearSpansRange) {
    const ScoreMap m(1, 3, {-2, 0, 6});
    const ScoreMap n = normalize_with_strategy(m, BinaryMask::zeros(1, 3), {0.3, NormStrategy::global_linear});
    EXPECT_DOUBLE_EQ(n[0], 0.3);
    EXPECT_DOUBLE_EQ(n[1], 0.3 + 0.5 * 0.25);
    EXPECT_DOUBLE_EQ(n[2], 0.8);
}

TEST(Strategies, ConstantInputMapsToMidpoint) {
    const ScoreMap m = ScoreMap::filled(2, 2, 4.0);
    for (NormStrategy s : {NormStrategy::global_linear, NormStrategy::region_separate}) {
        const ScoreMap n = normalize_with_strategy(m, BinaryMask(2, 2, {1, 0, 0, 0}), {0.3, s});
        for (double v : n.scores()) EXPECT_DOUBLE_EQ(v, 0.55);
    }
}

TEST(Strategies, GlobalSigmoidUsesGlobalMean) {
    const ScoreMap m(1, 2, {0.0, 2.0});
    const ScoreMap n = normalize_with_strategy(m, BinaryMask(1, 2, {0, 1}), {0.1, NormStrategy::global_sigmoid});
    EXPECT_NEAR(n[0], 0.5 * logistic(-1.0) + 0.1, 1e-15);
    EXPECT_NEAR(n[1], 0.5 * logistic(1.0) + 0.1, 1e-15);
}

TEST(Strategies, RegionSeparateNormalizesEachRegion) {
    const ScoreMap m(1, 4, {0, 10, 100, 200});
    const ScoreMap n = normalize_with_strategy(m, BinaryMask(1, 4, {1, 1, 0, 0}), {0.3, NormStrategy::region_separate});
    EXPECT_DOUBLE_EQ(n[0], 0.3);
    EXPECT_DOUBLE_EQ(n[1], 0.8);
    EXPECT_DOUBLE_EQ(n[2], 0.3);
    EXPECT_DOUBLE_EQ(n[3], 0.8);
}

TEST(Strategies, RegionAdaptiveMatchesArns) {
    const ScoreMap m(1, 3, {0.2, 1.7, -3});
    const BinaryMask fg(1, 3, {1, 0, 1});
    EXPECT_EQ(normalize_with_strategy(m, fg, {0.25, NormStrategy::region_adaptive}), arns_normalize(m, fg, 0.25));
}

TEST(Strategies, AllButNoneStayInRange) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> d(1.0, 3.0);
    std::vector<double> s(64);
    std::vector<std::uint8_t> f(64);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = d(rng);
        f[i] = i % 5 == 0;
    }
    for (NormStrategy st : kAllStrategies) {
        if (st == NormStrategy::none) continue;
        const ScoreMap n = normalize_with_strategy(ScoreMap(8, 8, s), BinaryMask(8, 8, f), {0.4, st});
        for (double v : n.scores()) {
            EXPECT_GE(v, 0.4);
            EXPECT_LE(v, 0.9);
        }
    }
}
