#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "trendopt/smoothing.hpp"
#include "trendopt/verify.hpp"

using namespace trendopt;

namespace {

std::vector<std::vector<double>> random_stream(std::mt19937_64& rng, std::size_t t, std::size_t dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> out(t, std::vector<double>(dim));
    for (auto& row : out)
        for (auto& v : row) v = normal(rng);
    return out;
}

}  // namespace

TEST(HoltUpdate, OneStepFromZero) {
    HoltState s(3);
    const std::vector<double> g{1.0, -2.0, 0.5};
    std::vector<double> combined(3);
    holt_update(s, g, 0.9, 0.9, 0.5, combined);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(s.level[i], 0.1 * g[i], 1e-15);
        EXPECT_NEAR(s.trend[i], 0.01 * g[i], 1e-15);
        EXPECT_NEAR(combined[i], 0.105 * g[i], 1e-15);
        EXPECT_EQ(s.combined_prev[i], combined[i]);
    }
    EXPECT_EQ(s.step, 1u);
}

TEST(HoltUpdate, ZeroObservationStaysZero) {
    HoltState s(4);
    const std::vector<double> zero(4, 0.0);
    for (int k = 0; k < 10; ++k) holt_update(s, zero, 0.9, 0.9, 0.5);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(s.level[i], 0.0);
        EXPECT_EQ(s.trend[i], 0.0);
        EXPECT_EQ(s.combined_prev[i], 0.0);
    }
}

TEST(HoltUpdate, NoDampingIsPlainEma) {
    std::mt19937_64 rng(3);
    const auto stream = random_stream(rng, 200, 2);
    for (double beta : {0.5, 0.9, 0.999}) {
        HoltState s(2);
        std::vector<double> ema(2, 0.0);
        for (const auto& y : stream) {
            holt_update(s, y, beta, beta, 0.0);
            for (std::size_t i = 0; i < 2; ++i) {
                ema[i] = beta * ema[i] + (1.0 - beta) * y[i];
                EXPECT_EQ(s.combined_prev[i], s.level[i]);
                EXPECT_NEAR(s.level[i], ema[i], 1e-14);
            }
        }
    }
}

TEST(HoltUpdate, RejectsDimensionMismatch) {
    HoltState s(3);
    const std::vector<double> y(2, 1.0);
    EXPECT_THROW(holt_update(s, y, 0.9, 0.9, 0.5), InvalidArgument);
    const std::vector<double> ok(3, 1.0);
    EXPECT_THROW(holt_update(s, ok, 1.0, 0.9, 0.5), InvalidArgument);
    EXPECT_THROW(holt_update(s, ok, 0.9, 0.9, 1.5), InvalidArgument);
}

TEST(BiasCorrection, Examples) {
    const auto f = bias_correction_factors(1, 0.9, 0.9, 0.5);
    EXPECT_NEAR(f.level_factor, 10.0, 1e-12);
    EXPECT_NEAR(f.trend_factor, 10.0, 1e-12);

    const auto g = bias_correction_factors(1, 0.9, 0.999, 0.5);
    EXPECT_NEAR(g.trend_factor, 1000.0, 1e-9);

    const auto lim = bias_correction_factors(100000, 0.9, 0.9, 0.5);
    EXPECT_NEAR(lim.level_factor, 1.0, 1e-12);
    EXPECT_NEAR(lim.trend_factor, 0.55 / 0.1, 1e-12);
}

TEST(BiasCorrection, ZeroStepRejected) {
    EXPECT_THROW(bias_correction_factors(0, 0.9, 0.9, 0.5), InvalidArgument);
}

TEST(BiasCorrection, TrendFactorInvertsWeightSum) {
    for (double gamma : {0.0, 0.5, 0.9, 0.999})
        for (double phi : {0.0, 0.3, 1.0})
            for (std::size_t t = 1; t <= 100; ++t) {
                const double w = verify::trend_weight_sum(t, gamma, phi);
                const auto f = bias_correction_factors(t, 0.9, gamma, phi);
                EXPECT_NEAR(w * f.trend_factor, 1.0, 1e-12) << gamma << " " << phi << " " << t;
            }
}

TEST(HoltProperty, MatchesUnrollOracle) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto stream = random_stream(rng, 150, 3);
        const double beta = 0.5 + 0.49 * (trial % 5) / 4.0;
        const double gamma = 0.3 + 0.6 * (trial % 3) / 2.0;
        const double phi = 0.25 * (trial % 5);
        const auto trace = verify::holt_unroll_oracle(stream, beta, gamma, phi);
        HoltState s(3);
        for (std::size_t t = 0; t < stream.size(); ++t) {
            holt_update(s, stream[t], beta, gamma, phi);
            for (std::size_t k = 0; k < 3; ++k) {
                EXPECT_NEAR(s.level[k], trace.levels[t][k], 1e-12);
                EXPECT_NEAR(s.trend[k], trace.trends[t][k], 1e-12);
                EXPECT_NEAR(s.combined_prev[k], trace.combined[t][k], 1e-12);
            }
        }
    }
}

TEST(HoltProperty, ConstantStreamCorrectsToConstant) {
    for (double c : {-3.0, 0.25, 1.0, 1e3}) {
        HoltState s(1);
        const std::vector<double> y{c};
        for (int t = 0; t < 10000; ++t) holt_update(s, y, 0.999, 0.999, 0.5);
        const auto f = bias_correction_factors(s.step, 0.999, 0.999, 0.5);
        EXPECT_LE(std::abs(f.apply(s.level[0], s.trend[0]) - c), 1e-6 * std::max(1.0, std::abs(c)));
    }
}

TEST(HoltProperty, Linearity) {
    std::mt19937_64 rng(5);
    const auto stream = random_stream(rng, 300, 2);
    const double alpha = -4.7;
    HoltState unit(2), scaled(2);
    for (const auto& y : stream) {
        std::vector<double> ys{alpha * y[0], alpha * y[1]};
        holt_update(unit, y, 0.9, 0.8, 0.6);
        holt_update(scaled, ys, 0.9, 0.8, 0.6);
        for (std::size_t k = 0; k < 2; ++k) {
            EXPECT_NEAR(scaled.level[k], alpha * unit.level[k], 1e-12 * std::abs(alpha) * std::max(1.0, std::abs(unit.level[k])));
            EXPECT_NEAR(scaled.trend[k], alpha * unit.trend[k], 1e-12 * std::abs(alpha) * std::max(1.0, std::abs(unit.trend[k])));
            EXPECT_NEAR(scaled.combined_prev[k], alpha * unit.combined_prev[k],
                        1e-12 * std::abs(alpha) * std::max(1.0, std::abs(unit.combined_prev[k])));
        }
    }
}
