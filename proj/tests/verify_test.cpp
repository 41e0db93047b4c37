#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "trendopt/models.hpp"
#include "trendopt/verify.hpp"

using namespace trendopt;

TEST(FiniteDiff, DetectsCorruptedGradient) {
    const auto ds = synth_classification(3, 30, 4, 3, 2.0);
    std::vector<std::size_t> idx(ds.n);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    LogisticRegression lr(4, 3);
    const auto p = lr.initial_params(2);
    const Batch batch{&ds, idx};
    auto grad = lr.eval(p, batch).grad;
    std::size_t big = 0;
    for (std::size_t i = 1; i < grad.size(); ++i)
        if (std::abs(grad[i]) > std::abs(grad[big])) big = i;
    grad[big] *= 2.0;
    const auto rep = verify::finite_diff_check(
        [&](std::span<const double> x) { return lr.eval(x, batch).loss; }, p, grad);
    EXPECT_GT(rep.max_rel_error, 0.3);
    EXPECT_EQ(rep.worst_index, big);
}

TEST(HoltOracle, ZeroStream) {
    const std::vector<std::vector<double>> zeros(10, std::vector<double>(2, 0.0));
    const auto tr = verify::holt_unroll_oracle(zeros, 0.9, 0.9, 0.5);
    for (std::size_t t = 0; t < 10; ++t)
        for (std::size_t k = 0; k < 2; ++k) {
            EXPECT_EQ(tr.levels[t][k], 0.0);
            EXPECT_EQ(tr.trends[t][k], 0.0);
        }
}

TEST(HoltOracle, SingleImpulseObservedAtFive) {
    // y = (1, 0, 0, 0, 0): hand-propagated levels, trend from the explicit sum.
    const double beta = 0.9, gamma = 0.9, phi = 0.5;
    std::vector<std::vector<double>> ys{{1.0}, {0.0}, {0.0}, {0.0}, {0.0}};
    const auto tr = verify::holt_unroll_oracle(ys, beta, gamma, phi);
    std::vector<double> level{0.0}, trend{0.0};
    double comb = 0.0;
    for (double y : {1.0, 0.0, 0.0, 0.0, 0.0}) {
        const double l = beta * comb + (1 - beta) * y;
        const double b = gamma * phi * trend.back() + (1 - gamma) * (l - level.back());
        level.push_back(l);
        trend.push_back(b);
        comb = l + phi * b;
    }
    double sum = 0.0;
    for (int i = 1; i <= 5; ++i) sum += (1 - gamma) * std::pow(gamma * phi, 5 - i) * (level[i] - level[i - 1]);
    EXPECT_NEAR(tr.trends[4][0], sum, 1e-16);
    EXPECT_NEAR(tr.trends[4][0], trend[5], 1e-16);
    // First term of the sum is the impulse contribution (1-gamma)(gamma phi)^4 * l_1.
    EXPECT_NEAR((1 - gamma) * std::pow(gamma * phi, 4) * level[1], 0.1 * 0.45 * 0.45 * 0.45 * 0.45 * 0.1, 1e-18);
}

TEST(ExpectationMc, ConstantDistributionIsExact) {
    const double c = 0.5;
    for (std::size_t t : {1u, 2u, 10u}) {
        const auto r = verify::expectation_mc_check([c](std::mt19937_64&) { return c; }, 100, t, 0.9, 0.9, 0.5);
        EXPECT_EQ(r.zeta_se, 0.0);
        EXPECT_NEAR(r.history_discrepancy, 0.0, 1e-15);
        EXPECT_NEAR(r.zeta, verify::expected_zeta(c, t, 0.9, 0.9, 0.5), 1e-15);
    }
    // At t = 1 the stationary prediction is exact.
    EXPECT_NEAR(verify::expected_zeta(c, 1, 0.9, 0.9, 0.5), 0.0, 1e-18);
}

TEST(ExpectationMc, UniformStreamMatchesLinearExpectation) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto r = verify::expectation_mc_check([&u](std::mt19937_64& g) { return u(g); }, 100000, 10, 0.9, 0.9,
                                                0.5, 17);
    // E[b_t] is exactly the weighted sum of per-step expected level increments.
    EXPECT_LE(std::abs(r.history_discrepancy), 3.0 * r.trend_se + 1e-15);
    // The stationary form leaves the zero-initialisation transient zeta(t),
    // which the Monte Carlo reproduces within three standard errors.
    const double zeta = verify::expected_zeta(0.5, 10, 0.9, 0.9, 0.5);
    EXPECT_GT(zeta, 0.0);
    EXPECT_LE(std::abs(r.zeta - zeta), 3.0 * r.zeta_se);
}

TEST(ExpectationMc, UndampedWeight) {
    const auto r = verify::expectation_mc_check([](std::mt19937_64&) { return 1.0; }, 1, 7, 0.9, 0.9, 1.0);
    EXPECT_NEAR(r.weight, 1.0 - std::pow(0.9, 7), 1e-15);
}

TEST(MomentBound, EqualityAtFirstStep) {
    const double g = 2.5;
    const std::vector<std::vector<double>> stream{{g}};
    const auto rep = verify::moment_bound_check(stream, 0.9, 0.9, 0.5, 0.999, 0.999, 0.5, 1);
    EXPECT_TRUE(rep.passed);
    EXPECT_NEAR(rep.worst_margin, 0.0, 1e-14);
    EXPECT_NEAR(verify::summation_bound_coefficient(1, 0.9, 0.9, 0.5) * g, (2 - 0.9) * g, 1e-15);
}

TEST(MomentBound, ZeroStream) {
    const std::vector<std::vector<double>> stream(20, std::vector<double>(3, 0.0));
    const auto rep = verify::moment_bound_check(stream, 0.9, 0.9, 0.5, 0.999, 0.999, 0.5, 20);
    EXPECT_TRUE(rep.passed);
    EXPECT_EQ(rep.worst_margin, 0.0);
}

TEST(MomentBound, RandomNonNegativeStreams) {
    std::mt19937_64 rng(21);
    std::exponential_distribution<double> e(1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::vector<double>> stream(100, std::vector<double>(2));
        for (auto& row : stream)
            for (auto& v : row) v = e(rng);
        const auto rep = verify::moment_bound_check(stream, 0.9, 0.9, 0.5, 0.999, 0.999, 0.5, 100);
        EXPECT_TRUE(rep.passed) << "trial " << trial << " step " << rep.worst_step;
    }
}
