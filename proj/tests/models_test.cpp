#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "trendopt/data.hpp"
#include "trendopt/models.hpp"
#include "trendopt/verify.hpp"

using namespace trendopt;

namespace {

std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

std::vector<double> random_params(std::size_t n, std::uint64_t seed, double sd) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sd);
    std::vector<double> p(n);
    for (auto& v : p) v = normal(rng);
    return p;
}

}  // namespace

TEST(LogReg, ZeroWeightsGiveLogK) {
    const auto ds = synth_classification(1, 50, 6, 4, 3.0);
    const auto idx = iota(ds.n);
    LogisticRegression lr(6, 4);
    const std::vector<double> zeros(lr.dim(), 0.0);
    EXPECT_NEAR(lr.eval(zeros, Batch{&ds, idx}).loss, std::log(4.0), 1e-14);
}

TEST(LogReg, TwoClassBiasGradient) {
    Dataset ds;
    ds.n = 1;
    ds.d = 2;
    ds.num_classes = 2;
    ds.features = {0.3, -1.2};
    ds.labels = {0};
    const std::vector<std::size_t> idx{0};
    LogisticRegression lr(2, 2);
    const std::vector<double> zeros(lr.dim(), 0.0);
    const auto ev = lr.eval(zeros, Batch{&ds, idx});
    EXPECT_NEAR(ev.grad[4], -0.5, 1e-15);
    EXPECT_NEAR(ev.grad[5], 0.5, 1e-15);
    // Weight rows: (p - y) * x
    EXPECT_NEAR(ev.grad[0], -0.5 * 0.3, 1e-15);
    EXPECT_NEAR(ev.grad[3], 0.5 * -1.2, 1e-15);
}

TEST(LogReg, LabelOutOfRange) {
    auto ds = synth_classification(1, 10, 3, 2, 1.0);
    ds.labels[3] = 5;
    const auto idx = iota(ds.n);
    LogisticRegression lr(3, 2);
    const std::vector<double> p(lr.dim(), 0.0);
    EXPECT_THROW(lr.eval(p, Batch{&ds, idx}), InvalidArgument);
    const std::vector<std::size_t> none;
    EXPECT_THROW(lr.eval(p, Batch{&ds, none}), InvalidArgument);
}

TEST(LogReg, GradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto ds = synth_classification(seed, 40, 5, 3, 2.0);
        const auto idx = iota(ds.n);
        for (double l2 : {0.0, 1e-2}) {
            LogisticRegression lr(5, 3, l2);
            const auto p = random_params(lr.dim(), seed + 100, 0.5);
            const auto rep = verify::finite_diff_check(lr, p, Batch{&ds, idx});
            EXPECT_LT(rep.max_rel_error, 1e-5) << "seed " << seed << " l2 " << l2;
        }
    }
}

TEST(LogReg, ConvexAlongSegments) {
    const auto ds = synth_classification(4, 80, 4, 3, 2.0);
    const auto idx = iota(ds.n);
    LogisticRegression lr(4, 3);
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto a = random_params(lr.dim(), 2 * s, 2.0);
        const auto b = random_params(lr.dim(), 2 * s + 1, 2.0);
        std::vector<double> mid(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) mid[i] = 0.5 * (a[i] + b[i]);
        const Batch batch{&ds, idx};
        const double fa = lr.eval(a, batch).loss, fb = lr.eval(b, batch).loss, fm = lr.eval(mid, batch).loss;
        EXPECT_LE(fm, 0.5 * (fa + fb) + 1e-10);
    }
}

TEST(Mlp, ParameterLayout) {
    Mlp net(MlpSpec{{4, 3, 2}, Activation::ReLU, {}, 0.0});
    EXPECT_EQ(net.dim(), 3u * 4 + 3 + 2 * 3 + 2);
    EXPECT_EQ(net.weight_offset(0), 0u);
    EXPECT_EQ(net.bias_offset(0), 12u);
    EXPECT_EQ(net.weight_offset(1), 15u);
    EXPECT_EQ(net.bias_offset(1), 21u);
    EXPECT_TRUE(net.deterministic());
    EXPECT_FALSE(Mlp(MlpSpec{{4, 3, 2}, Activation::ReLU, {0.5}, 0.0}).deterministic());
    EXPECT_THROW(Mlp(MlpSpec{{4, 3, 2}, Activation::ReLU, {1.0}, 0.0}), InvalidArgument);
    EXPECT_THROW(Mlp(MlpSpec{{4, 3, 2}, Activation::ReLU, {0.1, 0.1}, 0.0}), InvalidArgument);
}

TEST(Mlp, ZeroOutputLayerGivesLogK) {
    const auto ds = synth_classification(2, 30, 5, 3, 2.0);
    const auto idx = iota(ds.n);
    Mlp net(MlpSpec{{5, 8, 8, 3}, Activation::ReLU, {0.5, 0.5}, 0.0});
    auto p = net.initial_params(1);
    for (std::size_t i = net.weight_offset(2); i < net.dim(); ++i) p[i] = 0.0;
    EXPECT_NEAR(net.eval(p, Batch{&ds, idx}, 99).loss, std::log(3.0), 1e-14);
}

TEST(Mlp, GradientMatchesFiniteDifferencesWithoutDropout) {
    for (auto act : {Activation::ReLU, Activation::Tanh}) {
        const auto ds = synth_classification(7, 16, 6, 3, 2.0);
        const auto idx = iota(ds.n);
        Mlp net(MlpSpec{{6, 7, 5, 3}, act, {}, 1e-3});
        const auto p = net.initial_params(3);
        const Batch batch{&ds, idx};
        ASSERT_GT(net.min_abs_preactivation(p, batch), 1e-6);
        EXPECT_LT(verify::finite_diff_check(net, p, batch).max_rel_error, 1e-5);
    }
}

TEST(Mlp, GradientMatchesFiniteDifferencesWithFrozenMask) {
    const auto ds = synth_classification(8, 16, 6, 3, 2.0);
    const auto idx = iota(ds.n);
    Mlp net(MlpSpec{{6, 9, 9, 3}, Activation::ReLU, {0.5, 0.5}, 0.0});
    // Random biases keep dropped-out units away from the ReLU kink at 0.
    const auto p = random_params(net.dim(), 4, 0.5);
    const Batch batch{&ds, idx};
    const std::uint64_t stream = 1234;
    EXPECT_EQ(net.eval(p, batch, stream).loss, net.eval(p, batch, stream).loss);
    EXPECT_NE(net.eval(p, batch, stream).loss, net.eval(p, batch, stream + 1).loss);
    ASSERT_GT(net.min_abs_preactivation(p, batch, stream), 1e-6);
    EXPECT_LT(verify::finite_diff_check(net, p, batch, stream).max_rel_error, 1e-5);
}

TEST(Mlp, NonFiniteActivationReportsLayer) {
    const auto ds = synth_classification(2, 4, 3, 2, 1.0);
    const auto idx = iota(ds.n);
    Mlp net(MlpSpec{{3, 4, 2}, Activation::ReLU, {}, 0.0});
    auto p = net.initial_params(0);
    p[net.weight_offset(1)] = INFINITY;
    try {
        (void)net.eval(p, Batch{&ds, idx});
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_EQ(e.index(), 1u);
    }
}

TEST(Quadratic, MinimizerAndGradient) {
    const auto q = Quadratic::random(6, 3, 20.0);
    const auto at_min = q.eval(q.minimizer());
    EXPECT_EQ(at_min.loss, 0.0);
    for (double g : at_min.grad) EXPECT_EQ(g, 0.0);
    const auto p = random_params(6, 9, 1.0);
    // Central differences are exact on a quadratic, so a wide step isolates round-off.
    EXPECT_LT(verify::finite_diff_check(q, p, Batch{}, 0, 1e-3).max_rel_error, 1e-9);
}

TEST(Rosenbrock, KnownPoints) {
    Rosenbrock r;
    const auto at_min = r.eval(std::vector<double>{1.0, 1.0});
    EXPECT_EQ(at_min.loss, 0.0);
    EXPECT_EQ(at_min.grad, (std::vector<double>{0.0, 0.0}));
    const auto origin = r.eval(std::vector<double>{0.0, 0.0});
    EXPECT_EQ(origin.loss, 1.0);
    EXPECT_EQ(origin.grad, (std::vector<double>{-2.0, 0.0}));
    EXPECT_LT(verify::finite_diff_check(r, std::vector<double>{-0.7, 1.3}, Batch{}).max_rel_error, 1e-7);
}
