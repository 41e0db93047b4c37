#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "trendopt/harness.hpp"

using namespace trendopt;

namespace {

ExperimentSpec small_lr_spec() {
    ExperimentSpec spec;
    spec.data.n_train = 300;
    spec.data.n_test = 100;
    spec.data.features = 5;
    spec.data.classes = 3;
    spec.epochs = 3;
    spec.batch_size = 32;
    spec.seeds = {1, 2};
    spec.optimizers = {{"adam", HyperParams::defaults(OptimizerKind::Adam)},
                       {"adamt", HyperParams::defaults(OptimizerKind::AdamT)}};
    for (auto& o : spec.optimizers) o.hp.eta = 1e-2;
    return spec;
}

}  // namespace

TEST(RunExperiment, SharedInitAndBatchOrder) {
    const auto spec = small_lr_spec();
    const auto recs = run_experiment(spec);
    ASSERT_EQ(recs.size(), 4u);
    // optimizer-major ordering
    EXPECT_EQ(recs[0].optimizer, "adam");
    EXPECT_EQ(recs[1].seed, 2u);
    EXPECT_EQ(recs[2].optimizer, "adamt");
    for (std::size_t s = 0; s < 2; ++s) {
        const auto& a = recs[s];
        const auto& b = recs[2 + s];
        EXPECT_EQ(a.epochs.size(), spec.epochs + 1);
        EXPECT_EQ(a.epochs[0].train_loss, b.epochs[0].train_loss);
        EXPECT_EQ(a.epochs[0].test_acc, b.epochs[0].test_acc);
        EXPECT_EQ(a.batch_hash, b.batch_hash);
        EXPECT_NE(a.epochs.back().train_loss, b.epochs.back().train_loss);
    }
    EXPECT_NE(recs[0].batch_hash, recs[1].batch_hash);
}

TEST(RunExperiment, ThreadCountDoesNotChangeResults) {
    auto spec = small_lr_spec();
    const auto serial = run_experiment(spec);
    spec.threads = 3;
    const auto parallel = run_experiment(spec);
    ASSERT_EQ(serial.size(), parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i)
        for (std::size_t e = 0; e < serial[i].epochs.size(); ++e)
            EXPECT_EQ(serial[i].epochs[e].train_loss, parallel[i].epochs[e].train_loss);
}

TEST(RunExperiment, DivergenceIsFlagged) {
    auto spec = small_lr_spec();
    spec.optimizers = {{"sgd_huge", HyperParams::defaults(OptimizerKind::SGD)},
                       {"adam", HyperParams::defaults(OptimizerKind::Adam)}};
    spec.optimizers[0].hp.eta = 1e300;
    spec.model.kind = ModelKind::Mlp;
    spec.model.hidden = {8};
    const auto recs = run_experiment(spec);
    EXPECT_TRUE(recs[0].diverged);
    EXPECT_FALSE(recs[2].diverged);
    EXPECT_EQ(recs[2].epochs.size(), spec.epochs + 1);
}

TEST(RunExperiment, RejectsEmptyOptimizerList) {
    auto spec = small_lr_spec();
    spec.optimizers.clear();
    EXPECT_THROW(run_experiment(spec), ConfigError);
}

TEST(RunExperiment, SgdOnQuadraticDescends) {
    const auto q = Quadratic::random(5, 1, 10.0);
    std::vector<double> x(5, 0.0);
    SgdState s(5);
    HyperParams hp;
    hp.eta = 1.9 / 10.0;  // below 2 / L
    double prev = q.eval(x).loss;
    for (int k = 0; k < 200; ++k) {
        step_sgd(s, x, q.eval(x).grad, hp);
        const double cur = q.eval(x).loss;
        EXPECT_LE(cur, prev);
        prev = cur;
    }
}

TEST(LossDifference, Basics) {
    const std::vector<double> a{1.0, 0.5, 0.25}, b{0.75, 0.25, 0.0};
    EXPECT_EQ(loss_difference(a, a), (std::vector<double>{0, 0, 0}));
    EXPECT_EQ(loss_difference(a, b), (std::vector<double>{0.25, 0.25, 0.25}));
    const std::vector<double> c{1.0};
    EXPECT_THROW(loss_difference(a, c), InvalidArgument);
}

TEST(Aggregate, MeanAndSampleStd) {
    RunRecord r1, r2;
    r1.optimizer = r2.optimizer = "adamt";
    r1.epochs = {{0, 1.0, 0.5, 1.0, 0.5}, {1, 0.3, 0.9, 0.35, 0.8}};
    r2.epochs = {{0, 1.0, 0.5, 1.0, 0.5}, {1, 0.5, 0.7, 0.55, 0.6}};
    const auto rows = aggregate_runs({r1, r2});
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].metric, Metric::TrainLoss);
    EXPECT_NEAR(rows[0].mean, 0.4, 1e-15);
    EXPECT_NEAR(rows[0].stddev, std::sqrt(0.02), 1e-15);
    const auto same = aggregate_runs({r1, r1});
    EXPECT_EQ(same[0].stddev, 0.0);
    const auto single = aggregate_runs({r1});
    EXPECT_EQ(single[0].mean, 0.3);
    EXPECT_TRUE(std::isnan(single[0].stddev));
    EXPECT_EQ(single[0].runs, 1u);
}

TEST(Regret, Basics) {
    const std::vector<double> f{1.0, 2.0, 3.0};
    EXPECT_EQ(compute_regret(f, f).cumulative, (std::vector<double>{0, 0, 0}));
    const std::vector<double> g{0.5, 1.5, 2.5};
    const auto r = compute_regret(f, g);
    EXPECT_EQ(r.cumulative, (std::vector<double>{0.5, 1.0, 1.5}));
    EXPECT_NEAR(r.normalized[2], 1.5 / std::sqrt(3.0), 1e-15);
    EXPECT_THROW(compute_regret(f, std::vector<double>{1.0}), InvalidArgument);
}

TEST(Regret, SlopeOfPowerLaw) {
    std::vector<double> r(10000);
    for (std::size_t t = 1; t <= r.size(); ++t) r[t - 1] = 3.0 * std::sqrt(static_cast<double>(t));
    EXPECT_NEAR(loglog_slope(r, 100, 10000), 0.5, 1e-12);
}

TEST(FindOptimum, QuadraticExact) {
    const auto q = Quadratic::random(8, 4, 50.0);
    const auto x = find_optimum(q, Batch{}, std::vector<double>(8, 0.0));
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(x[i], q.minimizer()[i], 1e-10);
}

TEST(FindOptimum, RegularizedLogRegUnique) {
    const auto ds = synth_classification(3, 500, 6, 2, 2.0);
    std::vector<std::size_t> idx(ds.n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    LogisticRegression lr(6, 2, 1e-4);
    const Batch batch{&ds, idx};
    const auto x1 = find_optimum(lr, batch, std::vector<double>(lr.dim(), 0.0));
    double gmax = 0.0;
    for (double g : lr.eval(x1, batch).grad) gmax = std::max(gmax, std::abs(g));
    EXPECT_LE(gmax, 1e-10);
    // ||x1 - x2|| <= (|g1| + |g2|) / l2, so a 1e-8 match needs a tighter stop.
    const auto x1_tight = find_optimum(lr, batch, std::vector<double>(lr.dim(), 0.0), 1e-13);
    const auto x2 = find_optimum(lr, batch, lr.initial_params(77), 1e-13);
    for (std::size_t i = 0; i < x1.size(); ++i) EXPECT_NEAR(x1_tight[i], x2[i], 1e-8);
}

TEST(FindOptimum, IterationCap) {
    const auto q = Quadratic::random(4, 4, 1e4);
    EXPECT_THROW(find_optimum(q, Batch{}, std::vector<double>(4, 0.0), 1e-10, 3), NoConvergence);
}

TEST(Regret, TrackedRunIsNonNegativeAgainstOptimum) {
    ExperimentSpec spec;
    spec.data.n_train = 400;
    spec.data.n_test = 50;
    spec.data.features = 5;
    spec.epochs = 20;
    spec.batch_size = 32;
    spec.seeds = {3};
    spec.track_regret = true;
    spec.optimizers = {{"adamt", HyperParams::defaults(OptimizerKind::AdamT)}};
    spec.optimizers[0].hp.eta = 1e-2;
    const auto recs = run_experiment(spec);
    const auto& rec = recs.front();
    ASSERT_EQ(rec.step_losses.size(), 20u * 13u);
    const auto r = compute_regret(rec.step_losses, rec.step_optimum_losses);
    EXPECT_GT(r.cumulative.back(), 0.0);
}

TEST(Regret, OptimumGivesLargestRegretOverWholeEpochs) {
    // n divisible by the batch size: the per-step losses of one epoch sum to
    // (n / B) times the full-batch loss, which x* minimises.
    ExperimentSpec spec;
    spec.data.n_train = 320;
    spec.data.n_test = 20;
    spec.data.features = 4;
    spec.epochs = 3;
    spec.batch_size = 32;
    spec.seeds = {5};
    spec.track_regret = true;
    spec.optimizers = {{"adamt", HyperParams::defaults(OptimizerKind::AdamT)}};
    spec.optimizers[0].hp.eta = 1e-2;
    const auto rec = run_experiment(spec).front();
    const auto data = make_datasets(spec.data);
    ModelSpec ms = spec.model;
    ms.l2 = spec.regret_l2;
    const auto model = make_model(ms, data.train.d, data.train.num_classes);
    const auto r_star = compute_regret(rec.step_losses, rec.step_optimum_losses).cumulative;

    std::mt19937_64 rng(99);
    std::normal_distribution<double> normal(0.0, 0.3);
    for (int k = 0; k < 5; ++k) {
        std::vector<double> z(model->dim());
        for (auto& v : z) v = normal(rng);
        BatchStream stream(data.train.n, spec.batch_size, mix_seed(5, 0xBA7C));
        std::vector<double> fz;
        for (std::size_t t = 0; t < rec.step_losses.size(); ++t)
            fz.push_back(model->eval(z, Batch{&data.train, stream.next_batch()}).loss);
        const auto r_z = compute_regret(rec.step_losses, fz).cumulative;
        for (std::size_t e = 1; e <= spec.epochs; ++e) {
            const std::size_t t = e * 10 - 1;
            EXPECT_LE(r_z[t], r_star[t] + 1e-9) << "point " << k << " epoch " << e;
        }
    }
}
