#pragma once

// Experiment runner: shared initialisation and batch order per seed, per-epoch
// curves, seed aggregation and online regret against the best fixed point.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "trendopt/data.hpp"
#include "trendopt/error.hpp"
#include "trendopt/models.hpp"
#include "trendopt/optim.hpp"

namespace trendopt {

enum class ModelKind { LogReg, Mlp };

struct ModelSpec {
    ModelKind kind = ModelKind::LogReg;
    std::vector<std::size_t> hidden;  // hidden widths (Mlp only)
    Activation activation = Activation::ReLU;
    std::vector<double> dropout;      // per hidden layer (Mlp only)
    double l2 = 0.0;
};

enum class DataSource { Synthetic, Idx };

struct DatasetSpec {
    DataSource source = DataSource::Synthetic;
    // synthetic
    std::uint64_t seed = 2024;
    std::size_t n_train = 2000;
    std::size_t n_test = 500;
    std::size_t features = 20;
    std::size_t classes = 2;
    double separation = 2.0;
    // idx
    std::string train_images, train_labels, test_images, test_labels;
    bool signed_range = false;
};

struct OptimizerSpec {
    std::string name;  // label used in records and file names
    HyperParams hp;
};

struct ExperimentSpec {
    std::string name = "experiment";
    ModelSpec model;
    DatasetSpec data;
    std::vector<OptimizerSpec> optimizers;
    std::size_t epochs = 10;
    std::size_t batch_size = 128;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    bool track_regret = false;
    double regret_l2 = 1e-4;
    bool early_stop = false;
    std::size_t threads = 1;

    void validate() const {
        if (optimizers.empty()) throw ConfigError("optimizers", "at least one optimizer is required");
        if (seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
        if (epochs == 0) throw ConfigError("epochs", "must be >= 1");
        if (batch_size == 0) throw ConfigError("batch_size", "must be >= 1");
        for (const auto& o : optimizers) {
            try {
                o.hp.validate();
            } catch (const InvalidArgument& e) {
                throw ConfigError("optimizers." + o.name, e.what());
            }
        }
        if (track_regret && model.kind != ModelKind::LogReg)
            throw ConfigError("track_regret", "regret tracking needs the convex logreg model");
        if (track_regret && !(regret_l2 > 0.0))
            throw ConfigError("regret_l2", "must be > 0 for a unique optimum");
    }
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_loss = 0.0;
    double test_acc = 0.0;
};

struct RunRecord {
    std::string optimizer;
    OptimizerKind kind = OptimizerKind::AdamT;
    std::uint64_t seed = 0;
    std::vector<EpochMetrics> epochs;          // epoch 0 = initial parameters
    std::vector<double> step_losses;           // f_t(x_t), regret tracking only
    std::vector<double> step_optimum_losses;   // f_t(x*), regret tracking only
    std::uint64_t batch_hash = 0;              // digest of the index stream
    bool diverged = false;
    std::size_t diverged_at_step = 0;
    bool stopped_early = false;
    double wall_seconds = 0.0;
};

// ---------------------------------------------------------------------------

inline std::unique_ptr<Classifier> make_model(const ModelSpec& spec, std::size_t features,
                                              std::size_t classes) {
    if (spec.kind == ModelKind::LogReg) return std::make_unique<LogisticRegression>(features, classes, spec.l2);
    MlpSpec m;
    m.widths.push_back(features);
    m.widths.insert(m.widths.end(), spec.hidden.begin(), spec.hidden.end());
    m.widths.push_back(classes);
    m.activation = spec.activation;
    m.dropout = spec.dropout;
    m.l2 = spec.l2;
    return std::make_unique<Mlp>(std::move(m));
}

struct DatasetPair {
    Dataset train;
    Dataset test;
};

inline DatasetPair make_datasets(const DatasetSpec& spec) {
    DatasetPair out;
    if (spec.source == DataSource::Synthetic) {
        out.train = synth_classification(spec.seed, spec.n_train, spec.features, spec.classes,
                                         spec.separation, 0);
        out.test = synth_classification(spec.seed, spec.n_test, spec.features, spec.classes,
                                        spec.separation, 1);
    } else {
        out.train = load_idx(spec.train_images, spec.train_labels, spec.signed_range);
        out.test = load_idx(spec.test_images, spec.test_labels, spec.signed_range);
        out.test.split = Split::Test;
        const std::size_t k = std::max(out.train.num_classes, out.test.num_classes);
        out.train.num_classes = out.test.num_classes = k;
        if (out.train.d != out.test.d) throw InvalidArgument("train/test feature counts differ");
    }
    out.train.validate();
    out.test.validate();
    return out;
}

// ---------------------------------------------------------------------------

/// Full-batch gradient descent with Barzilai-Borwein trial steps and Armijo
/// backtracking, until ||grad||_inf <= tolerance. Intended for strongly
/// convex objectives (unique minimiser).
inline std::vector<double> find_optimum(const Objective& objective, const Batch& batch,
                                        std::vector<double> x, double tolerance = 1e-10,
                                        std::size_t max_iterations = 1'000'000) {
    if (x.size() != objective.dim()) throw InvalidArgument("find_optimum: start has wrong size");
    auto inf_norm = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double e : v) m = std::max(m, std::abs(e));
        return m;
    };
    Evaluation cur = objective.eval(x, batch, 0);
    double step = 1.0;
    std::vector<double> trial(x.size());
    for (std::size_t it = 0; it < max_iterations; ++it) {
        if (!std::isfinite(cur.loss)) throw NumericError("find_optimum: non-finite loss", it);
        if (inf_norm(cur.grad) <= tolerance) return x;
        double gg = 0.0;
        for (double g : cur.grad) gg += g * g;
        double t = step;
        Evaluation next;
        for (int tries = 0;; ++tries) {
            for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] - t * cur.grad[i];
            next = objective.eval(trial, batch, 0);
            if (std::isfinite(next.loss) && next.loss <= cur.loss - 1e-4 * t * gg) break;
            // Near the optimum the loss decrease drops below round-off; accept
            // steps that shrink the gradient instead.
            if (std::isfinite(next.loss) && next.loss <= cur.loss + 1e-14 * std::abs(cur.loss) &&
                inf_norm(next.grad) < inf_norm(cur.grad))
                break;
            t *= 0.5;
            if (tries > 60) throw NoConvergence("find_optimum: line search failed");
        }
        // Barzilai-Borwein estimate for the next trial step.
        double sy = 0.0, ss = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double s = trial[i] - x[i];
            const double y = next.grad[i] - cur.grad[i];
            sy += s * y;
            ss += s * s;
        }
        step = sy > 0.0 ? std::clamp(ss / sy, 1e-10, 1e10) : 2.0 * t;
        x.swap(trial);
        cur = std::move(next);
    }
    throw NoConvergence("find_optimum: iteration cap exceeded");
}

// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
    return mix_seed(h, v);
}

inline bool finite_metrics(const EpochMetrics& m) {
    return std::isfinite(m.train_loss) && std::isfinite(m.test_loss);
}

inline RunRecord run_single(const Classifier& model, const DatasetPair& data, const OptimizerSpec& opt,
                            std::uint64_t seed, const ExperimentSpec& spec,
                            const std::vector<double>* x_star) {
    const auto started = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.optimizer = opt.name;
    rec.kind = opt.hp.kind;
    rec.seed = seed;

    std::vector<double> params = model.initial_params(seed);
    Optimizer optimizer(opt.hp, params.size());
    BatchStream stream(data.train.n, spec.batch_size, mix_seed(seed, 0xBA7C));

    auto measure = [&](std::size_t epoch) {
        const Metrics tr = model.metrics(params, data.train);
        const Metrics te = model.metrics(params, data.test);
        return EpochMetrics{epoch, tr.loss, tr.accuracy, te.loss, te.accuracy};
    };

    rec.epochs.push_back(measure(0));
    std::uint64_t step = 0;
    for (std::size_t epoch = 1; epoch <= spec.epochs && !rec.diverged; ++epoch) {
        for (std::size_t b = 0; b < stream.batches_per_epoch(); ++b) {
            const auto idx = stream.next_batch();
            for (auto i : idx) rec.batch_hash = hash_combine(rec.batch_hash, i);
            const Batch batch{&data.train, idx};
            Evaluation ev;
            try {
                ev = model.eval(params, batch, mix_seed(seed, step));
            } catch (const NumericError&) {
                ev.loss = std::numeric_limits<double>::quiet_NaN();
            }
            if (!std::isfinite(ev.loss)) {
                rec.diverged = true;
                rec.diverged_at_step = step;
                break;
            }
            if (x_star) {
                rec.step_losses.push_back(ev.loss);
                rec.step_optimum_losses.push_back(model.eval(*x_star, batch, mix_seed(seed, step)).loss);
            }
            try {
                optimizer.step(params, ev.grad);
            } catch (const NumericError&) {
                rec.diverged = true;
                rec.diverged_at_step = step;
                break;
            }
            ++step;
        }
        if (rec.diverged) break;
        EpochMetrics m;
        try {
            m = measure(epoch);
        } catch (const NumericError&) {
            m.train_loss = m.test_loss = std::numeric_limits<double>::quiet_NaN();
        }
        if (!finite_metrics(m)) {
            rec.diverged = true;
            rec.diverged_at_step = step;
            break;
        }
        const double prev_test = rec.epochs.back().test_loss;
        rec.epochs.push_back(m);
        if (spec.early_stop && m.test_loss > prev_test) {
            rec.stopped_early = true;
            break;
        }
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return rec;
}

}  // namespace detail

/// Runs every (optimizer, seed) pair. Records come back optimizer-major in
/// declaration order regardless of the worker count. Within a seed all
/// optimizers share initial parameters, batch order and dropout streams.
inline std::vector<RunRecord> run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    const DatasetPair data = make_datasets(spec.data);
    ModelSpec model_spec = spec.model;
    if (spec.track_regret) model_spec.l2 = spec.regret_l2;
    const auto model = make_model(model_spec, data.train.d, data.train.num_classes);

    std::vector<double> x_star;
    if (spec.track_regret) {
        std::vector<std::size_t> all(data.train.n);
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        x_star = find_optimum(*model, Batch{&data.train, all}, std::vector<double>(model->dim(), 0.0));
    }

    const std::size_t n_seeds = spec.seeds.size();
    const std::size_t jobs = spec.optimizers.size() * n_seeds;
    std::vector<RunRecord> records(jobs);
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto worker = [&] {
        for (std::size_t j; (j = next.fetch_add(1)) < jobs;) {
            try {
                records[j] = detail::run_single(*model, data, spec.optimizers[j / n_seeds],
                                                spec.seeds[j % n_seeds], spec,
                                                spec.track_regret ? &x_star : nullptr);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::clamp<std::size_t>(spec.threads, 1, jobs);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);
    return records;
}

// ---------------------------------------------------------------------------

enum class Metric { TrainLoss, TrainAcc, TestLoss, TestAcc };

inline std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::TrainLoss: return "train_loss";
        case Metric::TrainAcc: return "train_acc";
        case Metric::TestLoss: return "test_loss";
        case Metric::TestAcc: return "test_acc";
    }
    return "unknown";
}

inline double metric_value(const EpochMetrics& e, Metric m) {
    switch (m) {
        case Metric::TrainLoss: return e.train_loss;
        case Metric::TrainAcc: return e.train_acc;
        case Metric::TestLoss: return e.test_loss;
        case Metric::TestAcc: return e.test_acc;
    }
    return 0.0;
}

inline std::vector<double> metric_series(const RunRecord& r, Metric m) {
    std::vector<double> out;
    out.reserve(r.epochs.size());
    for (const auto& e : r.epochs) out.push_back(metric_value(e, m));
    return out;
}

/// Elementwise a - b. Positive entries favour the second series when the
/// metric is a loss.
inline std::vector<double> loss_difference(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw InvalidArgument("loss_difference: series lengths differ (" + std::to_string(a.size()) +
                              " vs " + std::to_string(b.size()) + ")");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline std::vector<double> loss_difference(const RunRecord& a, const RunRecord& b,
                                           Metric m = Metric::TrainLoss) {
    const auto sa = metric_series(a, m);
    const auto sb = metric_series(b, m);
    return loss_difference(sa, sb);
}

struct AggregateRow {
    std::string optimizer;
    Metric metric = Metric::TrainLoss;
    double mean = 0.0;
    double stddev = 0.0;  // sample (n - 1) standard deviation
    std::size_t runs = 0;
};

inline std::pair<double, double> mean_and_sample_std(std::span<const double> v) {
    if (v.size() < 2) throw InvalidArgument("need at least two values for a sample deviation");
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

/// Mean and sample deviation of the final-epoch metrics, one row per
/// optimizer x metric in first-seen optimizer order. Diverged runs are skipped;
/// with fewer than two surviving runs the deviation is NaN.
inline std::vector<AggregateRow> aggregate_runs(const std::vector<RunRecord>& records) {
    std::vector<std::string> names;
    for (const auto& r : records)
        if (std::find(names.begin(), names.end(), r.optimizer) == names.end()) names.push_back(r.optimizer);
    std::vector<AggregateRow> rows;
    for (const auto& name : names) {
        for (auto metric : {Metric::TrainLoss, Metric::TrainAcc, Metric::TestLoss, Metric::TestAcc}) {
            std::vector<double> finals;
            for (const auto& r : records)
                if (r.optimizer == name && !r.diverged && !r.epochs.empty())
                    finals.push_back(metric_value(r.epochs.back(), metric));
            const double nan = std::numeric_limits<double>::quiet_NaN();
            if (finals.size() < 2) {
                rows.push_back({name, metric, finals.empty() ? nan : finals[0], nan, finals.size()});
                continue;
            }
            const auto [mean, sd] = mean_and_sample_std(finals);
            rows.push_back({name, metric, mean, sd, finals.size()});
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------

struct RegretSeries {
    std::vector<double> cumulative;  // R(T), T = 1..n
    std::vector<double> normalized;  // R(T) / sqrt(T)
};

inline RegretSeries compute_regret(std::span<const double> losses, std::span<const double> optimum_losses) {
    if (losses.size() != optimum_losses.size())
        throw InvalidArgument("compute_regret: series lengths differ");
    RegretSeries out;
    out.cumulative.resize(losses.size());
    out.normalized.resize(losses.size());
    double r = 0.0;
    for (std::size_t t = 0; t < losses.size(); ++t) {
        r += losses[t] - optimum_losses[t];
        out.cumulative[t] = r;
        out.normalized[t] = r / std::sqrt(static_cast<double>(t + 1));
    }
    return out;
}

/// Least-squares slope of log R(T) against log T, sampled at `points`
/// log-spaced T values in [t_lo, t_hi] (1-based). Non-positive R values are
/// an error.
inline double loglog_slope(std::span<const double> cumulative, std::size_t t_lo, std::size_t t_hi,
                           std::size_t points = 64) {
    if (t_lo < 1 || t_hi > cumulative.size() || t_lo >= t_hi || points < 2)
        throw InvalidArgument("loglog_slope: bad range");
    std::vector<std::size_t> ts;
    const double a = std::log(static_cast<double>(t_lo));
    const double b = std::log(static_cast<double>(t_hi));
    for (std::size_t k = 0; k < points; ++k) {
        const double u = a + (b - a) * static_cast<double>(k) / static_cast<double>(points - 1);
        const auto t = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(std::exp(u))), t_lo, t_hi);
        if (ts.empty() || ts.back() != t) ts.push_back(t);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto t : ts) {
        const double r = cumulative[t - 1];
        if (!(r > 0.0)) throw InvalidArgument("loglog_slope: non-positive regret at T=" + std::to_string(t));
        const double x = std::log(static_cast<double>(t));
        const double y = std::log(r);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double nd = static_cast<double>(ts.size());
    return (nd * sxy - sx * sy) / (nd * sxx - sx * sx);
}

}  // namespace trendopt
