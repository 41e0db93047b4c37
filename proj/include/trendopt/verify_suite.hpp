#pragma once

// Named property checks built on the oracles in verify.hpp. Each check
// returns a CheckResult with the measured quantity and the threshold it was
// held to; nothing throws on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "trendopt/data.hpp"
#include "trendopt/harness.hpp"
#include "trendopt/models.hpp"
#include "trendopt/optim.hpp"
#include "trendopt/smoothing.hpp"
#include "trendopt/verify.hpp"

namespace trendopt::verify {

struct CheckResult {
    std::string name;
    bool passed = false;
    double measured = 0.0;
    double threshold = 0.0;
    std::string detail;
    double seconds = 0.0;
};

struct SuiteOptions {
    bool quick = false;
    /// Test hook: doubles the largest analytic gradient entry before the
    /// finite-difference comparison.
    bool corrupt_gradient = false;
    std::uint64_t seed = 20240501;
};

namespace detail {

template <class F>
CheckResult timed(std::string name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r = body();
    r.name = std::move(name);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline double rel_err(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

inline std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
    std::normal_distribution<double> normal(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = normal(rng);
    return v;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

}  // namespace detail

/// Recurrence vs. explicit-sum unroll on random streams of length <= max_len.
inline CheckResult check_holt_oracle(const SuiteOptions& opt, std::size_t streams = 100, std::size_t max_len = 200) {
    return detail::timed("holt_oracle", [&] {
        std::mt19937_64 rng(opt.seed);
        std::uniform_int_distribution<std::size_t> len(1, max_len);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        double worst = 0.0;
        for (std::size_t s = 0; s < streams; ++s) {
            const std::size_t steps = len(rng);
            const std::size_t dim = 3;
            const double beta = 0.05 + 0.949 * unit(rng);
            const double gamma = 0.05 + 0.949 * unit(rng);
            const double phi = unit(rng);
            std::vector<std::vector<double>> obs(steps);
            for (auto& row : obs) row = detail::normal_vector(rng, dim, 2.0);
            const auto trace = holt_unroll_oracle(obs, beta, gamma, phi);
            // Normwise relative error per stream and series: max |a - b| / max |b|.
            double diff[3] = {0, 0, 0}, mag[3] = {0, 0, 0};
            HoltState st(dim);
            for (std::size_t t = 0; t < steps; ++t) {
                holt_update(st, obs[t], beta, gamma, phi);
                for (std::size_t k = 0; k < dim; ++k) {
                    diff[0] = std::max(diff[0], std::abs(st.level[k] - trace.levels[t][k]));
                    diff[1] = std::max(diff[1], std::abs(st.trend[k] - trace.trends[t][k]));
                    diff[2] = std::max(diff[2], std::abs(st.combined_prev[k] - trace.combined[t][k]));
                    mag[0] = std::max(mag[0], std::abs(trace.levels[t][k]));
                    mag[1] = std::max(mag[1], std::abs(trace.trends[t][k]));
                    mag[2] = std::max(mag[2], std::abs(trace.combined[t][k]));
                }
            }
            for (int q = 0; q < 3; ++q)
                if (mag[q] > 0.0) worst = std::max(worst, diff[q] / mag[q]);
        }
        CheckResult r;
        r.measured = worst;
        r.threshold = 1e-12;
        r.passed = worst <= r.threshold;
        r.detail = std::to_string(streams) + " streams, normwise relative";
        return r;
    });
}

/// 1 / trend_factor against the term-by-term geometric weight sum.
inline CheckResult check_bias_weights(const SuiteOptions&, std::size_t t_max = 100) {
    return detail::timed("bias_weight_identity", [&] {
        const double betas[] = {0.1, 0.5, 0.9, 0.99, 0.999};
        const double gammas[] = {0.1, 0.5, 0.9, 0.99, 0.999};
        const double phis[] = {0.1, 0.3, 0.5, 0.7, 0.9};
        double worst = 0.0;
        for (double b : betas)
            for (double g : gammas)
                for (double p : phis)
                    for (std::size_t t = 1; t <= t_max; ++t) {
                        const auto f = bias_correction_factors(t, b, g, p);
                        worst = std::max(worst, detail::rel_err(1.0 / f.trend_factor, trend_weight_sum(t, g, p)));
                    }
        CheckResult r;
        r.measured = worst;
        r.threshold = 1e-12;
        r.passed = worst <= r.threshold;
        r.detail = "5x5x5 grid, t<=" + std::to_string(t_max);
        return r;
    });
}

/// Undamped AdamT keeps the same raw first and second moments as Adam.
inline CheckResult check_phi_zero(const SuiteOptions& opt, std::size_t steps = 1000) {
    return detail::timed("phi_zero_reduction", [&] {
        std::mt19937_64 rng(opt.seed + 1);
        const std::size_t dim = 8;
        HyperParams hp;
        hp.phi1 = hp.phi2 = 0.0;
        hp.eta = 1e-3;
        AdamTState t(dim);
        AdamState a(dim);
        std::vector<double> pt(dim, 0.0), pa(dim, 0.0);
        double worst = 0.0;
        for (std::size_t k = 0; k < steps; ++k) {
            const auto g = detail::normal_vector(rng, dim);
            step_adamt(t, pt, g, hp);
            step_adam(a, pa, g, hp);
            for (std::size_t i = 0; i < dim; ++i)
                worst = std::max({worst, std::abs(t.first.combined_prev[i] - a.m[i]),
                                  std::abs(t.second.combined_prev[i] - a.v[i])});
        }
        CheckResult r;
        r.measured = worst;
        r.threshold = 1e-12;
        r.passed = worst <= r.threshold;
        r.detail = std::to_string(steps) + " steps, max abs difference";
        return r;
    });
}

/// With epsilon = 0, scaling every gradient by c leaves the trajectory unchanged.
inline CheckResult check_scale_invariance(const SuiteOptions& opt, std::size_t steps = 500) {
    return detail::timed("scale_invariance", [&] {
        const std::size_t dim = 6;
        double worst = 0.0;
        for (OptimizerKind kind : {OptimizerKind::AdamT, OptimizerKind::AMSGradT}) {
            HyperParams hp = HyperParams::defaults(kind);
            hp.epsilon = 0.0;
            hp.eta = 1e-3;
            std::mt19937_64 rng(opt.seed + 2);
            std::vector<std::vector<double>> grads(steps);
            for (auto& g : grads) g = detail::normal_vector(rng, dim);
            std::uniform_real_distribution<double> start(1.0, 2.0);
            std::vector<double> p0(dim);
            for (std::size_t i = 0; i < dim; ++i) p0[i] = (i % 2 ? -1.0 : 1.0) * start(rng);

            Optimizer ref(hp, dim);
            std::vector<double> p_ref = p0;
            std::vector<std::vector<double>> traj;
            for (const auto& g : grads) {
                ref.step(p_ref, g);
                traj.push_back(p_ref);
            }
            for (double c : {0.01, 7.3, 1000.0}) {
                Optimizer o(hp, dim);
                std::vector<double> p = p0;
                for (std::size_t k = 0; k < steps; ++k) {
                    std::vector<double> g = grads[k];
                    for (auto& v : g) v *= c;
                    o.step(p, g);
                    for (std::size_t i = 0; i < dim; ++i) worst = std::max(worst, detail::rel_err(p[i], traj[k][i]));
                }
            }
        }
        CheckResult r;
        r.measured = worst;
        r.threshold = 1e-9;
        r.passed = worst <= r.threshold;
        r.detail = "adamt+amsgradt, c in {0.01, 7.3, 1000}";
        return r;
    });
}

/// Under a constant gradient the corrected moments converge to g and g^2.
inline CheckResult check_stationary_limit(const SuiteOptions&, std::size_t steps = 10000) {
    return detail::timed("stationary_limit", [&] {
        const std::vector<double> g{0.3, -2.0, 1e-3, 50.0};
        HyperParams hp;
        AdamTState s(g.size());
        std::vector<double> p(g.size(), 0.0);
        for (std::size_t k = 0; k < steps; ++k) step_adamt(s, p, g, hp);
        const auto m = s.m_hat(hp);
        const auto v = s.v_hat(hp);
        double worst = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i)
            worst = std::max({worst, detail::rel_err(m[i], g[i]), detail::rel_err(v[i], g[i] * g[i])});
        CheckResult r;
        r.measured = worst;
        r.threshold = 1e-5;
        r.passed = worst <= r.threshold;
        r.detail = std::to_string(steps) + " steps";
        return r;
    });
}

/// Finite differences on random logreg and MLP instances (dropout masks
/// frozen through a fixed stream).
inline CheckResult check_gradients(const SuiteOptions& opt, std::size_t instances = 20) {
    return detail::timed("gradient_correctness", [&] {
        std::mt19937_64 rng(opt.seed + 3);
        std::uniform_int_distribution<std::size_t> feat(2, 8), cls(2, 5), width(3, 8);
        double worst = 0.0;
        std::string worst_what;
        auto check = [&](const Objective& obj, std::span<const double> p, const Batch& batch, std::uint64_t stream,
                         const std::string& what) {
            auto grad = obj.eval(p, batch, stream).grad;
            if (opt.corrupt_gradient) {
                std::size_t big = 0;
                for (std::size_t i = 1; i < grad.size(); ++i)
                    if (std::abs(grad[i]) > std::abs(grad[big])) big = i;
                grad[big] *= 2.0;
            }
            const auto rep = finite_diff_check(
                [&](std::span<const double> x) { return obj.eval(x, batch, stream).loss; }, p, grad);
            if (rep.max_rel_error > worst || worst_what.empty()) {
                worst = std::max(worst, rep.max_rel_error);
                worst_what = what + " coord " + std::to_string(rep.worst_index);
            }
        };
        for (std::size_t inst = 0; inst < instances; ++inst) {
            const std::size_t d = feat(rng), k = cls(rng);
            const auto ds = synth_classification(rng(), 24, d, k, 2.0);
            const auto rows = detail::all_rows(ds.n);
            const Batch batch{&ds, rows};
            LogisticRegression lr(d, k, inst % 2 ? 1e-3 : 0.0);
            const auto p = detail::normal_vector(rng, lr.dim(), 0.5);
            check(lr, p, batch, 0, "logreg #" + std::to_string(inst));
        }
        for (std::size_t inst = 0; inst < instances; ++inst) {
            const std::size_t d = feat(rng), k = cls(rng);
            const auto ds = synth_classification(rng(), 16, d, k, 2.0);
            const auto rows = detail::all_rows(ds.n);
            const Batch batch{&ds, rows};
            const Activation act = inst % 2 ? Activation::Tanh : Activation::ReLU;
            Mlp net(MlpSpec{{d, width(rng), width(rng), k}, act, {0.3, 0.3}, inst % 3 ? 0.0 : 1e-3});
            const std::uint64_t stream = rng();
            // ReLU is not differentiable at 0: redraw points that sit too close to a kink.
            std::vector<double> p;
            do {
                p = detail::normal_vector(rng, net.dim(), 0.5);
            } while (act == Activation::ReLU && net.min_abs_preactivation(p, batch, stream) < 1e-4);
            check(net, p, batch, stream, "mlp #" + std::to_string(inst));
        }
        CheckResult r;
        r.measured = worst;
        r.threshold = 1e-5;
        r.passed = worst < r.threshold;
        r.detail = std::to_string(instances) + " logreg + " + std::to_string(instances) + " mlp, worst " + worst_what;
        return r;
    });
}

/// AMSGradT's running maximum never decreases.
inline CheckResult check_vmax_monotone(const SuiteOptions& opt, std::size_t runs = 10, std::size_t steps = 1000) {
    return detail::timed("amsgradt_vmax_monotone", [&] {
        std::mt19937_64 rng(opt.seed + 4);
        const std::size_t dim = 5;
        std::size_t violations = 0;
        for (std::size_t run = 0; run < runs; ++run) {
            AMSGradTState s(dim);
            std::vector<double> p(dim, 0.0), prev(dim, 0.0);
            for (std::size_t k = 0; k < steps; ++k) {
                // Alternate calm and noisy phases so the second moment rises and falls.
                const double sd = (k / 50) % 2 ? 10.0 : 0.1;
                const auto g = detail::normal_vector(rng, dim, sd);
                step_amsgradt(s, p, g, HyperParams{});
                for (std::size_t i = 0; i < dim; ++i)
                    if (s.v_max[i] < prev[i]) ++violations;
                prev = s.v_max;
            }
        }
        CheckResult r;
        r.measured = static_cast<double>(violations);
        r.threshold = 0.0;
        r.passed = violations == 0;
        r.detail = std::to_string(runs) + " runs x " + std::to_string(steps) + " steps, violations";
        return r;
    });
}

/// Summation-form bound on the corrected moments, plus exact equality at the
/// first step of a constant stream.
inline CheckResult check_moment_bound(const SuiteOptions& opt, std::size_t streams = 1000, std::size_t t_max = 100) {
    return detail::timed("moment_summation_bound", [&] {
        const HyperParams hp;
        std::mt19937_64 rng(opt.seed + 5);
        std::exponential_distribution<double> expo(1.0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::size_t violations = 0;
        double worst_margin = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < streams; ++s) {
            // Mix of smooth, bursty and sparse nonnegative streams.
            std::vector<std::vector<double>> stream(t_max, std::vector<double>(2));
            for (std::size_t t = 0; t < t_max; ++t)
                for (auto& v : stream[t]) {
                    switch (s % 3) {
                        case 0: v = expo(rng); break;
                        case 1: v = (t / 10) % 2 ? 5.0 * unit(rng) : 0.01 * unit(rng); break;
                        default: v = unit(rng) < 0.1 ? 10.0 * unit(rng) : 0.0; break;
                    }
                }
            const auto rep = moment_bound_check(stream, hp.beta1, hp.gamma1, hp.phi1, hp.beta2, hp.gamma2,
                                                hp.phi2, t_max);
            violations += rep.violations;
            worst_margin = std::min(worst_margin, rep.worst_margin);
        }
        // Equality at t = 1 for a constant stream, through the optimizer's own state.
        const double g = 2.5;
        AdamTState st(1);
        std::vector<double> p{0.0};
        step_adamt(st, p, std::vector<double>{g}, hp);
        const double m1 = st.m_hat(hp)[0];
        const double bound1 = summation_bound_coefficient(1, hp.beta1, hp.gamma1, hp.phi1) * g;
        const double equality_gap = std::max(detail::rel_err(m1, (2.0 - hp.beta1) * g),
                                             detail::rel_err(bound1, (2.0 - hp.beta1) * g));
        CheckResult r;
        r.measured = static_cast<double>(violations);
        r.threshold = 0.0;
        r.passed = violations == 0 && equality_gap <= 4 * std::numeric_limits<double>::epsilon();
        std::ostringstream os;
        os << streams << " streams, t<=" << t_max << ", min margin " << worst_margin
           << ", t=1 equality gap " << equality_gap;
        r.detail = os.str();
        return r;
    });
}

/// AdamT regret against the regularized optimum on synthetic logistic
/// regression: nonnegative throughout and sublinear growth.
inline CheckResult check_regret(const SuiteOptions& opt, std::size_t steps = 10000) {
    return detail::timed("regret_sublinear", [&] {
        ExperimentSpec spec;
        spec.name = "regret";
        spec.data.n_train = 2000;
        spec.data.n_test = 100;
        spec.data.features = 20;
        spec.data.classes = 2;
        spec.batch_size = 128;
        const std::size_t per_epoch = (spec.data.n_train + spec.batch_size - 1) / spec.batch_size;
        spec.epochs = (steps + per_epoch - 1) / per_epoch;
        spec.seeds = {opt.seed % 1000};
        spec.track_regret = true;
        spec.regret_l2 = 1e-4;
        spec.optimizers = {{"adamt", HyperParams::defaults(OptimizerKind::AdamT)}};
        const auto rec = run_experiment(spec).front();
        if (rec.diverged || rec.step_losses.size() < steps) {
            CheckResult r;
            r.threshold = 0.6;
            r.measured = std::numeric_limits<double>::quiet_NaN();
            r.detail = "run diverged or ended early";
            return r;
        }
        std::vector<double> losses(rec.step_losses.begin(), rec.step_losses.begin() + static_cast<std::ptrdiff_t>(steps));
        std::vector<double> opt_losses(rec.step_optimum_losses.begin(),
                                       rec.step_optimum_losses.begin() + static_cast<std::ptrdiff_t>(steps));
        const auto reg = compute_regret(losses, opt_losses);
        const double min_r = *std::min_element(reg.cumulative.begin(), reg.cumulative.end());
        CheckResult r;
        r.threshold = 0.6;
        if (min_r < 0.0) {
            r.measured = std::numeric_limits<double>::quiet_NaN();
            r.passed = false;
            r.detail = "negative regret " + std::to_string(min_r);
            return r;
        }
        const std::size_t lo = std::min<std::size_t>(100, steps / 10);
        r.measured = loglog_slope(reg.cumulative, std::max<std::size_t>(lo, 1), steps);
        r.passed = r.measured <= r.threshold;
        std::ostringstream os;
        os << "T=" << steps << ", R(T)=" << reg.cumulative.back() << ", min R=" << min_r << ", log-log slope";
        r.detail = os.str();
        return r;
    });
}

/// The oracle suite behind `trendopt verify`.
inline std::vector<CheckResult> run_suite(const SuiteOptions& opt,
                                          const std::function<void(const CheckResult&)>& on_result = {}) {
    std::vector<CheckResult> out;
    auto add = [&](CheckResult r) {
        if (on_result) on_result(r);
        out.push_back(std::move(r));
    };
    if (opt.quick) {
        add(check_holt_oracle(opt, 20, 100));
        add(check_bias_weights(opt));
        add(check_phi_zero(opt));
        add(check_scale_invariance(opt));
        add(check_stationary_limit(opt));
        add(check_gradients(opt, 5));
        add(check_vmax_monotone(opt, 3));
        add(check_moment_bound(opt, 100));
        return out;
    }
    add(check_holt_oracle(opt));
    add(check_bias_weights(opt));
    add(check_phi_zero(opt));
    add(check_scale_invariance(opt));
    add(check_stationary_limit(opt));
    add(check_gradients(opt));
    add(check_vmax_monotone(opt));
    add(check_moment_bound(opt));
    add(check_regret(opt));
    return out;
}

inline std::string format_result(const CheckResult& r) {
    std::ostringstream os;
    os << (r.passed ? "PASS " : "FAIL ") << r.name << "  measured=" << r.measured << " threshold=" << r.threshold
       << "  (" << r.detail << ", " << std::fixed;
    os.precision(2);
    os << r.seconds << " s)";
    return os.str();
}

}  // namespace trendopt::verify
