#pragma once

// Independent oracles used to cross-check the smoothing, optimizer and model
// code. Nothing here calls the update code it is meant to check: the Holt
// recursion and bias corrections are rewritten from their closed forms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "trendopt/data.hpp"
#include "trendopt/models.hpp"

namespace trendopt::verify {

// ---------------------------------------------------------------------------
// Finite differences

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Central differences with h = h_scale * max(1, |theta_i|). The per-coordinate
/// error is |analytic - numeric| / max(|analytic|, |numeric|, abs_floor); the
/// floor keeps round-off on near-zero partials from reading as a large
/// relative error.
inline FiniteDiffReport finite_diff_check(const std::function<double(std::span<const double>)>& loss,
                                          std::span<const double> params,
                                          std::span<const double> analytic_grad,
                                          double h_scale = 1e-6, double abs_floor = 1e-4) {
    FiniteDiffReport report;
    std::vector<double> probe(params.begin(), params.end());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double theta = probe[i];
        const double h = h_scale * std::max(1.0, std::abs(theta));
        probe[i] = theta + h;
        const double up = loss(probe);
        probe[i] = theta - h;
        const double down = loss(probe);
        probe[i] = theta;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic_grad[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
        const double err = std::abs(a - numeric) / denom;
        if (i == 0 || err > report.max_rel_error) {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    return report;
}

/// Checks `objective`'s gradient at `params` on `batch`, holding the
/// randomness stream fixed (dropout masks are reused across probes).
inline FiniteDiffReport finite_diff_check(const Objective& objective, std::span<const double> params,
                                          const Batch& batch, std::uint64_t stream = 0,
                                          double h_scale = 1e-6, double abs_floor = 1e-4) {
    const auto analytic = objective.eval(params, batch, stream).grad;
    return finite_diff_check(
        [&](std::span<const double> p) { return objective.eval(p, batch, stream).loss; }, params,
        analytic, h_scale, abs_floor);
}

// ---------------------------------------------------------------------------
// Holt unroll

struct HoltTrace {
    std::vector<std::vector<double>> levels;    // levels[t-1] = level after t observations
    std::vector<std::vector<double>> trends;
    std::vector<std::vector<double>> combined;
};

/// Levels by their sequential definition, trends by the explicit weighted sum
/// b_t = (1 - gamma) * sum_{i<=t} (gamma phi)^{t-i} (l_i - l_{i-1}). O(t^2).
inline HoltTrace holt_unroll_oracle(const std::vector<std::vector<double>>& observations,
                                    double beta, double gamma, double phi) {
    HoltTrace out;
    if (observations.empty()) return out;
    const std::size_t dim = observations.front().size();
    const std::size_t steps = observations.size();
    // level history with level_0 = 0 at index 0
    std::vector<std::vector<double>> level_hist(steps + 1, std::vector<double>(dim, 0.0));
    std::vector<double> prev_combined(dim, 0.0);
    for (std::size_t t = 1; t <= steps; ++t) {
        std::vector<double> level(dim), trend(dim, 0.0), comb(dim);
        for (std::size_t k = 0; k < dim; ++k)
            level[k] = beta * prev_combined[k] + (1.0 - beta) * observations[t - 1][k];
        level_hist[t] = level;
        for (std::size_t i = 1; i <= t; ++i) {
            const double w = (1.0 - gamma) * std::pow(gamma * phi, static_cast<double>(t - i));
            for (std::size_t k = 0; k < dim; ++k) trend[k] += w * (level_hist[i][k] - level_hist[i - 1][k]);
        }
        for (std::size_t k = 0; k < dim; ++k) comb[k] = level[k] + phi * trend[k];
        prev_combined = comb;
        out.levels.push_back(std::move(level));
        out.trends.push_back(std::move(trend));
        out.combined.push_back(std::move(comb));
    }
    return out;
}

/// (1 - gamma) * sum_{i=1..t} (gamma phi)^{t-i}, summed term by term.
inline double trend_weight_sum(std::size_t t, double gamma, double phi) {
    double sum = 0.0;
    for (std::size_t i = 1; i <= t; ++i) sum += std::pow(gamma * phi, static_cast<double>(t - i));
    return (1.0 - gamma) * sum;
}

// ---------------------------------------------------------------------------
// Expectation of the trend estimate

struct ExpectationReport {
    double mean_trend = 0.0;         // E[b_t]
    double mean_level_delta = 0.0;   // E[l_t - l_{t-1}]
    double weight = 0.0;             // (1-gamma)(1-(gamma phi)^t)/(1-gamma phi)
    double stationary_prediction = 0.0;  // E[l_t - l_{t-1}] * weight
    double zeta = 0.0;               // mean_trend - stationary_prediction
    double zeta_se = 0.0;            // standard error of zeta
    double weighted_history = 0.0;   // (1-gamma) sum (gamma phi)^{t-i} E[l_i - l_{i-1}]
    double history_discrepancy = 0.0;  // mean_trend - weighted_history
    double trend_se = 0.0;           // standard error of E[b_t]
};

/// Monte Carlo over `trials` i.i.d. streams of length t drawn from `sample`.
/// Reports how far E[b_t] sits from the stationary prediction (the residual
/// zeta, which is non-zero whenever E[l_i - l_{i-1}] changes with i, as it
/// does for zero-initialised levels) and from the exact linear combination
/// of the per-step expected level increments.
inline ExpectationReport expectation_mc_check(const std::function<double(std::mt19937_64&)>& sample,
                                              std::size_t trials, std::size_t t, double beta,
                                              double gamma, double phi, std::uint64_t seed = 1) {
    ExpectationReport r;
    if (trials == 0 || t == 0) return r;
    std::mt19937_64 rng(seed);
    const double gp = gamma * phi;
    r.weight = (1.0 - gamma) * (1.0 - std::pow(gp, static_cast<double>(t))) / (1.0 - gp);

    // Welford accumulators: exact zero variance for degenerate distributions.
    struct Running {
        double mean = 0.0, m2 = 0.0;
        std::size_t n = 0;
        void add(double x) {
            ++n;
            const double d = x - mean;
            mean += d / static_cast<double>(n);
            m2 += d * (x - mean);
        }
        double se() const {
            return n < 2 ? 0.0 : std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
        }
    };
    std::vector<Running> deltas(t);
    Running trend_acc, zeta_acc;
    for (std::size_t k = 0; k < trials; ++k) {
        double level = 0.0, trend = 0.0, combined = 0.0, last_delta = 0.0;
        for (std::size_t i = 0; i < t; ++i) {
            const double next = beta * combined + (1.0 - beta) * sample(rng);
            last_delta = next - level;
            deltas[i].add(last_delta);
            trend = gp * trend + (1.0 - gamma) * last_delta;
            level = next;
            combined = level + phi * trend;
        }
        trend_acc.add(trend);
        zeta_acc.add(trend - last_delta * r.weight);
    }
    r.mean_trend = trend_acc.mean;
    r.mean_level_delta = deltas[t - 1].mean;
    r.stationary_prediction = r.mean_level_delta * r.weight;
    r.zeta = zeta_acc.mean;
    r.zeta_se = zeta_acc.se();
    r.trend_se = trend_acc.se();
    for (std::size_t i = 1; i <= t; ++i)
        r.weighted_history += (1.0 - gamma) * std::pow(gp, static_cast<double>(t - i)) * deltas[i - 1].mean;
    r.history_discrepancy = r.mean_trend - r.weighted_history;
    return r;
}

/// Residual zeta(t) for a stream held at its mean: by linearity this is the
/// exact expectation of the Monte Carlo residual for any i.i.d. stream.
inline double expected_zeta(double mean, std::size_t t, double beta, double gamma, double phi) {
    double level = 0.0, trend = 0.0, combined = 0.0, delta = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
        const double next = beta * combined + (1.0 - beta) * mean;
        delta = next - level;
        trend = gamma * phi * trend + (1.0 - gamma) * delta;
        level = next;
        combined = level + phi * trend;
    }
    const double gp = gamma * phi;
    return trend - delta * (1.0 - gamma) * (1.0 - std::pow(gp, static_cast<double>(t))) / (1.0 - gp);
}

// ---------------------------------------------------------------------------
// Summation-form bound on the corrected moments

struct BoundReport {
    bool passed = true;
    std::size_t violations = 0;
    double worst_margin = std::numeric_limits<double>::infinity();  // min(bound - value) / max(1, bound)
    std::size_t worst_step = 0;
    std::size_t worst_coord = 0;
    bool worst_is_second_moment = false;
};

/// Bound coefficient [(1-beta)/(1-beta^t) + (1-gamma phi)(1-beta)/(1-(gamma phi)^t)].
inline double summation_bound_coefficient(std::size_t t, double beta, double gamma, double phi) {
    const double td = static_cast<double>(t);
    const double gp = gamma * phi;
    return (1.0 - beta) / (1.0 - std::pow(beta, td)) +
           (1.0 - gp) * (1.0 - beta) / (1.0 - std::pow(gp, td));
}

/// Checks m_hat_t <= coeff_1(t) * sum_{i<=t} g_i and v_hat_t <= coeff_2(t) * sum g_i^2
/// elementwise for t <= t_max. `stream[t][k]` must be nonnegative. Violations
/// are counted with a relative slack of `slack` to absorb round-off at equality.
inline BoundReport moment_bound_check(const std::vector<std::vector<double>>& stream, double beta1,
                                      double gamma1, double phi1, double beta2, double gamma2,
                                      double phi2, std::size_t t_max, double slack = 1e-12) {
    BoundReport report;
    const std::size_t steps = std::min(t_max, stream.size());
    if (steps == 0) return report;
    const std::vector<std::vector<double>> head(stream.begin(), stream.begin() + static_cast<std::ptrdiff_t>(steps));
    std::vector<std::vector<double>> squares = head;
    for (auto& row : squares)
        for (auto& v : row) v *= v;

    auto check = [&](const std::vector<std::vector<double>>& obs, double beta, double gamma,
                     double phi, bool second) {
        const HoltTrace trace = holt_unroll_oracle(obs, beta, gamma, phi);
        const std::size_t dim = obs.front().size();
        std::vector<double> running(dim, 0.0);
        for (std::size_t t = 1; t <= steps; ++t) {
            const double td = static_cast<double>(t);
            const double gp = gamma * phi;
            const double level_factor = 1.0 / (1.0 - std::pow(beta, td));
            const double trend_factor = (1.0 - gp) / ((1.0 - gamma) * (1.0 - std::pow(gp, td)));
            const double coeff = summation_bound_coefficient(t, beta, gamma, phi);
            for (std::size_t k = 0; k < dim; ++k) {
                running[k] += obs[t - 1][k];
                const double value = level_factor * trace.levels[t - 1][k] + trend_factor * trace.trends[t - 1][k];
                const double bound = coeff * running[k];
                const double margin = (bound - value) / std::max(1.0, std::abs(bound));
                if (value > bound + slack * std::max(1.0, std::abs(bound))) {
                    ++report.violations;
                    report.passed = false;
                }
                if (margin < report.worst_margin) {
                    report.worst_margin = margin;
                    report.worst_step = t;
                    report.worst_coord = k;
                    report.worst_is_second_moment = second;
                }
            }
        }
    };
    check(head, beta1, gamma1, phi1, false);
    check(squares, beta2, gamma2, phi2, true);
    return report;
}

}  // namespace trendopt::verify
