#pragma once

// Damped Holt linear-trend smoothing over vectors, plus the bias-correction
// factors used by the trend-corrected optimizers.
//
//   level_t    = beta * combined_{t-1} + (1 - beta) * y_t
//   trend_t    = gamma * phi * trend_{t-1} + (1 - gamma) * (level_t - level_{t-1})
//   combined_t = level_t + phi * trend_t

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "trendopt/error.hpp"

namespace trendopt {

struct HoltState {
    std::vector<double> level;
    std::vector<double> trend;
    std::vector<double> combined_prev;
    std::size_t step = 0;

    HoltState() = default;
    explicit HoltState(std::size_t dim)
        : level(dim, 0.0), trend(dim, 0.0), combined_prev(dim, 0.0) {}

    std::size_t dim() const noexcept { return level.size(); }
};

inline void check_smoothing_params(double beta, double gamma, double phi) {
    if (!(beta >= 0.0 && beta < 1.0))
        throw InvalidArgument("smoothing: beta must lie in [0, 1)");
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw InvalidArgument("smoothing: gamma must lie in [0, 1)");
    if (!(phi >= 0.0 && phi <= 1.0))
        throw InvalidArgument("smoothing: phi must lie in [0, 1]");
}

/// Advances `state` by one observation in place. The combined estimate
/// level + phi * trend is left in `state.combined_prev` and also written to
/// `combined` when that span is non-empty.
inline void holt_update(HoltState& state, std::span<const double> observation, double beta,
                        double gamma, double phi, std::span<double> combined = {}) {
    const std::size_t n = state.dim();
    if (observation.size() != n)
        throw InvalidArgument("holt_update: observation has " + std::to_string(observation.size()) +
                              " entries, state has " + std::to_string(n));
    if (!combined.empty() && combined.size() != n)
        throw InvalidArgument("holt_update: output span has wrong size");
    check_smoothing_params(beta, gamma, phi);

    const double trend_decay = gamma * phi;
    for (std::size_t i = 0; i < n; ++i) {
        const double prev_level = state.level[i];
        const double level = beta * state.combined_prev[i] + (1.0 - beta) * observation[i];
        const double trend = trend_decay * state.trend[i] + (1.0 - gamma) * (level - prev_level);
        state.level[i] = level;
        state.trend[i] = trend;
        state.combined_prev[i] = level + phi * trend;
    }
    if (!combined.empty())
        std::copy(state.combined_prev.begin(), state.combined_prev.end(), combined.begin());
    ++state.step;
}

struct BiasCorrection {
    double level_factor;
    double trend_factor;

    /// level_factor * level + trend_factor * trend
    double apply(double level, double trend) const noexcept {
        return level_factor * level + trend_factor * trend;
    }
};

/// Factors that debias a zero-initialised level and damped trend after `t` updates:
/// 1 / (1 - beta^t) and (1 - gamma phi) / ((1 - gamma)(1 - (gamma phi)^t)).
inline BiasCorrection bias_correction_factors(std::size_t t, double beta, double gamma,
                                              double phi) {
    if (t == 0) throw InvalidArgument("bias_correction_factors: t must be >= 1");
    check_smoothing_params(beta, gamma, phi);
    const double gp = gamma * phi;
    if (!(gp < 1.0)) throw InvalidArgument("bias_correction_factors: gamma * phi must be < 1");
    const double td = static_cast<double>(t);
    return {1.0 / (1.0 - std::pow(beta, td)),
            (1.0 - gp) / ((1.0 - gamma) * (1.0 - std::pow(gp, td)))};
}

}  // namespace trendopt
