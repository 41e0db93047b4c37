#pragma once

// Single-step update rules for SGD, Adam, AMSGrad and their trend-corrected
// counterparts AdamT / AMSGradT. Every step function updates `params` in place
// and returns the applied change (new_params - params).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "trendopt/error.hpp"
#include "trendopt/smoothing.hpp"

namespace trendopt {

using ParamVector = std::vector<double>;

enum class OptimizerKind { SGD, Adam, AMSGrad, AdamT, AMSGradT };

inline std::string_view to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::SGD: return "sgd";
        case OptimizerKind::Adam: return "adam";
        case OptimizerKind::AMSGrad: return "amsgrad";
        case OptimizerKind::AdamT: return "adamt";
        case OptimizerKind::AMSGradT: return "amsgradt";
    }
    return "unknown";
}

inline OptimizerKind parse_optimizer_kind(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (auto kind : {OptimizerKind::SGD, OptimizerKind::Adam, OptimizerKind::AMSGrad,
                      OptimizerKind::AdamT, OptimizerKind::AMSGradT})
        if (lower == to_string(kind)) return kind;
    throw InvalidArgument("unknown optimizer '" + std::string(name) + "'");
}

struct HyperParams {
    double eta = 1e-4;
    double beta1 = 0.9;
    double gamma1 = 0.9;
    double phi1 = 0.5;
    double beta2 = 0.999;
    double gamma2 = 0.999;
    double phi2 = 0.5;
    double epsilon = 1e-8;
    OptimizerKind kind = OptimizerKind::AdamT;
    /// AMSGrad baseline only; see step_amsgrad.
    bool amsgrad_bias_correction = true;

    static HyperParams defaults(OptimizerKind kind) {
        HyperParams hp;
        hp.kind = kind;
        return hp;
    }

    /// Throws InvalidArgument if any value is out of range. epsilon may be 0
    /// (used by the scale-invariance checks) but not negative.
    void validate() const {
        if (!(eta > 0.0 && std::isfinite(eta))) throw InvalidArgument("eta must be > 0");
        if (!(epsilon >= 0.0 && std::isfinite(epsilon)))
            throw InvalidArgument("epsilon must be >= 0");
        check_smoothing_params(beta1, gamma1, phi1);
        check_smoothing_params(beta2, gamma2, phi2);
        if (!(gamma1 * phi1 < 1.0) || !(gamma2 * phi2 < 1.0))
            throw InvalidArgument("gamma * phi must be < 1");
    }
};

namespace detail {

inline void check_step_inputs(std::size_t dim, std::span<const double> params,
                              std::span<const double> grad) {
    if (params.size() != dim || grad.size() != dim)
        throw InvalidArgument("optimizer step: expected dimension " + std::to_string(dim) +
                              ", got params=" + std::to_string(params.size()) +
                              " grad=" + std::to_string(grad.size()));
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i]))
            throw NumericError("optimizer step: non-finite gradient at index " + std::to_string(i),
                               i);
}

inline std::vector<double> squared(std::span<const double> g) {
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] * g[i];
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SGD

struct SgdState {
    std::size_t dim = 0;
    std::size_t step = 0;

    SgdState() = default;
    explicit SgdState(std::size_t d) : dim(d) {}
};

inline std::vector<double> step_sgd(SgdState& state, std::span<double> params,
                                    std::span<const double> grad, const HyperParams& hp) {
    detail::check_step_inputs(state.dim, params, grad);
    std::vector<double> delta(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        delta[i] = -hp.eta * grad[i];
        params[i] += delta[i];
    }
    ++state.step;
    return delta;
}

// ---------------------------------------------------------------------------
// Adam / AMSGrad

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;

    AdamState() = default;
    explicit AdamState(std::size_t dim) : m(dim, 0.0), v(dim, 0.0) {}
    std::size_t dim() const noexcept { return m.size(); }
};

struct AMSGradState {
    std::vector<double> m;
    std::vector<double> v;
    std::vector<double> v_max;
    std::size_t step = 0;

    AMSGradState() = default;
    explicit AMSGradState(std::size_t dim) : m(dim, 0.0), v(dim, 0.0), v_max(dim, 0.0) {}
    std::size_t dim() const noexcept { return m.size(); }
};

inline std::vector<double> step_adam(AdamState& state, std::span<double> params,
                                     std::span<const double> grad, const HyperParams& hp) {
    detail::check_step_inputs(state.dim(), params, grad);
    const std::size_t t = ++state.step;
    const double m_corr = 1.0 / (1.0 - std::pow(hp.beta1, static_cast<double>(t)));
    const double v_corr = 1.0 / (1.0 - std::pow(hp.beta2, static_cast<double>(t)));
    std::vector<double> delta(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double g = grad[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        const double m_hat = state.m[i] * m_corr;
        const double v_hat = state.v[i] * v_corr;
        delta[i] = -hp.eta * m_hat / (std::sqrt(v_hat) + hp.epsilon);
        params[i] += delta[i];
    }
    return delta;
}

/// AMSGrad: the running maximum of the raw second moment replaces v in the
/// denominator. With `hp.amsgrad_bias_correction` (the default) both m and
/// v_max are divided by their Adam correction terms, as in the common
/// framework implementations; without it the step is m / sqrt(v_max) with no
/// correction, as in the original formulation.
inline std::vector<double> step_amsgrad(AMSGradState& state, std::span<double> params,
                                        std::span<const double> grad, const HyperParams& hp) {
    detail::check_step_inputs(state.dim(), params, grad);
    const std::size_t t = ++state.step;
    double m_corr = 1.0, v_corr = 1.0;
    if (hp.amsgrad_bias_correction) {
        m_corr = 1.0 / (1.0 - std::pow(hp.beta1, static_cast<double>(t)));
        v_corr = 1.0 / (1.0 - std::pow(hp.beta2, static_cast<double>(t)));
    }
    std::vector<double> delta(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double g = grad[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        state.v_max[i] = std::max(state.v_max[i], state.v[i]);
        delta[i] = -hp.eta * state.m[i] * m_corr / (std::sqrt(state.v_max[i] * v_corr) + hp.epsilon);
        params[i] += delta[i];
    }
    return delta;
}

// ---------------------------------------------------------------------------
// AdamT / AMSGradT

struct AdamTState {
    HoltState first;   // gradient
    HoltState second;  // elementwise squared gradient
    std::size_t step = 0;

    AdamTState() = default;
    explicit AdamTState(std::size_t dim) : first(dim), second(dim) {}
    std::size_t dim() const noexcept { return first.dim(); }

    /// Bias-corrected first moment after the most recent step.
    std::vector<double> m_hat(const HyperParams& hp) const {
        return corrected(first, hp.beta1, hp.gamma1, hp.phi1);
    }
    /// Bias-corrected second moment after the most recent step (may be negative).
    std::vector<double> v_hat(const HyperParams& hp) const {
        return corrected(second, hp.beta2, hp.gamma2, hp.phi2);
    }

private:
    std::vector<double> corrected(const HoltState& s, double beta, double gamma,
                                  double phi) const {
        if (step == 0) throw InvalidArgument("moment estimates are undefined before the first step");
        const auto f = bias_correction_factors(step, beta, gamma, phi);
        std::vector<double> out(s.dim());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f.apply(s.level[i], s.trend[i]);
        return out;
    }
};

struct AMSGradTState {
    AdamTState base;
    std::vector<double> v_max;
    std::vector<double> level_at_max;
    std::vector<double> trend_at_max;

    AMSGradTState() = default;
    explicit AMSGradTState(std::size_t dim)
        : base(dim), v_max(dim, 0.0), level_at_max(dim, 0.0), trend_at_max(dim, 0.0) {}
    std::size_t dim() const noexcept { return base.dim(); }
    std::size_t step() const noexcept { return base.step; }

    /// Bias-corrected second moment built from the (level, trend) pair that
    /// produced the running maximum.
    std::vector<double> v_hat_max(const HyperParams& hp) const {
        if (base.step == 0)
            throw InvalidArgument("moment estimates are undefined before the first step");
        const auto f = bias_correction_factors(base.step, hp.beta2, hp.gamma2, hp.phi2);
        std::vector<double> out(dim());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = f.apply(level_at_max[i], trend_at_max[i]);
        return out;
    }
};

namespace detail {

inline void advance_moments(AdamTState& s, std::span<const double> grad, const HyperParams& hp) {
    holt_update(s.first, grad, hp.beta1, hp.gamma1, hp.phi1);
    const auto sq = squared(grad);
    holt_update(s.second, sq, hp.beta2, hp.gamma2, hp.phi2);
    ++s.step;
}

}  // namespace detail

inline std::vector<double> step_adamt(AdamTState& state, std::span<double> params,
                                      std::span<const double> grad, const HyperParams& hp) {
    detail::check_step_inputs(state.dim(), params, grad);
    detail::advance_moments(state, grad, hp);
    const auto fm = bias_correction_factors(state.step, hp.beta1, hp.gamma1, hp.phi1);
    const auto fv = bias_correction_factors(state.step, hp.beta2, hp.gamma2, hp.phi2);
    std::vector<double> delta(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double m_hat = fm.apply(state.first.level[i], state.first.trend[i]);
        const double v_hat = fv.apply(state.second.level[i], state.second.trend[i]);
        delta[i] = -hp.eta * m_hat / (std::sqrt(std::abs(v_hat)) + hp.epsilon);
        params[i] += delta[i];
    }
    return delta;
}

inline std::vector<double> step_amsgradt(AMSGradTState& state, std::span<double> params,
                                         std::span<const double> grad, const HyperParams& hp) {
    detail::check_step_inputs(state.dim(), params, grad);
    AdamTState& base = state.base;
    detail::advance_moments(base, grad, hp);
    const auto fm = bias_correction_factors(base.step, hp.beta1, hp.gamma1, hp.phi1);
    const auto fv = bias_correction_factors(base.step, hp.beta2, hp.gamma2, hp.phi2);
    std::vector<double> delta(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        // Strict improvement only: ties keep the earlier (level, trend) pair.
        const double v = base.second.combined_prev[i];
        if (v > state.v_max[i]) {
            state.v_max[i] = v;
            state.level_at_max[i] = base.second.level[i];
            state.trend_at_max[i] = base.second.trend[i];
        }
        const double m_hat = fm.apply(base.first.level[i], base.first.trend[i]);
        const double v_hat = fv.apply(state.level_at_max[i], state.trend_at_max[i]);
        delta[i] = -hp.eta * m_hat / (std::sqrt(std::abs(v_hat)) + hp.epsilon);
        params[i] += delta[i];
    }
    return delta;
}

// ---------------------------------------------------------------------------
// Type-erased front end used by the experiment harness.

class Optimizer {
public:
    Optimizer(HyperParams hp, std::size_t dim) : hp_(hp) {
        hp_.validate();
        switch (hp.kind) {
            case OptimizerKind::SGD: state_ = SgdState(dim); break;
            case OptimizerKind::Adam: state_ = AdamState(dim); break;
            case OptimizerKind::AMSGrad: state_ = AMSGradState(dim); break;
            case OptimizerKind::AdamT: state_ = AdamTState(dim); break;
            case OptimizerKind::AMSGradT: state_ = AMSGradTState(dim); break;
        }
    }

    std::vector<double> step(std::span<double> params, std::span<const double> grad) {
        return std::visit([&](auto& s) { return dispatch(s, params, grad); }, state_);
    }

    const HyperParams& hyper_params() const noexcept { return hp_; }
    OptimizerKind kind() const noexcept { return hp_.kind; }

    template <class State>
    const State& state() const {
        return std::get<State>(state_);
    }

private:
    std::vector<double> dispatch(SgdState& s, std::span<double> p, std::span<const double> g) {
        return step_sgd(s, p, g, hp_);
    }
    std::vector<double> dispatch(AdamState& s, std::span<double> p, std::span<const double> g) {
        return step_adam(s, p, g, hp_);
    }
    std::vector<double> dispatch(AMSGradState& s, std::span<double> p,
                                 std::span<const double> g) {
        return step_amsgrad(s, p, g, hp_);
    }
    std::vector<double> dispatch(AdamTState& s, std::span<double> p, std::span<const double> g) {
        return step_adamt(s, p, g, hp_);
    }
    std::vector<double> dispatch(AMSGradTState& s, std::span<double> p,
                                 std::span<const double> g) {
        return step_amsgradt(s, p, g, hp_);
    }

    HyperParams hp_;
    std::variant<SgdState, AdamState, AMSGradState, AdamTState, AMSGradTState> state_;
};

}  // namespace trendopt
