#pragma once

// Benchmark objectives with analytic gradients.
//
// Parameter layout is part of the public contract: every weight matrix is
// stored row-major as (outputs x inputs), followed by that layer's biases,
// layer by layer from the input side.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "trendopt/data.hpp"
#include "trendopt/error.hpp"

namespace trendopt {

struct Evaluation {
    double loss = 0.0;
    std::vector<double> grad;
};

struct Metrics {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// A stochastic objective f(params; batch, stream). With a fixed `stream`
/// the evaluation is a pure function, which is what gradient checking needs.
class Objective {
public:
    virtual ~Objective() = default;
    virtual std::size_t dim() const = 0;
    virtual Evaluation eval(std::span<const double> params, const Batch& batch,
                            std::uint64_t stream = 0) const = 0;
    /// False only when evaluation draws randomness (dropout) from `stream`.
    virtual bool deterministic() const { return true; }
};

/// An objective that is also a classifier over a Dataset.
class Classifier : public Objective {
public:
    /// Loss (including any L2 term) and accuracy over the whole dataset with
    /// stochastic layers disabled.
    virtual Metrics metrics(std::span<const double> params, const Dataset& data) const = 0;
    virtual std::vector<double> initial_params(std::uint64_t seed) const = 0;
};

namespace detail {

inline void check_params(std::span<const double> params, std::size_t dim, const char* who) {
    if (params.size() != dim)
        throw InvalidArgument(std::string(who) + ": expected " + std::to_string(dim) +
                              " parameters, got " + std::to_string(params.size()));
}

inline void check_batch(const Batch& batch, std::size_t features, std::size_t classes,
                        const char* who) {
    if (batch.data == nullptr || batch.indices.empty())
        throw InvalidArgument(std::string(who) + ": empty batch");
    if (batch.data->d != features)
        throw InvalidArgument(std::string(who) + ": batch has " + std::to_string(batch.data->d) +
                              " features, model expects " + std::to_string(features));
    for (auto idx : batch.indices) {
        if (idx >= batch.data->n) throw InvalidArgument(std::string(who) + ": index out of range");
        if (batch.data->labels[idx] >= classes)
            throw InvalidArgument(std::string(who) + ": label " +
                                  std::to_string(batch.data->labels[idx]) +
                                  " out of class range " + std::to_string(classes));
    }
}

/// Turns logits into probabilities in place and returns -log p[label].
inline double softmax_xent(std::span<double> logits, std::size_t label) {
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - zmax);
    const double lse = zmax + std::log(sum);
    const double loss = lse - logits[label];
    for (double& z : logits) z = std::exp(z - lse);
    return loss;
}

inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::vector<Batch> whole(const Dataset& data, std::vector<std::size_t>& storage) {
    storage.resize(data.n);
    for (std::size_t i = 0; i < data.n; ++i) storage[i] = i;
    return {Batch{&data, storage}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Multinomial logistic regression

/// Mean softmax cross-entropy of a linear model, plus (l2/2)||params||^2.
/// The L2 term covers biases too so that l2 > 0 gives a unique minimiser.
class LogisticRegression final : public Classifier {
public:
    LogisticRegression(std::size_t features, std::size_t classes, double l2 = 0.0)
        : features_(features), classes_(classes), l2_(l2) {
        if (features == 0 || classes < 2)
            throw InvalidArgument("LogisticRegression: need >= 1 feature and >= 2 classes");
        if (!(l2 >= 0.0)) throw InvalidArgument("LogisticRegression: l2 must be >= 0");
    }

    std::size_t dim() const override { return classes_ * features_ + classes_; }
    std::size_t features() const noexcept { return features_; }
    std::size_t classes() const noexcept { return classes_; }
    double l2() const noexcept { return l2_; }

    Evaluation eval(std::span<const double> params, const Batch& batch,
                    std::uint64_t = 0) const override {
        detail::check_params(params, dim(), "logreg_eval");
        detail::check_batch(batch, features_, classes_, "logreg_eval");
        const double* w = params.data();
        const double* b = params.data() + classes_ * features_;
        Evaluation out;
        out.grad.assign(dim(), 0.0);
        double* gw = out.grad.data();
        double* gb = out.grad.data() + classes_ * features_;
        std::vector<double> z(classes_);
        const double inv_n = 1.0 / static_cast<double>(batch.size());

        for (auto idx : batch.indices) {
            const auto x = batch.data->row(idx);
            const std::size_t y = batch.data->labels[idx];
            for (std::size_t k = 0; k < classes_; ++k) {
                double acc = b[k];
                const double* wk = w + k * features_;
                for (std::size_t j = 0; j < features_; ++j) acc += wk[j] * x[j];
                z[k] = acc;
            }
            out.loss += detail::softmax_xent(z, y);
            for (std::size_t k = 0; k < classes_; ++k) {
                const double delta = (z[k] - (k == y ? 1.0 : 0.0)) * inv_n;
                double* gk = gw + k * features_;
                for (std::size_t j = 0; j < features_; ++j) gk[j] += delta * x[j];
                gb[k] += delta;
            }
        }
        out.loss *= inv_n;
        if (l2_ > 0.0) {
            double sq = 0.0;
            for (std::size_t i = 0; i < params.size(); ++i) {
                sq += params[i] * params[i];
                out.grad[i] += l2_ * params[i];
            }
            out.loss += 0.5 * l2_ * sq;
        }
        return out;
    }

    Metrics metrics(std::span<const double> params, const Dataset& data) const override {
        detail::check_params(params, dim(), "logreg metrics");
        std::vector<std::size_t> all;
        const auto batch = detail::whole(data, all).front();
        detail::check_batch(batch, features_, classes_, "logreg metrics");
        Metrics m;
        std::vector<double> z(classes_);
        const double* w = params.data();
        const double* b = params.data() + classes_ * features_;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < data.n; ++i) {
            const auto x = data.row(i);
            for (std::size_t k = 0; k < classes_; ++k) {
                double acc = b[k];
                for (std::size_t j = 0; j < features_; ++j) acc += w[k * features_ + j] * x[j];
                z[k] = acc;
            }
            const auto pred = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
            if (pred == data.labels[i]) ++correct;
            m.loss += detail::softmax_xent(z, data.labels[i]);
        }
        m.loss /= static_cast<double>(data.n);
        if (l2_ > 0.0) {
            double sq = 0.0;
            for (double p : params) sq += p * p;
            m.loss += 0.5 * l2_ * sq;
        }
        m.accuracy = static_cast<double>(correct) / static_cast<double>(data.n);
        return m;
    }

    /// Small Gaussian weights (sd 0.01), zero biases.
    std::vector<double> initial_params(std::uint64_t seed) const override {
        std::vector<double> p(dim(), 0.0);
        std::mt19937_64 rng(mix_seed(seed, 0x10));
        std::normal_distribution<double> normal(0.0, 0.01);
        for (std::size_t i = 0; i < classes_ * features_; ++i) p[i] = normal(rng);
        return p;
    }

private:
    std::size_t features_;
    std::size_t classes_;
    double l2_;
};

// ---------------------------------------------------------------------------
// Feedforward network

enum class Activation { ReLU, Tanh };

struct MlpSpec {
    /// input, hidden..., classes
    std::vector<std::size_t> widths;
    Activation activation = Activation::ReLU;
    /// One entry per hidden layer, applied to that layer's output. 0 disables.
    std::vector<double> dropout;
    double l2 = 0.0;

    std::size_t hidden_layers() const noexcept { return widths.size() < 2 ? 0 : widths.size() - 2; }
};

/// Fully connected network with softmax cross-entropy output and inverted
/// dropout on hidden activations.
class Mlp final : public Classifier {
public:
    explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {
        if (spec_.widths.size() < 2) throw InvalidArgument("Mlp: need input and output widths");
        for (auto w : spec_.widths)
            if (w == 0) throw InvalidArgument("Mlp: zero layer width");
        if (spec_.widths.back() < 2) throw InvalidArgument("Mlp: need >= 2 classes");
        if (spec_.dropout.empty()) spec_.dropout.assign(spec_.hidden_layers(), 0.0);
        if (spec_.dropout.size() != spec_.hidden_layers())
            throw InvalidArgument("Mlp: one dropout probability per hidden layer required");
        for (double p : spec_.dropout)
            if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("Mlp: dropout must lie in [0, 1)");
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
            weight_offset_.push_back(off);
            off += spec_.widths[l + 1] * spec_.widths[l];
            bias_offset_.push_back(off);
            off += spec_.widths[l + 1];
        }
        dim_ = off;
    }

    const MlpSpec& spec() const noexcept { return spec_; }
    std::size_t dim() const override { return dim_; }
    bool deterministic() const override {
        return std::all_of(spec_.dropout.begin(), spec_.dropout.end(),
                           [](double p) { return p == 0.0; });
    }
    std::size_t weight_offset(std::size_t layer) const { return weight_offset_.at(layer); }
    std::size_t bias_offset(std::size_t layer) const { return bias_offset_.at(layer); }

    Evaluation eval(std::span<const double> params, const Batch& batch,
                    std::uint64_t stream = 0) const override {
        detail::check_params(params, dim_, "mlp_eval");
        detail::check_batch(batch, spec_.widths.front(), spec_.widths.back(), "mlp_eval");
        Forward fw = forward(params, batch, stream, true);

        const std::size_t layers = spec_.widths.size() - 1;
        const std::size_t bs = batch.size();
        const double inv_n = 1.0 / static_cast<double>(bs);
        Evaluation out;
        out.grad.assign(dim_, 0.0);

        // Output layer: probabilities overwrite logits.
        std::vector<double> delta = fw.pre[layers - 1];
        const std::size_t classes = spec_.widths.back();
        for (std::size_t s = 0; s < bs; ++s) {
            std::span<double> z(delta.data() + s * classes, classes);
            const std::size_t y = batch.data->labels[batch.indices[s]];
            out.loss += detail::softmax_xent(z, y);
            z[y] -= 1.0;
            for (double& v : z) v *= inv_n;
        }
        out.loss *= inv_n;

        for (std::size_t l = layers; l-- > 0;) {
            const std::size_t in = spec_.widths[l];
            const std::size_t outw = spec_.widths[l + 1];
            const std::vector<double>& a_in = fw.act[l];
            const double* w = params.data() + weight_offset_[l];
            double* gw = out.grad.data() + weight_offset_[l];
            double* gb = out.grad.data() + bias_offset_[l];
            for (std::size_t s = 0; s < bs; ++s) {
                const double* dz = delta.data() + s * outw;
                const double* a = a_in.data() + s * in;
                for (std::size_t o = 0; o < outw; ++o) {
                    const double g = dz[o];
                    if (g == 0.0) continue;
                    double* row = gw + o * in;
                    for (std::size_t j = 0; j < in; ++j) row[j] += g * a[j];
                    gb[o] += g;
                }
            }
            if (l == 0) break;
            // Back through dropout and activation of hidden layer l-1.
            std::vector<double> prev(bs * in, 0.0);
            for (std::size_t s = 0; s < bs; ++s) {
                const double* dz = delta.data() + s * outw;
                double* dp = prev.data() + s * in;
                for (std::size_t o = 0; o < outw; ++o) {
                    const double g = dz[o];
                    if (g == 0.0) continue;
                    const double* row = w + o * in;
                    for (std::size_t j = 0; j < in; ++j) dp[j] += g * row[j];
                }
            }
            const std::vector<double>& z = fw.pre[l - 1];
            const std::vector<double>& mask = fw.mask[l - 1];
            for (std::size_t i = 0; i < prev.size(); ++i) {
                double g = prev[i];
                if (!mask.empty()) g *= mask[i];
                prev[i] = g * activation_derivative(z[i]);
            }
            delta = std::move(prev);
        }

        if (spec_.l2 > 0.0) {
            double sq = 0.0;
            for (std::size_t i = 0; i < dim_; ++i) {
                sq += params[i] * params[i];
                out.grad[i] += spec_.l2 * params[i];
            }
            out.loss += 0.5 * spec_.l2 * sq;
        }
        return out;
    }

    Metrics metrics(std::span<const double> params, const Dataset& data) const override {
        detail::check_params(params, dim_, "mlp metrics");
        std::vector<std::size_t> all;
        const Batch batch = detail::whole(data, all).front();
        detail::check_batch(batch, spec_.widths.front(), spec_.widths.back(), "mlp metrics");
        // Chunk to bound memory on large datasets.
        constexpr std::size_t chunk = 1024;
        Metrics m;
        std::size_t correct = 0;
        const std::size_t classes = spec_.widths.back();
        for (std::size_t start = 0; start < data.n; start += chunk) {
            const std::size_t len = std::min(chunk, data.n - start);
            Batch part{&data, std::span<const std::size_t>(all.data() + start, len)};
            Forward fw = forward(params, part, 0, false);
            std::vector<double>& logits = fw.pre.back();
            for (std::size_t s = 0; s < len; ++s) {
                std::span<double> z(logits.data() + s * classes, classes);
                const auto pred =
                    static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
                const std::size_t y = data.labels[start + s];
                if (pred == y) ++correct;
                m.loss += detail::softmax_xent(z, y);
            }
        }
        m.loss /= static_cast<double>(data.n);
        if (spec_.l2 > 0.0) {
            double sq = 0.0;
            for (double p : params) sq += p * p;
            m.loss += 0.5 * spec_.l2 * sq;
        }
        m.accuracy = static_cast<double>(correct) / static_cast<double>(data.n);
        return m;
    }

    /// He-normal weights for ReLU, Glorot-normal for tanh; zero biases.
    std::vector<double> initial_params(std::uint64_t seed) const override {
        std::vector<double> p(dim_, 0.0);
        std::mt19937_64 rng(mix_seed(seed, 0x20));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
            const double fan_in = static_cast<double>(spec_.widths[l]);
            const double fan_out = static_cast<double>(spec_.widths[l + 1]);
            const double sd = spec_.activation == Activation::ReLU ? std::sqrt(2.0 / fan_in)
                                                                   : std::sqrt(2.0 / (fan_in + fan_out));
            for (std::size_t i = weight_offset_[l]; i < bias_offset_[l]; ++i) p[i] = sd * normal(rng);
        }
        return p;
    }

    /// Smallest |pre-activation| over all hidden units for this batch and
    /// dropout stream. Finite-difference checks skip instances near a ReLU kink.
    double min_abs_preactivation(std::span<const double> params, const Batch& batch,
                                 std::uint64_t stream = 0) const {
        detail::check_params(params, dim_, "mlp");
        detail::check_batch(batch, spec_.widths.front(), spec_.widths.back(), "mlp");
        Forward fw = forward(params, batch, stream, true);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l + 1 < fw.pre.size(); ++l)
            for (double z : fw.pre[l]) best = std::min(best, std::abs(z));
        return best;
    }

private:
    struct Forward {
        std::vector<std::vector<double>> act;   // act[0] = inputs, act[l] = output of hidden l-1
        std::vector<std::vector<double>> pre;   // pre-activations per layer, last = logits
        std::vector<std::vector<double>> mask;  // per hidden layer; empty if no dropout
    };

    double activate(double z) const {
        return spec_.activation == Activation::ReLU ? (z > 0.0 ? z : 0.0) : std::tanh(z);
    }

    // ReLU'(0) is taken as 0.
    double activation_derivative(double z) const {
        if (spec_.activation == Activation::ReLU) return z > 0.0 ? 1.0 : 0.0;
        const double a = std::tanh(z);
        return 1.0 - a * a;
    }

    Forward forward(std::span<const double> params, const Batch& batch, std::uint64_t stream,
                    bool train) const {
        const std::size_t bs = batch.size();
        const std::size_t layers = spec_.widths.size() - 1;
        Forward fw;
        fw.act.resize(layers);
        fw.pre.resize(layers);
        fw.mask.resize(spec_.hidden_layers());

        const std::size_t in0 = spec_.widths[0];
        fw.act[0].resize(bs * in0);
        for (std::size_t s = 0; s < bs; ++s) {
            const auto x = batch.data->row(batch.indices[s]);
            std::copy(x.begin(), x.end(), fw.act[0].begin() + static_cast<std::ptrdiff_t>(s * in0));
        }

        std::mt19937_64 rng(mix_seed(stream, 0x30));
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = spec_.widths[l];
            const std::size_t outw = spec_.widths[l + 1];
            const double* w = params.data() + weight_offset_[l];
            const double* b = params.data() + bias_offset_[l];
            std::vector<double>& z = fw.pre[l];
            z.resize(bs * outw);
            const std::vector<double>& a = fw.act[l];
            for (std::size_t s = 0; s < bs; ++s) {
                const double* as = a.data() + s * in;
                for (std::size_t o = 0; o < outw; ++o) {
                    const double* row = w + o * in;
                    double acc = b[o];
                    for (std::size_t j = 0; j < in; ++j) acc += row[j] * as[j];
                    z[s * outw + o] = acc;
                }
            }
            for (std::size_t i = 0; i < z.size(); ++i)
                if (!std::isfinite(z[i]))
                    throw NumericError("mlp: non-finite activation in layer " + std::to_string(l), l);
            if (l + 1 == layers) break;

            std::vector<double>& next = fw.act[l + 1];
            next.resize(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) next[i] = activate(z[i]);
            const double p = spec_.dropout[l];
            if (train && p > 0.0) {
                std::vector<double>& mask = fw.mask[l];
                mask.resize(z.size());
                const double keep_scale = 1.0 / (1.0 - p);
                for (std::size_t i = 0; i < mask.size(); ++i) {
                    mask[i] = detail::uniform01(rng) < p ? 0.0 : keep_scale;
                    next[i] *= mask[i];
                }
            }
        }
        return fw;
    }

    MlpSpec spec_;
    std::vector<std::size_t> weight_offset_;
    std::vector<std::size_t> bias_offset_;
    std::size_t dim_ = 0;
};

// ---------------------------------------------------------------------------
// Smoke-test surfaces (batch is ignored)

/// 0.5 (x - x*)^T A (x - x*) with symmetric positive definite A.
class Quadratic final : public Objective {
public:
    Quadratic(std::vector<double> a, std::vector<double> minimizer)
        : a_(std::move(a)), x_star_(std::move(minimizer)) {
        const std::size_t n = x_star_.size();
        if (n == 0 || a_.size() != n * n) throw InvalidArgument("Quadratic: A must be n x n");
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (a_[i * n + j] != a_[j * n + i]) throw InvalidArgument("Quadratic: A not symmetric");
    }

    /// Random SPD instance A = Q diag(eigs) Q^T with eigenvalues spread
    /// geometrically over [1, condition].
    static Quadratic random(std::size_t n, std::uint64_t seed, double condition = 10.0) {
        std::mt19937_64 rng(mix_seed(seed, 0x40));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> q(n * n);
        for (auto& v : q) v = normal(rng);
        // Gram-Schmidt on rows.
        for (std::size_t i = 0; i < n; ++i) {
            double* r = q.data() + i * n;
            for (std::size_t k = 0; k < i; ++k) {
                const double* p = q.data() + k * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += r[j] * p[j];
                for (std::size_t j = 0; j < n; ++j) r[j] -= dot * p[j];
            }
            double norm = 0.0;
            for (std::size_t j = 0; j < n; ++j) norm += r[j] * r[j];
            norm = std::sqrt(norm);
            for (std::size_t j = 0; j < n; ++j) r[j] /= norm;
        }
        std::vector<double> eig(n);
        for (std::size_t i = 0; i < n; ++i)
            eig[i] = n == 1 ? 1.0 : std::pow(condition, static_cast<double>(i) / static_cast<double>(n - 1));
        std::vector<double> a(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < n; ++k) acc += q[k * n + i] * eig[k] * q[k * n + j];
                a[i * n + j] = acc;
                a[j * n + i] = acc;
            }
        std::vector<double> x_star(n);
        for (auto& v : x_star) v = normal(rng);
        return Quadratic(std::move(a), std::move(x_star));
    }

    std::size_t dim() const override { return x_star_.size(); }
    const std::vector<double>& minimizer() const noexcept { return x_star_; }
    const std::vector<double>& matrix() const noexcept { return a_; }

    Evaluation eval(std::span<const double> x, const Batch& = {}, std::uint64_t = 0) const override {
        detail::check_params(x, dim(), "quadratic_eval");
        const std::size_t n = dim();
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) r[i] = x[i] - x_star_[i];
        Evaluation out;
        out.grad.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += a_[i * n + j] * r[j];
            out.grad[i] = acc;
            out.loss += 0.5 * r[i] * acc;
        }
        return out;
    }

private:
    std::vector<double> a_;
    std::vector<double> x_star_;
};

/// (1 - x)^2 + 100 (y - x^2)^2
class Rosenbrock final : public Objective {
public:
    std::size_t dim() const override { return 2; }

    Evaluation eval(std::span<const double> p, const Batch& = {}, std::uint64_t = 0) const override {
        detail::check_params(p, 2, "rosenbrock_eval");
        const double x = p[0], y = p[1];
        const double r = y - x * x;
        Evaluation out;
        out.loss = (1.0 - x) * (1.0 - x) + 100.0 * r * r;
        out.grad = {-2.0 * (1.0 - x) - 400.0 * x * r, 200.0 * r};
        return out;
    }
};

}  // namespace trendopt
