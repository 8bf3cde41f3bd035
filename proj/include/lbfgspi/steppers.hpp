#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "lbfgspi/vec.hpp"

namespace lbfgspi {

/// Backtracking line search configuration (sufficient-decrease only).
struct BtlsConfig {
    double c1 = 0.25;        // sufficient-decrease coefficient
    double c2 = 0.5;         // contraction factor
    double t_init = 1.0;
    int max_backtracks = 50;

    void validate() const {
        if (!(c1 > 0.0 && c1 < 1.0)) throw std::invalid_argument("btls: c1 must be in (0,1)");
        if (!(c2 > 0.0 && c2 < 1.0)) throw std::invalid_argument("btls: c2 must be in (0,1)");
        if (!(t_init > 0.0)) throw std::invalid_argument("btls: t_init must be > 0");
        if (max_backtracks < 0) throw std::invalid_argument("btls: max_backtracks must be >= 0");
    }
};

struct BtlsResult {
    double t;
    int f_evals;     // trial objective evaluations consumed
    bool exhausted;  // no candidate satisfied the condition
};

/// Shrink t_init by c2 until f(x + t d) <= f(x) + c1 t g'd. If the budget of
/// max_backtracks trials is spent, returns c2^max_backtracks * t_init with the
/// exhausted flag set. `objective` maps an iterate to its function value;
/// `fx` is the (already known) value at x and is not recounted.
template <class Objective>
BtlsResult btls(Objective&& objective, const DenseVector& x, const DenseVector& d,
                const DenseVector& g, const BtlsConfig& cfg,
                std::optional<double> fx = std::nullopt) {
    cfg.validate();
    x.check_same_size(d, "btls");
    x.check_same_size(g, "btls");
    const double f0 = fx ? *fx : objective(x);
    ensure_finite(f0, "btls: f(x)");
    const double slope = dot(g, d);

    double t = cfg.t_init;
    int evals = 0;
    for (int j = 0; j < cfg.max_backtracks; ++j) {
        DenseVector trial = x;
        axpy(t, d, trial);
        const double ft = objective(trial);
        ensure_finite(ft, "btls: trial value");
        ++evals;
        if (ft <= f0 + cfg.c1 * t * slope) return {t, evals, false};
        t *= cfg.c2;
    }
    return {t, evals, true};
}

/// ADAM first/second moment state.
struct AdamState {
    DenseVector m, v;
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit AdamState(std::size_t n = 0) : m(n), v(n) {}
};

/// One ADAM update; returns the increment dx = -lr * mhat / (sqrt(vhat) + eps).
inline DenseVector adam_update(AdamState& state, const DenseVector& g, double lr) {
    state.m.check_same_size(g, "adam_update");
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    DenseVector dx(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        dx[i] = -lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    return dx;
}

/// RMSprop running squared-gradient average.
struct RmspropState {
    DenseVector avg;
    double decay = 0.99, eps = 1e-8;

    explicit RmspropState(std::size_t n = 0) : avg(n) {}
};

inline DenseVector rmsprop_update(RmspropState& state, const DenseVector& g, double lr) {
    state.avg.check_same_size(g, "rmsprop_update");
    DenseVector dx(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        state.avg[i] = state.decay * state.avg[i] + (1.0 - state.decay) * g[i] * g[i];
        dx[i] = -lr * g[i] / (std::sqrt(state.avg[i]) + state.eps);
    }
    return dx;
}

/// ADADELTA running averages of squared gradients and squared updates
/// (learning-rate multiplier 1, the outer-optimizer configuration).
struct AdadeltaState {
    DenseVector eg2, ed2;
    double decay = 0.95, eps = 1e-6;

    explicit AdadeltaState(std::size_t n = 0) : eg2(n), ed2(n) {}
};

inline DenseVector adadelta_update(AdadeltaState& state, const DenseVector& grad) {
    state.eg2.check_same_size(grad, "adadelta_update");
    DenseVector dx(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        state.eg2[i] = state.decay * state.eg2[i] + (1.0 - state.decay) * grad[i] * grad[i];
        const double step = -std::sqrt(state.ed2[i] + state.eps) /
                            std::sqrt(state.eg2[i] + state.eps) * grad[i];
        state.ed2[i] = state.decay * state.ed2[i] + (1.0 - state.decay) * step * step;
        dx[i] = step;
    }
    return dx;
}

} // namespace lbfgspi
