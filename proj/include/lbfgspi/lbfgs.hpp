#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <stdexcept>
#include <vector>

#include "lbfgspi/engine.hpp"
#include "lbfgspi/vec.hpp"

namespace lbfgspi {

/// Bounded history of correction pairs (s_i, y_i, rho_i), oldest first.
/// Pairs with s'y <= 0 are never stored (the non-convex skip safeguard), so
/// every stored rho is strictly positive and the implicit inverse-Hessian
/// estimate stays positive definite.
class LbfgsHistory {
public:
    struct Pair {
        DenseVector s;
        DenseVector y;
        double rho;
    };

    explicit LbfgsHistory(int memory = 5) : memory_(memory) {
        if (memory < 1) throw std::invalid_argument("LbfgsHistory: memory must be >= 1");
    }

    /// Store the pair if the curvature condition s'y > 0 holds, evicting the
    /// oldest pair when full. Returns whether the pair was accepted.
    bool push_pair(const DenseVector& s, const DenseVector& y) {
        s.check_same_size(y, "LbfgsHistory::push_pair");
        const double sy = dot(s, y);
        if (!(sy > 0.0)) return false;
        if (static_cast<int>(pairs_.size()) == memory_) pairs_.pop_front();
        pairs_.push_back({s, y, 1.0 / sy});
        return true;
    }

    /// Initial Hessian scaling |s'y| / (y'y) from the newest stored pair;
    /// 1 when the history is empty (plain gradient step).
    double gamma() const {
        if (pairs_.empty()) return 1.0;
        const Pair& p = pairs_.back();
        return std::abs(dot(p.s, p.y)) / dot(p.y, p.y);
    }

    int size() const { return static_cast<int>(pairs_.size()); }
    bool empty() const { return pairs_.empty(); }
    int memory() const { return memory_; }
    const Pair& pair(int i) const { return pairs_[static_cast<std::size_t>(i)]; }
    const std::deque<Pair>& pairs() const { return pairs_; }
    void clear() { pairs_.clear(); }

private:
    std::deque<Pair> pairs_;
    int memory_;
};

/// Two-loop recursion over an engine. `pairs` is any random-access range of
/// items exposing .s, .y, .rho (oldest first); gamma is the initial scaling.
/// Returns d = -H g without forming H.
template <class Engine, class PairRange>
typename Engine::Vec two_loop_impl(Engine& eng, const PairRange& pairs,
                                   const typename Engine::Vec& g,
                                   const typename Engine::Scalar& gamma) {
    const int p = static_cast<int>(pairs.size());
    auto q = g;
    // every slot is written by the first loop before the second reads it
    std::vector<typename Engine::Scalar> alpha(static_cast<std::size_t>(p));
    for (int i = p - 1; i >= 0; --i) {
        alpha[static_cast<std::size_t>(i)] = eng.scale(pairs[i].rho, eng.dot(pairs[i].s, q));
        q = eng.sub(q, eng.scale(alpha[static_cast<std::size_t>(i)], pairs[i].y));
    }
    auto r = eng.scale(gamma, q);
    for (int i = 0; i < p; ++i) {
        auto beta = eng.scale(pairs[i].rho, eng.dot(pairs[i].y, r));
        r = eng.add(r, eng.scale(eng.sub(alpha[static_cast<std::size_t>(i)], beta), pairs[i].s));
    }
    return eng.neg(r);
}

/// Update direction d_k = -H_k g_k from the stored history (skipped pairs are
/// simply absent). Empty history gives d = -g exactly.
inline DenseVector two_loop(const LbfgsHistory& history, const DenseVector& g) {
    if (!history.empty() && history.pair(0).s.size() != g.size())
        throw std::invalid_argument("two_loop: dimension mismatch with history");
    NumericEngine eng;
    return two_loop_impl(eng, history.pairs(), g, history.gamma());
}

} // namespace lbfgspi
