#pragma once

#include <utility>
#include <vector>

#include "lbfgspi/lbfgs.hpp"
#include "lbfgspi/rng.hpp"
#include "lbfgspi/vec.hpp"

namespace testutil {

using lbfgspi::DenseVector;

/// Independent reference for the two-loop recursion: the dense BFGS
/// inverse-Hessian update H+ = (I - rho s y')H(I - rho y s') + rho s s'
/// applied oldest-to-newest from H0 = gamma I, then d = -H g.
inline DenseVector dense_bfgs_direction(
    const std::vector<std::pair<DenseVector, DenseVector>>& pairs, const DenseVector& g) {
    const std::size_t n = g.size();
    double gamma = 1.0;
    if (!pairs.empty()) {
        const auto& [s, y] = pairs.back();
        gamma = std::abs(lbfgspi::dot(s, y)) / lbfgspi::dot(y, y);
    }
    std::vector<double> h(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) h[i * n + i] = gamma;

    for (const auto& [s, y] : pairs) {
        const double rho = 1.0 / lbfgspi::dot(s, y);
        // a = I - rho * s y'
        std::vector<double> a(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            a[i * n + i] = 1.0;
            for (std::size_t j = 0; j < n; ++j) a[i * n + j] -= rho * s[i] * y[j];
        }
        // h <- a h a' + rho s s'
        std::vector<double> ah(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k) {
                const double aik = a[i * n + k];
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) ah[i * n + j] += aik * h[k * n + j];
            }
        std::vector<double> next(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = rho * s[i] * s[j];
                for (std::size_t k = 0; k < n; ++k) acc += ah[i * n + k] * a[j * n + k];
                next[i * n + j] = acc;
            }
        h = std::move(next);
    }

    DenseVector d(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += h[i * n + j] * g[j];
        d[i] = -acc;
    }
    return d;
}

/// m random correction pairs with positive curvature.
inline std::vector<std::pair<DenseVector, DenseVector>> random_curvature_pairs(
    lbfgspi::Rng& rng, std::size_t n, int m) {
    std::vector<std::pair<DenseVector, DenseVector>> pairs;
    while (static_cast<int>(pairs.size()) < m) {
        DenseVector s = lbfgspi::randn(rng, n, 1.0);
        DenseVector y = lbfgspi::randn(rng, n, 1.0);
        if (lbfgspi::dot(s, y) > 1e-3) pairs.emplace_back(std::move(s), std::move(y));
    }
    return pairs;
}

inline double max_abs_diff(const DenseVector& a, const DenseVector& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace testutil
