#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

#include "lbfgspi/vec.hpp"

namespace lbfgspi {

/// Central finite differences of a scalar function at x.
template <class Fn>
DenseVector central_differences(Fn&& fn, const DenseVector& x, double h = 1e-6) {
    DenseVector grad(x.size());
    DenseVector p = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = p[i];
        p[i] = xi + h;
        const double fp = fn(p);
        p[i] = xi - h;
        const double fm = fn(p);
        p[i] = xi;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

/// |a - b| / max(|a|, |b|, 1): relative for O(1)-or-larger entries, absolute
/// below that so finite-difference roundoff on zero entries does not trip it.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
};

inline GradCheckResult compare_gradients(const DenseVector& analytic, const DenseVector& numeric) {
    analytic.check_same_size(numeric, "compare_gradients");
    GradCheckResult res;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double e = rel_err(analytic[i], numeric[i]);
        if (e > res.max_rel_err) {
            res.max_rel_err = e;
            res.worst_index = i;
        }
    }
    return res;
}

} // namespace lbfgspi
