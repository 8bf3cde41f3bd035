#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "lbfgspi/common.hpp"

namespace lbfgspi {

/// Flat double-precision vector. The single carrier for iterates,
/// gradients, directions, correction pairs and flattened parameters.
/// The length is fixed at construction; all binary operations require
/// equal lengths and throw std::invalid_argument otherwise.
class DenseVector {
public:
    DenseVector() = default;
    explicit DenseVector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
    DenseVector(std::initializer_list<double> init) : data_(init) {}
    explicit DenseVector(std::vector<double> v) : data_(std::move(v)) {}

    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    const std::vector<double>& raw() const { return data_; }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    DenseVector& operator+=(const DenseVector& o) {
        check_same_size(o, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    DenseVector& operator-=(const DenseVector& o) {
        check_same_size(o, "operator-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    DenseVector& operator*=(double c) {
        for (double& x : data_) x *= c;
        return *this;
    }

    friend DenseVector operator+(DenseVector a, const DenseVector& b) { return a += b; }
    friend DenseVector operator-(DenseVector a, const DenseVector& b) { return a -= b; }
    friend DenseVector operator*(double c, DenseVector v) { return v *= c; }
    friend DenseVector operator-(DenseVector v) { return v *= -1.0; }

    bool operator==(const DenseVector& o) const { return data_ == o.data_; }

    void check_same_size(const DenseVector& o, const char* where) const {
        if (data_.size() != o.data_.size())
            throw std::invalid_argument(std::string(where) + ": length mismatch (" +
                                        std::to_string(data_.size()) + " vs " +
                                        std::to_string(o.data_.size()) + ")");
    }

private:
    std::vector<double> data_;
};

inline double dot(const DenseVector& a, const DenseVector& b) {
    a.check_same_size(b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2(const DenseVector& a) { return std::sqrt(dot(a, a)); }

/// y += c * x
inline void axpy(double c, const DenseVector& x, DenseVector& y) {
    x.check_same_size(y, "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += c * x[i];
}

inline DenseVector unit_vector(std::size_t n, std::size_t i) {
    DenseVector e(n);
    e[i] = 1.0;
    return e;
}

inline void ensure_finite(const DenseVector& v, const char* context) {
    if (!v.all_finite())
        throw DivergedError(std::string(context) + ": non-finite entries");
}

inline void ensure_finite(double x, const char* context) {
    if (!std::isfinite(x))
        throw DivergedError(std::string(context) + ": non-finite value");
}

/// Row-major matrix-vector product: out = W x + b, W is rows x cols.
inline DenseVector affine_apply(const DenseVector& w_flat, const DenseVector& b,
                                const DenseVector& x, std::size_t rows, std::size_t cols) {
    if (w_flat.size() != rows * cols || b.size() != rows || x.size() != cols)
        throw std::invalid_argument("affine_apply: shape mismatch");
    DenseVector out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = b[r];
        const double* wr = w_flat.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
        out[r] = acc;
    }
    return out;
}

/// In-place Cholesky solve of A x = rhs for symmetric positive-definite A
/// (row-major n x n). Used for analytic quadratic minimizers; throws if the
/// factorization hits a nonpositive pivot.
inline DenseVector cholesky_solve(const DenseVector& a_flat, const DenseVector& rhs) {
    const std::size_t n = rhs.size();
    if (a_flat.size() != n * n)
        throw std::invalid_argument("cholesky_solve: shape mismatch");
    std::vector<double> l(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = a_flat[i * n + j];
            for (std::size_t k = 0; k < j; ++k) acc -= l[i * n + k] * l[j * n + k];
            if (i == j) {
                if (acc <= 0.0)
                    throw std::runtime_error("cholesky_solve: matrix not positive definite");
                l[i * n + i] = std::sqrt(acc);
            } else {
                l[i * n + j] = acc / l[j * n + j];
            }
        }
    }
    DenseVector y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = rhs[i];
        for (std::size_t k = 0; k < i; ++k) acc -= l[i * n + k] * y[k];
        y[i] = acc / l[i * n + i];
    }
    DenseVector x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double acc = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) acc -= l[k * n + ii] * x[k];
        x[ii] = acc / l[ii * n + ii];
    }
    return x;
}

} // namespace lbfgspi
