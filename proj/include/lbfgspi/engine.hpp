#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "lbfgspi/tape.hpp"
#include "lbfgspi/vec.hpp"

namespace lbfgspi {

/// The two-loop recursion and the policy pipeline are written once against
/// this engine interface and instantiated twice: NumericEngine evaluates in
/// plain doubles (the execution path of the benchmark harness) and TapeEngine
/// records the identical arithmetic on a Tape (the differentiated path of the
/// trainer). Both produce bitwise-equal forward values.
struct NumericEngine {
    using Scalar = double;
    using Vec = DenseVector;

    Scalar constant(double c) const { return c; }
    Vec constant_vec(DenseVector v) const { return v; }

    Scalar add(Scalar a, Scalar b) const { return a + b; }
    Vec add(const Vec& a, const Vec& b) const { return a + b; }
    Scalar sub(Scalar a, Scalar b) const { return a - b; }
    Vec sub(const Vec& a, const Vec& b) const { return a - b; }

    Scalar scale(Scalar s, Scalar v) const { return s * v; }
    Vec scale(Scalar s, const Vec& v) const { return s * v; }

    Scalar neg(Scalar a) const { return -a; }
    Vec neg(const Vec& a) const { return -a; }

    Scalar dot(const Vec& a, const Vec& b) const { return lbfgspi::dot(a, b); }
    Scalar recip(Scalar a) const { return 1.0 / a; }
    Scalar log_(Scalar a) const { return std::log(a); }
    Scalar exp_(Scalar a) const { return std::exp(a); }
    Scalar clip(Scalar a, double lo, double hi) const {
        return std::min(hi, std::max(lo, a));
    }

    Vec pack(std::span<const Scalar> parts) const {
        DenseVector out(parts.size());
        for (std::size_t i = 0; i < parts.size(); ++i) out[i] = parts[i];
        return out;
    }

    Vec affine(const Vec& w_flat, const Vec& b, const Vec& x,
               std::size_t rows, std::size_t cols) const {
        return affine_apply(w_flat, b, x, rows, cols);
    }

    double scalar_value(Scalar s) const { return s; }

    void guard_nan(Scalar s, const char* context) const {
        if (std::isnan(s)) throw DivergedError(std::string(context) + ": NaN");
    }
};

class TapeEngine {
public:
    using Scalar = Tape::NodeId;
    using Vec = Tape::NodeId;

    explicit TapeEngine(Tape& tape) : tape_(tape) {}

    Scalar constant(double c) { return tape_.constant(c); }
    Vec constant_vec(DenseVector v) { return tape_.constant(std::move(v)); }

    Scalar add(Scalar a, Scalar b) { return tape_.add(a, b); }
    Scalar sub(Scalar a, Scalar b) { return tape_.sub(a, b); }
    Scalar scale(Scalar s, Scalar v) { return tape_.scale(s, v); }
    Scalar neg(Scalar a) { return tape_.scale(tape_.constant(-1.0), a); }
    Scalar dot(Vec a, Vec b) { return tape_.dot(a, b); }
    Scalar recip(Scalar a) { return tape_.recip(a); }
    Scalar log_(Scalar a) { return tape_.log_(a); }
    Scalar exp_(Scalar a) { return tape_.exp_(a); }
    Scalar clip(Scalar a, double lo, double hi) { return tape_.clip(a, lo, hi); }

    Vec pack(std::span<const Scalar> parts) { return tape_.pack(parts); }

    Vec affine(Vec w_flat, Vec b, Vec x, std::size_t rows, std::size_t cols) {
        return tape_.affine(w_flat, b, x, rows, cols);
    }

    double scalar_value(Scalar s) const { return tape_.scalar(s); }

    void guard_nan(Scalar s, const char* context) const {
        if (std::isnan(tape_.scalar(s)))
            throw DivergedError(std::string(context) + ": NaN");
    }

    Tape& tape() { return tape_; }

private:
    Tape& tape_;
};

} // namespace lbfgspi
