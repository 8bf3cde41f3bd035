#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace lbfgspi {

/// Thrown when a run produces NaN/Inf state. Runs that hit this are
/// reported as diverged rather than crashing the whole experiment.
class DivergedError : public std::runtime_error {
public:
    explicit DivergedError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown on malformed external input (policy files, IDX files, configs).
class LoadError : public std::runtime_error {
public:
    explicit LoadError(const std::string& what) : std::runtime_error(what) {}
};

inline bool is_finite(double x) { return std::isfinite(x); }

} // namespace lbfgspi
