#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "lbfgspi/vec.hpp"

namespace lbfgspi {

/// Self-contained, seed-stable random generator: xoshiro256++ seeded via
/// splitmix64, normal draws by Box-Muller. No platform entropy and no
/// std::*_distribution, so equal seeds give bitwise-equal streams on every
/// platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in (0, 1]; strictly positive so ln() is safe.
    double next_unit() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Uniform in [0, n) without platform-dependent rejection loops.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal draw (Box-Muller; the spare of each pair is cached).
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_unit();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Derive an independent, reproducible child stream.
    Rng fork() { return Rng(next_u64()); }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// n i.i.d. draws from N(0, scale^2).
inline DenseVector randn(Rng& rng, std::size_t n, double scale) {
    if (n < 1) throw std::invalid_argument("randn: n must be >= 1");
    if (!(scale > 0.0)) throw std::invalid_argument("randn: scale must be > 0");
    DenseVector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = scale * rng.next_normal();
    return v;
}

} // namespace lbfgspi
