#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lbfgspi/engine.hpp"
#include "lbfgspi/rng.hpp"
#include "lbfgspi/vec.hpp"

namespace lbfgspi {

/// Floor applied to Gram entries before the log (keeps every feature real).
inline constexpr double kFeatureEps = 1e-8;
/// Guard added to ||u2||^2 in the scalar projection so u2 = 0 stays defined.
inline constexpr double kProjectionEps = 1e-12;
/// Feature vector width: the flattened 4x4 Gram matrix of (d, g, s, y).
inline constexpr std::size_t kFeatureCount = 16;

/// Learnable step-size policy parameters. W01/W02 are row-major n_h x 16;
/// the log-step bounds tau_m < tau_M are stored with the parameters but kept
/// frozen during training unless explicitly enabled.
struct PolicyParams {
    int n_h = 6;
    double tau_m = -3.0;
    double tau_M = 0.0;
    DenseVector w01, b01, w02, b02;

    static PolicyParams zeros(int n_h = 6, double tau_m = -3.0, double tau_M = 0.0) {
        PolicyParams p;
        p.n_h = n_h;
        p.tau_m = tau_m;
        p.tau_M = tau_M;
        p.w01 = DenseVector(static_cast<std::size_t>(n_h) * kFeatureCount);
        p.b01 = DenseVector(static_cast<std::size_t>(n_h));
        p.w02 = DenseVector(static_cast<std::size_t>(n_h) * kFeatureCount);
        p.b02 = DenseVector(static_cast<std::size_t>(n_h));
        return p;
    }

    /// Training start: weights i.i.d. N(0, 0.1^2), biases zero except
    /// b02 = e1 so u2 is nondegenerate from the first step.
    static PolicyParams random_init(std::uint64_t seed, int n_h = 6,
                                    double tau_m = -3.0, double tau_M = 0.0) {
        PolicyParams p = zeros(n_h, tau_m, tau_M);
        Rng rng(seed);
        for (auto& w : p.w01) w = 0.1 * rng.next_normal();
        for (auto& w : p.w02) w = 0.1 * rng.next_normal();
        p.b02[0] = 1.0;
        return p;
    }

    std::size_t flat_size() const { return w01.size() + b01.size() + w02.size() + b02.size(); }

    DenseVector flatten() const {
        DenseVector out(flat_size());
        std::size_t off = 0;
        for (const DenseVector* part : {&w01, &b01, &w02, &b02})
            for (double v : *part) out[off++] = v;
        return out;
    }

    void unflatten(const DenseVector& flat) {
        if (flat.size() != flat_size())
            throw std::invalid_argument("PolicyParams::unflatten: size mismatch");
        std::size_t off = 0;
        for (DenseVector* part : {&w01, &b01, &w02, &b02})
            for (double& v : *part) v = flat[off++];
    }

    void validate() const {
        const auto nh = static_cast<std::size_t>(n_h);
        if (n_h < 1) throw LoadError("policy: n_h must be >= 1");
        if (!(tau_m < tau_M)) throw LoadError("policy: requires tau_m < tau_M");
        if (w01.size() != nh * kFeatureCount || w02.size() != nh * kFeatureCount ||
            b01.size() != nh || b02.size() != nh)
            throw LoadError("policy: parameter shapes do not match n_h");
        for (const DenseVector* part : {&w01, &b01, &w02, &b02})
            if (!part->all_finite()) throw LoadError("policy: non-finite parameter");
        if (!std::isfinite(tau_m) || !std::isfinite(tau_M))
            throw LoadError("policy: non-finite step bounds");
    }
};

/// The 16 log-domain Gram features; every entry is at least ln(kFeatureEps).
using FeatureVector = DenseVector;

/// Log-step size and step size emitted by the policy.
struct StepDecision {
    double tau;
    double t;
};

namespace detail {

// Row-major index pairs of the 4x4 Gram matrix of (d, g, s, y); the three
// superdiagonal entries (d'g, g's, s'y) carry reversed signs.
struct GramEntry {
    int i, j;
    bool flip;
};

inline constexpr std::array<GramEntry, kFeatureCount> kGramLayout = {{
    {0, 0, false}, {0, 1, true},  {0, 2, false}, {0, 3, false},
    {1, 0, false}, {1, 1, false}, {1, 2, true},  {1, 3, false},
    {2, 0, false}, {2, 1, false}, {2, 2, false}, {2, 3, true},
    {3, 0, false}, {3, 1, false}, {3, 2, false}, {3, 3, false},
}};

template <class Engine>
struct ThetaRef {
    typename Engine::Vec w01, b01, w02, b02;
    int n_h;
    double tau_m, tau_M;
};

/// u0 = dotln(d, g, s, y): sign-adjusted Gram entries through ln(max(x, eps)),
/// flattened row-major.
template <class Engine>
typename Engine::Vec dotln_impl(Engine& eng, const typename Engine::Vec& d,
                                const typename Engine::Vec& g,
                                const typename Engine::Vec& s,
                                const typename Engine::Vec& y, double eps) {
    const typename Engine::Vec* v[4] = {&d, &g, &s, &y};
    // the ten distinct inner products, mirrored into both triangles
    typename Engine::Scalar dots[4][4];
    for (int i = 0; i < 4; ++i)
        for (int j = i; j < 4; ++j) {
            dots[i][j] = eng.dot(*v[i], *v[j]);
            if (j != i) dots[j][i] = dots[i][j];
        }
    std::array<typename Engine::Scalar, kFeatureCount> feats;
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
        const GramEntry& e = kGramLayout[k];
        auto x = e.flip ? eng.neg(dots[e.i][e.j]) : dots[e.i][e.j];
        feats[k] = eng.log_(eng.clip(x, eps, kNoBound));
    }
    return eng.pack(feats);
}

/// Clipped scalar projection of u1 onto u2: the closed-form solution of
/// min_t ||u2 t - u1||^2 over [tau_m, tau_M].
template <class Engine>
typename Engine::Scalar project_clip_impl(Engine& eng, const typename Engine::Vec& u1,
                                          const typename Engine::Vec& u2,
                                          double tau_m, double tau_M) {
    auto num = eng.dot(u2, u1);
    auto den = eng.add(eng.dot(u2, u2), eng.constant(kProjectionEps));
    auto raw = eng.scale(num, eng.recip(den));
    // clamping would silently swallow a NaN here, so reject it first
    eng.guard_nan(raw, "project_clip");
    return eng.clip(raw, tau_m, tau_M);
}

template <class Engine>
struct PolicyOut {
    typename Engine::Scalar tau;
    typename Engine::Scalar t;
};

template <class Engine>
PolicyOut<Engine> policy_eval(Engine& eng, const ThetaRef<Engine>& th,
                              const typename Engine::Vec& d, const typename Engine::Vec& g,
                              const typename Engine::Vec& s_prev,
                              const typename Engine::Vec& y_prev) {
    const auto nh = static_cast<std::size_t>(th.n_h);
    auto u0 = dotln_impl(eng, d, g, s_prev, y_prev, kFeatureEps);
    auto u1 = eng.affine(th.w01, th.b01, u0, nh, kFeatureCount);
    auto u2 = eng.affine(th.w02, th.b02, u0, nh, kFeatureCount);
    auto tau = project_clip_impl(eng, u1, u2, th.tau_m, th.tau_M);
    auto t = eng.exp_(tau);
    return {tau, t};
}

} // namespace detail

/// The 16 log-domain Gram features of (d, g, s_prev, y_prev).
inline FeatureVector dotln(const DenseVector& d, const DenseVector& g,
                           const DenseVector& s_prev, const DenseVector& y_prev,
                           double eps = kFeatureEps) {
    if (!(eps > 0.0)) throw std::invalid_argument("dotln: eps must be > 0");
    d.check_same_size(g, "dotln");
    d.check_same_size(s_prev, "dotln");
    d.check_same_size(y_prev, "dotln");
    NumericEngine eng;
    return detail::dotln_impl(eng, d, g, s_prev, y_prev, eps);
}

/// tau = clip([tau_m, tau_M]) of (u2'u1) / (u2'u2 + eps).
inline double project_clip(const DenseVector& u1, const DenseVector& u2,
                           double tau_m, double tau_M) {
    if (!(tau_m < tau_M)) throw std::invalid_argument("project_clip: requires tau_m < tau_M");
    NumericEngine eng;
    return detail::project_clip_impl(eng, u1, u2, tau_m, tau_M);
}

/// Full policy pipeline: features, two parallel affine layers, clipped scalar
/// projection, exponentiation. The emitted step always lies in
/// [exp(tau_m), exp(tau_M)].
inline StepDecision policy_step(const PolicyParams& theta, const DenseVector& d,
                                const DenseVector& g, const DenseVector& s_prev,
                                const DenseVector& y_prev) {
    NumericEngine eng;
    detail::ThetaRef<NumericEngine> th{theta.w01, theta.b01, theta.w02, theta.b02,
                                       theta.n_h, theta.tau_m, theta.tau_M};
    auto out = detail::policy_eval(eng, th, d, g, s_prev, y_prev);
    ensure_finite(out.t, "policy_step");
    return {out.tau, out.t};
}

/// Parameters for which the policy emits t = cos(phi) between d and -g,
/// whenever cos(phi) lies in [exp(tau_m), 1]: a single hidden unit computing
/// ln(-d'g) - 0.5 ln(d'd) - 0.5 ln(g'g) against a unit u2.
inline PolicyParams make_cosphi_params(double tau_m = -3.0) {
    PolicyParams p = PolicyParams::zeros(1, tau_m, 0.0);
    p.w01[1] = 1.0;   // feature ln(max(-d'g, eps))
    p.w01[0] = -0.5;  // feature ln(max(d'd, eps))
    p.w01[5] = -0.5;  // feature ln(max(g'g, eps))
    p.b02[0] = 1.0;
    return p;
}

/// Serialize theta as a versioned JSON document; doubles round-trip exactly.
inline std::string save_params(const PolicyParams& theta) {
    theta.validate();
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["n_h"] = theta.n_h;
    doc["tau_m"] = theta.tau_m;
    doc["tau_M"] = theta.tau_M;
    auto matrix_rows = [&](const DenseVector& w) {
        nlohmann::json rows = nlohmann::json::array();
        for (int r = 0; r < theta.n_h; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t c = 0; c < kFeatureCount; ++c)
                row.push_back(w[static_cast<std::size_t>(r) * kFeatureCount + c]);
            rows.push_back(std::move(row));
        }
        return rows;
    };
    doc["W01"] = matrix_rows(theta.w01);
    doc["b01"] = theta.b01.raw();
    doc["W02"] = matrix_rows(theta.w02);
    doc["b02"] = theta.b02.raw();
    return doc.dump(2);
}

inline PolicyParams load_params(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("policy: malformed JSON: ") + e.what());
    }
    try {
        if (doc.at("format_version").get<int>() != 1)
            throw LoadError("policy: unsupported format_version");
        PolicyParams p;
        p.n_h = doc.at("n_h").get<int>();
        if (p.n_h < 1) throw LoadError("policy: n_h must be >= 1");
        p.tau_m = doc.at("tau_m").get<double>();
        p.tau_M = doc.at("tau_M").get<double>();
        auto read_matrix = [&](const nlohmann::json& rows) {
            if (!rows.is_array() || rows.size() != static_cast<std::size_t>(p.n_h))
                throw LoadError("policy: weight row count does not match n_h");
            DenseVector w(static_cast<std::size_t>(p.n_h) * kFeatureCount);
            std::size_t off = 0;
            for (const auto& row : rows) {
                if (!row.is_array() || row.size() != kFeatureCount)
                    throw LoadError("policy: weight row width must be 16");
                for (const auto& v : row) w[off++] = v.get<double>();
            }
            return w;
        };
        auto read_vector = [&](const nlohmann::json& arr) {
            if (!arr.is_array() || arr.size() != static_cast<std::size_t>(p.n_h))
                throw LoadError("policy: bias length does not match n_h");
            DenseVector b(static_cast<std::size_t>(p.n_h));
            std::size_t off = 0;
            for (const auto& v : arr) b[off++] = v.get<double>();
            return b;
        };
        p.w01 = read_matrix(doc.at("W01"));
        p.b01 = read_vector(doc.at("b01"));
        p.w02 = read_matrix(doc.at("W02"));
        p.b02 = read_vector(doc.at("b02"));
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("policy: invalid document: ") + e.what());
    }
}

inline void save_params_file(const PolicyParams& theta, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("policy: cannot open for writing: " + path);
    out << save_params(theta) << '\n';
}

inline PolicyParams load_params_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("policy: cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_params(ss.str());
}

} // namespace lbfgspi
