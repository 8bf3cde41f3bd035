#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "lbfgspi/dataset.hpp"
#include "lbfgspi/rng.hpp"
#include "lbfgspi/vec.hpp"

namespace lbfgspi {

struct Eval {
    double f;
    DenseVector g;
};

/// f(x) = 0.5 x'Ax + b'x + offset, A symmetric. The offset shifts the
/// minimum value (synthetic families use it to keep f positive for the
/// log-ratio metric) and does not affect the gradient.
struct QuadraticPayload {
    DenseVector a_flat; // n x n row-major
    DenseVector b;
    double offset = 0.0;
};

/// Mean binary cross-entropy of sigmoid(features x) against 0/1 labels,
/// plus 0.5 * l2 * ||x||^2.
struct LogisticPayload {
    DenseVector features; // n_samples x n_features row-major
    std::vector<std::uint8_t> labels;
    std::size_t n_features = 0;
    double l2 = 0.0;
};

/// Fully connected sigmoid MLP with a softmax output and mean cross-entropy
/// over the batch. widths = {inputs, hidden..., classes}; the flattened
/// parameter vector holds, per layer, W (out x in row-major) then the bias.
struct MlpPayload {
    DenseVector inputs; // n_samples x widths[0] row-major, scaled to [0,1]
    std::vector<std::uint8_t> labels;
    std::vector<int> widths;
};

inline std::size_t mlp_param_count(const std::vector<int>& widths) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
        n += (static_cast<std::size_t>(widths[l]) + 1) * static_cast<std::size_t>(widths[l + 1]);
    return n;
}

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// ln(1 + e^z) without overflow
inline double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline Eval eval_quadratic(const QuadraticPayload& q, const DenseVector& x) {
    const std::size_t n = x.size();
    DenseVector ax(n);
    for (std::size_t r = 0; r < n; ++r) {
        double acc = 0.0;
        const double* row = q.a_flat.data() + r * n;
        for (std::size_t c = 0; c < n; ++c) acc += row[c] * x[c];
        ax[r] = acc;
    }
    const double f = 0.5 * dot(x, ax) + dot(q.b, x) + q.offset;
    return {f, ax + q.b};
}

inline Eval eval_logistic(const LogisticPayload& p, const DenseVector& x) {
    const std::size_t n_samples = p.labels.size();
    const std::size_t n = p.n_features;
    double loss = 0.0;
    DenseVector g(n);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const double* row = p.features.data() + i * n;
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += row[j] * x[j];
        const double y = static_cast<double>(p.labels[i]);
        loss += softplus(z) - y * z;
        const double r = sigmoid(z) - y;
        for (std::size_t j = 0; j < n; ++j) g[j] += r * row[j];
    }
    const double inv = 1.0 / static_cast<double>(n_samples);
    loss *= inv;
    g *= inv;
    if (p.l2 > 0.0) {
        loss += 0.5 * p.l2 * dot(x, x);
        axpy(p.l2, x, g);
    }
    return {loss, g};
}

inline Eval eval_mlp(const MlpPayload& p, const DenseVector& x) {
    const std::size_t n_samples = p.labels.size();
    const auto& w = p.widths;
    const std::size_t n_layers = w.size() - 1;

    // per-layer parameter offsets into x
    std::vector<std::size_t> w_off(n_layers), b_off(n_layers);
    std::size_t off = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        w_off[l] = off;
        off += static_cast<std::size_t>(w[l]) * static_cast<std::size_t>(w[l + 1]);
        b_off[l] = off;
        off += static_cast<std::size_t>(w[l + 1]);
    }

    // activations per layer for the whole batch
    std::vector<std::vector<double>> act(n_layers + 1);
    act[0].assign(p.inputs.begin(), p.inputs.end());
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t nin = static_cast<std::size_t>(w[l]);
        const std::size_t nout = static_cast<std::size_t>(w[l + 1]);
        act[l + 1].assign(n_samples * nout, 0.0);
        for (std::size_t i = 0; i < n_samples; ++i) {
            const double* in = act[l].data() + i * nin;
            double* out = act[l + 1].data() + i * nout;
            for (std::size_t r = 0; r < nout; ++r) {
                const double* wr = x.data() + w_off[l] + r * nin;
                double acc = x[b_off[l] + r];
                for (std::size_t c = 0; c < nin; ++c) acc += wr[c] * in[c];
                out[r] = acc;
            }
            if (l + 1 < n_layers)
                for (std::size_t r = 0; r < nout; ++r) out[r] = sigmoid(out[r]);
        }
    }

    // softmax cross-entropy over the logits; delta starts as (softmax - onehot)/N
    const std::size_t n_classes = static_cast<std::size_t>(w.back());
    std::vector<double> delta = act[n_layers];
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        double* z = delta.data() + i * n_classes;
        double zmax = z[0];
        for (std::size_t c = 1; c < n_classes; ++c) zmax = std::max(zmax, z[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < n_classes; ++c) sum += std::exp(z[c] - zmax);
        const double logsum = zmax + std::log(sum);
        loss += (logsum - z[p.labels[i]]) * inv;
        for (std::size_t c = 0; c < n_classes; ++c)
            z[c] = std::exp(z[c] - logsum) * inv;
        z[p.labels[i]] -= inv;
    }

    // layerwise backpropagation
    DenseVector g(x.size());
    for (std::size_t l = n_layers; l-- > 0;) {
        const std::size_t nin = static_cast<std::size_t>(w[l]);
        const std::size_t nout = static_cast<std::size_t>(w[l + 1]);
        std::vector<double> delta_prev;
        if (l > 0) delta_prev.assign(n_samples * nin, 0.0);
        for (std::size_t i = 0; i < n_samples; ++i) {
            const double* in = act[l].data() + i * nin;
            const double* dl = delta.data() + i * nout;
            for (std::size_t r = 0; r < nout; ++r) {
                const double dr = dl[r];
                if (dr == 0.0) continue;
                double* gw = g.data() + w_off[l] + r * nin;
                for (std::size_t c = 0; c < nin; ++c) gw[c] += dr * in[c];
                g[b_off[l] + r] += dr;
            }
            if (l > 0) {
                double* dp = delta_prev.data() + i * nin;
                for (std::size_t c = 0; c < nin; ++c) {
                    double acc = 0.0;
                    for (std::size_t r = 0; r < nout; ++r)
                        acc += x[w_off[l] + r * nin + c] * dl[r];
                    dp[c] = acc * in[c] * (1.0 - in[c]); // sigmoid'
                }
            }
        }
        if (l > 0) delta = std::move(delta_prev);
    }
    return {loss, std::move(g)};
}

} // namespace detail

/// A differentiable objective with deterministic value-and-gradient
/// evaluation plus a seeded initial-point sampler. Cheap to copy (the payload
/// is shared immutably).
class Task {
public:
    enum class Kind { Quadratic, Logistic, Mlp };

    Task(std::string id, QuadraticPayload payload, double x0_scale = 1.0)
        : id_(std::move(id)), kind_(Kind::Quadratic), dim_(payload.b.size()),
          x0_scale_(x0_scale),
          payload_(std::make_shared<const Payload>(std::move(payload))) {}

    Task(std::string id, LogisticPayload payload, double x0_scale = 1.0)
        : id_(std::move(id)), kind_(Kind::Logistic), dim_(payload.n_features),
          x0_scale_(x0_scale),
          payload_(std::make_shared<const Payload>(std::move(payload))) {}

    Task(std::string id, MlpPayload payload, double x0_scale = 0.1)
        : id_(std::move(id)), kind_(Kind::Mlp), dim_(mlp_param_count(payload.widths)),
          x0_scale_(x0_scale),
          payload_(std::make_shared<const Payload>(std::move(payload))) {}

    const std::string& id() const { return id_; }
    Kind kind() const { return kind_; }
    std::size_t dimension() const { return dim_; }
    double x0_scale() const { return x0_scale_; }

    Eval eval(const DenseVector& x) const {
        if (x.size() != dim_)
            throw std::invalid_argument("Task::eval: dimension mismatch for " + id_);
        Eval out = std::visit([&](const auto& p) { return eval_any(p, x); }, *payload_);
        ensure_finite(out.f, "Task::eval f");
        ensure_finite(out.g, "Task::eval g");
        return out;
    }

    DenseVector sample_x0(Rng& rng) const { return randn(rng, dim_, x0_scale_); }

    /// Read access to the concrete payload (nullptr on kind mismatch).
    template <class P>
    const P* payload() const {
        return std::get_if<P>(payload_.get());
    }

private:
    using Payload = std::variant<QuadraticPayload, LogisticPayload, MlpPayload>;

    static Eval eval_any(const QuadraticPayload& p, const DenseVector& x) {
        return detail::eval_quadratic(p, x);
    }
    static Eval eval_any(const LogisticPayload& p, const DenseVector& x) {
        return detail::eval_logistic(p, x);
    }
    static Eval eval_any(const MlpPayload& p, const DenseVector& x) {
        return detail::eval_mlp(p, x);
    }

    std::string id_;
    Kind kind_;
    std::size_t dim_;
    double x0_scale_;
    std::shared_ptr<const Payload> payload_;
};

struct TaskInstance {
    Task task;
    DenseVector x0;
};

/// Knobs for dataset-backed MLP task sets.
struct MlpTaskOptions {
    int hidden_layers = 1;
    int hidden_units = 20;
    std::uint32_t downsample_side = 0; // 0 keeps the native resolution
    double x0_scale = 0.1;
};

/// Shuffle the dataset with the seeded generator, split it into n_batches
/// disjoint batches of batch_size, build one MLP task per batch and sample
/// inits_per_batch initial points for each. Deterministic given the seed.
inline std::vector<TaskInstance> make_task_set(const Dataset& dataset, std::size_t batch_size,
                                               std::size_t n_batches,
                                               std::size_t inits_per_batch, std::uint64_t seed,
                                               const MlpTaskOptions& opts = {}) {
    if (batch_size * n_batches > dataset.count)
        throw std::invalid_argument("make_task_set: dataset has too few samples");
    if (batch_size == 0 || n_batches == 0 || inits_per_batch == 0)
        throw std::invalid_argument("make_task_set: counts must be >= 1");

    const Dataset* src = &dataset;
    Dataset reduced;
    if (opts.downsample_side != 0 &&
        (opts.downsample_side != dataset.rows || opts.downsample_side != dataset.cols)) {
        reduced = downsample(dataset, opts.downsample_side);
        src = &reduced;
    }
    const std::size_t p = src->pixels();

    Rng rng(seed);
    std::vector<std::uint32_t> order(src->count);
    for (std::uint32_t i = 0; i < src->count; ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.next_below(i)]);

    std::vector<int> widths;
    widths.push_back(static_cast<int>(p));
    for (int l = 0; l < opts.hidden_layers; ++l) widths.push_back(opts.hidden_units);
    widths.push_back(10);

    std::vector<TaskInstance> out;
    out.reserve(n_batches * inits_per_batch);
    for (std::size_t b = 0; b < n_batches; ++b) {
        MlpPayload payload;
        payload.widths = widths;
        payload.inputs = DenseVector(batch_size * p);
        payload.labels.resize(batch_size);
        for (std::size_t i = 0; i < batch_size; ++i) {
            const std::uint32_t idx = order[b * batch_size + i];
            const std::uint8_t* img = src->images.data() + std::size_t(idx) * p;
            for (std::size_t j = 0; j < p; ++j)
                payload.inputs[i * p + j] = static_cast<double>(img[j]) / 255.0;
            payload.labels[i] = src->labels[idx];
        }
        Task task("mlp-b" + std::to_string(b), std::move(payload), opts.x0_scale);
        for (std::size_t k = 0; k < inits_per_batch; ++k) {
            DenseVector x0 = task.sample_x0(rng);
            out.push_back({task, std::move(x0)});
        }
    }
    return out;
}

enum class SyntheticKind { Quadratic, Logistic };

struct SyntheticOptions {
    double x0_scale = 1.0;
    std::size_t logistic_samples = 0; // 0 picks 4n
    double logistic_l2 = 1e-3;
};

/// Desk-scale random convex families: SPD quadratics A = M'M + 1e-3 I with
/// the minimum value shifted to 1, or noisy near-separable logistic
/// instances. Deterministic given the seed.
inline std::vector<TaskInstance> make_synthetic_family(SyntheticKind kind, std::size_t n,
                                                       std::size_t count, std::uint64_t seed,
                                                       const SyntheticOptions& opts = {}) {
    if (n < 1) throw std::invalid_argument("make_synthetic_family: n must be >= 1");
    Rng rng(seed);
    std::vector<TaskInstance> out;
    out.reserve(count);
    for (std::size_t t = 0; t < count; ++t) {
        if (kind == SyntheticKind::Quadratic) {
            const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
            DenseVector m(n * n);
            for (auto& v : m) v = inv_sqrt_n * rng.next_normal();
            QuadraticPayload q;
            q.a_flat = DenseVector(n * n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j <= i; ++j) {
                    double acc = (i == j) ? 1e-3 : 0.0;
                    for (std::size_t k = 0; k < n; ++k) acc += m[k * n + i] * m[k * n + j];
                    q.a_flat[i * n + j] = acc;
                    q.a_flat[j * n + i] = acc;
                }
            q.b = randn(rng, n, 1.0);
            // shift so min f = 1 and the log-ratio metric stays defined
            const DenseVector xstar = cholesky_solve(q.a_flat, q.b);
            q.offset = 0.5 * dot(q.b, xstar) + 1.0;
            Task task("quad-" + std::to_string(t), std::move(q), opts.x0_scale);
            DenseVector x0 = task.sample_x0(rng);
            out.push_back({std::move(task), std::move(x0)});
        } else {
            const std::size_t n_samples = opts.logistic_samples ? opts.logistic_samples : 4 * n;
            LogisticPayload p;
            p.n_features = n;
            p.l2 = opts.logistic_l2;
            p.features = randn(rng, n_samples * n, 1.0);
            p.labels.resize(n_samples);
            DenseVector w_true = randn(rng, n, 1.0);
            for (std::size_t i = 0; i < n_samples; ++i) {
                double z = 0.0;
                for (std::size_t j = 0; j < n; ++j) z += p.features[i * n + j] * w_true[j];
                z += 0.5 * rng.next_normal(); // label noise keeps the optimum finite
                p.labels[i] = z > 0.0 ? 1 : 0;
            }
            Task task("logi-" + std::to_string(t), std::move(p), opts.x0_scale);
            DenseVector x0 = task.sample_x0(rng);
            out.push_back({std::move(task), std::move(x0)});
        }
    }
    return out;
}

} // namespace lbfgspi
