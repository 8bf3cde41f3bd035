#pragma once

#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lbfgspi/engine.hpp"
#include "lbfgspi/lbfgs.hpp"
#include "lbfgspi/policy.hpp"
#include "lbfgspi/steppers.hpp"
#include "lbfgspi/tasks.hpp"

namespace lbfgspi {

struct UnrollResult {
    double loss = 0.0;                // sum_k w_k f(x_k), k = 1..K
    DenseVector x_final;
    DenseVector grad_theta;           // layout [W01, b01, W02, b02]
    bool diverged = false;
    double final_grad_norm = 0.0;     // ||g(x_K)||
    LbfgsHistory history{5};          // carried history after the window
    std::vector<double> step_taus;    // log-step emitted at each inner step
    double grad_tau_m = 0.0;          // bound subgradients (used only when
    double grad_tau_M = 0.0;          //   bound learning is enabled)
};

namespace detail {

struct TapedPair {
    Tape::NodeId s;
    Tape::NodeId y;
    Tape::NodeId rho;
};

} // namespace detail

/// Unroll K policy-driven L-BFGS steps from x0 on one task, recording every
/// stage on a tape, and backpropagate the weighted objective sum to theta.
///
/// Gradient contract: every gradient g_k and difference y_k enters the tape
/// as a constant (the objective is never differentiated through); the s_i of
/// pairs created inside the window are tape nodes, carried pairs from
/// history0 are constants (the truncation). Each objective value joins the
/// loss through a node whose backward rule applies the constant g_{k+1}.
///
/// Non-finite state sets the diverged flag; loss and gradients are discarded.
template <class TaskLike>
UnrollResult unroll(const PolicyParams& theta, const TaskLike& task, const DenseVector& x0,
                    const LbfgsHistory& history0, int K, std::span<const double> w) {
    if (K < 1) throw std::invalid_argument("unroll: K must be >= 1");
    if (w.size() != static_cast<std::size_t>(K))
        throw std::invalid_argument("unroll: weight count must equal K");
    if (x0.size() != task.dimension())
        throw std::invalid_argument("unroll: x0 dimension mismatch");
    theta.validate();

    const std::size_t n = x0.size();
    Tape tape;
    TapeEngine eng(tape);

    const Tape::NodeId id_w01 = tape.constant(theta.w01);
    const Tape::NodeId id_b01 = tape.constant(theta.b01);
    const Tape::NodeId id_w02 = tape.constant(theta.w02);
    const Tape::NodeId id_b02 = tape.constant(theta.b02);
    const detail::ThetaRef<TapeEngine> th{id_w01, id_b01, id_w02, id_b02,
                                          theta.n_h, theta.tau_m, theta.tau_M};

    UnrollResult res;
    res.history = history0;

    std::vector<detail::TapedPair> taped;
    for (const auto& p : history0.pairs())
        taped.push_back({tape.constant(p.s), tape.constant(p.y), tape.constant(p.rho)});

    // policy features at k = 0 come from the newest carried pair, if any
    Tape::NodeId s_prev, y_prev;
    if (!history0.empty()) {
        s_prev = tape.constant(history0.pair(history0.size() - 1).s);
        y_prev = tape.constant(history0.pair(history0.size() - 1).y);
    } else {
        s_prev = tape.constant(DenseVector(n));
        y_prev = tape.constant(DenseVector(n));
    }

    DenseVector x_val = x0;
    Tape::NodeId x_node = tape.constant(x0);
    Tape::NodeId loss_node = 0;
    bool have_loss = false;
    std::vector<Tape::NodeId> tau_nodes;
    tau_nodes.reserve(static_cast<std::size_t>(K));

    Eval cur;
    try {
        cur = task.eval(x_val);
        ensure_finite(cur.f, "unroll: f");
        ensure_finite(cur.g, "unroll: g");
        Tape::NodeId g_node = tape.constant(cur.g);

        for (int k = 0; k < K; ++k) {
            Tape::NodeId gamma =
                taped.empty()
                    ? tape.constant(1.0)
                    : eng.scale(eng.dot(taped.back().s, taped.back().y),
                                eng.recip(eng.dot(taped.back().y, taped.back().y)));
            Tape::NodeId d_node = two_loop_impl(eng, taped, g_node, gamma);
            auto pol = detail::policy_eval(eng, th, d_node, g_node, s_prev, y_prev);
            tau_nodes.push_back(pol.tau);

            Tape::NodeId x_next = tape.add(x_node, tape.scale(pol.t, d_node));
            // copy: recording further nodes may reallocate tape storage
            DenseVector x_next_val = tape.value(x_next);
            ensure_finite(x_next_val, "unroll: iterate");
            Eval next = task.eval(x_next_val);
            ensure_finite(next.f, "unroll: f");
            ensure_finite(next.g, "unroll: g");

            Tape::NodeId term = eng.scale(eng.constant(w[static_cast<std::size_t>(k)]),
                                          tape.objective(x_next, next.f, next.g));
            loss_node = have_loss ? eng.add(loss_node, term) : term;
            have_loss = true;

            Tape::NodeId s_node = tape.sub(x_next, x_node);
            DenseVector s_val = tape.value(s_node);
            DenseVector y_val = next.g - cur.g;
            Tape::NodeId y_node = tape.constant(y_val);
            if (dot(s_val, y_val) > 0.0) {
                if (static_cast<int>(taped.size()) == res.history.memory())
                    taped.erase(taped.begin());
                taped.push_back({s_node, y_node, eng.recip(eng.dot(s_node, y_node))});
                res.history.push_pair(s_val, y_val);
            }

            s_prev = s_node;
            y_prev = y_node;
            x_node = x_next;
            x_val = std::move(x_next_val);
            g_node = tape.constant(next.g);
            cur = next;
        }
    } catch (const DivergedError&) {
        res.diverged = true;
        res.x_final = x_val;
        res.grad_theta = DenseVector(theta.flat_size());
        return res;
    }

    res.x_final = x_val;
    res.final_grad_norm = norm2(cur.g);
    res.loss = tape.scalar(loss_node);
    res.step_taus.reserve(tau_nodes.size());
    for (Tape::NodeId tau : tau_nodes) res.step_taus.push_back(tape.scalar(tau));

    const auto adj = tape.backward(loss_node);
    res.grad_theta = DenseVector(theta.flat_size());
    std::size_t off = 0;
    for (Tape::NodeId id : {id_w01, id_b01, id_w02, id_b02})
        for (double v : adj[static_cast<std::size_t>(id)]) res.grad_theta[off++] = v;

    // subgradients of the active clip bounds (d tau / d bound = 1 when active)
    for (Tape::NodeId tau : tau_nodes) {
        const double raw = tape.value(tape.node(tau).parents[0])[0];
        const double a = adj[static_cast<std::size_t>(tau)][0];
        if (raw <= theta.tau_m) res.grad_tau_m += a;
        if (raw >= theta.tau_M) res.grad_tau_M += a;
    }
    return res;
}

struct TrainConfig {
    int K = 50;
    int T = 8;
    int epochs = 50;
    std::vector<double> w;        // per-step weights; empty means all ones
    double resample_eps = 1e-10;
    std::uint64_t seed = 0;
    int memory = 5;
    bool learn_bounds = false;    // exposed, off by default

    void validate() const {
        if (K < 1 || T < 1 || epochs < 0)
            throw std::invalid_argument("train: K, T must be >= 1 and epochs >= 0");
        if (!w.empty() && w.size() != static_cast<std::size_t>(K))
            throw std::invalid_argument("train: weight count must equal K");
        for (double wk : w)
            if (wk < 0.0) throw std::invalid_argument("train: weights must be >= 0");
    }
};

struct OuterLogEntry {
    int epoch;
    std::string task_id;
    int outer_step;
    double loss;
    double grad_norm;
    bool diverged;
};

struct TrainResult {
    PolicyParams theta;
    std::vector<OuterLogEntry> log;
};

/// Train theta by TBPTT: visit tasks one at a time (seeded order per epoch),
/// run T outer steps per visit, update theta by ADADELTA after every
/// non-diverged unroll. The trajectory carries x and the L-BFGS history
/// between outer steps and resamples x0 (resetting the history) when the
/// gradient norm drops below resample_eps or an unroll diverges.
inline TrainResult train(const PolicyParams& theta0, std::span<const TaskInstance> tasks,
                         const TrainConfig& cfg) {
    cfg.validate();
    theta0.validate();
    if (tasks.empty()) throw std::invalid_argument("train: task set is empty");

    TrainResult out;
    out.theta = theta0;
    std::vector<double> w = cfg.w.empty() ? std::vector<double>(static_cast<std::size_t>(cfg.K), 1.0)
                                          : cfg.w;

    const std::size_t n_params = theta0.flat_size();
    AdadeltaState ada(n_params + (cfg.learn_bounds ? 2 : 0));
    Rng rng(cfg.seed);

    std::vector<std::size_t> order(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.next_below(i)]);
        for (std::size_t oi = 0; oi < order.size(); ++oi) {
            const Task& task = tasks[order[oi]].task;
            DenseVector x = task.sample_x0(rng);
            LbfgsHistory hist(cfg.memory);
            for (int t = 0; t < cfg.T; ++t) {
                UnrollResult res = unroll(out.theta, task, x, hist, cfg.K, w);
                out.log.push_back({epoch, task.id(), t, res.loss,
                                   res.diverged ? 0.0 : norm2(res.grad_theta), res.diverged});
                if (res.diverged) {
                    x = task.sample_x0(rng);
                    hist = LbfgsHistory(cfg.memory);
                    continue;
                }
                DenseVector grad(n_params + (cfg.learn_bounds ? 2 : 0));
                for (std::size_t j = 0; j < n_params; ++j) grad[j] = res.grad_theta[j];
                if (cfg.learn_bounds) {
                    grad[n_params] = res.grad_tau_m;
                    grad[n_params + 1] = res.grad_tau_M;
                }
                const DenseVector delta = adadelta_update(ada, grad);
                DenseVector flat = out.theta.flatten();
                for (std::size_t j = 0; j < n_params; ++j) flat[j] += delta[j];
                out.theta.unflatten(flat);
                if (cfg.learn_bounds) {
                    const double new_m = out.theta.tau_m + delta[n_params];
                    const double new_M = out.theta.tau_M + delta[n_params + 1];
                    if (new_m < new_M) {
                        out.theta.tau_m = new_m;
                        out.theta.tau_M = new_M;
                    }
                }
                x = res.x_final;
                hist = res.history;
                if (res.final_grad_norm < cfg.resample_eps) {
                    x = task.sample_x0(rng);
                    hist = LbfgsHistory(cfg.memory);
                }
            }
        }
    }
    return out;
}

/// Few-epoch adaptation of a pretrained policy on a new task family.
inline TrainResult warm_start_train(const PolicyParams& theta_pretrained,
                                    std::span<const TaskInstance> tasks,
                                    const TrainConfig& cfg) {
    return train(theta_pretrained, tasks, cfg);
}

inline void write_train_log(const std::string& path, std::span<const OuterLogEntry> log) {
    std::ofstream out(path);
    if (!out) throw LoadError("train log: cannot open " + path);
    for (const auto& e : log) {
        nlohmann::json j;
        j["epoch"] = e.epoch;
        j["task_id"] = e.task_id;
        j["outer_step"] = e.outer_step;
        j["loss"] = e.loss;
        j["grad_norm"] = e.grad_norm;
        j["diverged"] = e.diverged;
        out << j.dump() << '\n';
    }
}

/// Replays a recorded evaluation sequence as first-order models
/// f_k + g_k'(x - x_k): the frozen-gradient surrogate that finite-difference
/// references of the unroll must use. Call order mirrors the recording; not
/// reusable across runs without reset().
class FrozenTaskTrace {
public:
    struct Sample {
        DenseVector x;
        double f;
        DenseVector g;
    };

    FrozenTaskTrace(std::size_t dimension, std::vector<Sample> samples)
        : dim_(dimension), samples_(std::move(samples)) {}

    std::size_t dimension() const { return dim_; }

    Eval eval(const DenseVector& x) const {
        if (next_ >= samples_.size())
            throw std::logic_error("FrozenTaskTrace: more evaluations than recorded");
        const Sample& s = samples_[next_++];
        return {s.f + dot(s.g, x - s.x), s.g};
    }

    void reset() const { next_ = 0; }

private:
    std::size_t dim_;
    std::vector<Sample> samples_;
    mutable std::size_t next_ = 0;
};

/// Record the evaluation sequence of one unroll so a FrozenTaskTrace can
/// replay it.
template <class TaskLike>
class RecordingTask {
public:
    explicit RecordingTask(const TaskLike& inner) : inner_(inner) {}

    std::size_t dimension() const { return inner_.dimension(); }

    Eval eval(const DenseVector& x) const {
        Eval e = inner_.eval(x);
        samples_.push_back({x, e.f, e.g});
        return e;
    }

    FrozenTaskTrace freeze() const { return {inner_.dimension(), samples_}; }

private:
    const TaskLike& inner_;
    mutable std::vector<FrozenTaskTrace::Sample> samples_;
};

/// Central-difference reference for the unroll gradient, taken on the frozen
/// surrogate so the g/y constants stay fixed exactly as the tape holds them.
inline DenseVector unroll_fd_gradient(const PolicyParams& theta, const FrozenTaskTrace& frozen,
                                      const DenseVector& x0, const LbfgsHistory& history0, int K,
                                      std::span<const double> w, double h = 1e-6) {
    DenseVector grad(theta.flat_size());
    DenseVector flat = theta.flatten();
    PolicyParams p = theta;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double xi = flat[i];
        double f[2];
        for (int side = 0; side < 2; ++side) {
            flat[i] = side == 0 ? xi + h : xi - h;
            p.unflatten(flat);
            frozen.reset();
            f[side] = unroll(p, frozen, x0, history0, K, w).loss;
        }
        flat[i] = xi;
        grad[i] = (f[0] - f[1]) / (2.0 * h);
    }
    return grad;
}

} // namespace lbfgspi
