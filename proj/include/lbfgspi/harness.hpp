#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lbfgspi/lbfgs.hpp"
#include "lbfgspi/policy.hpp"
#include "lbfgspi/steppers.hpp"
#include "lbfgspi/tasks.hpp"

namespace lbfgspi {

enum class OptimizerKind { LbfgsPi, LbfgsBaseline, LbfgsBtls, Adam, Rmsprop };

inline const char* optimizer_name(OptimizerKind kind) {
    switch (kind) {
    case OptimizerKind::LbfgsPi: return "lbfgs_pi";
    case OptimizerKind::LbfgsBaseline: return "lbfgs_baseline";
    case OptimizerKind::LbfgsBtls: return "lbfgs_btls";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::Rmsprop: return "rmsprop";
    }
    return "?";
}

inline OptimizerKind optimizer_kind_from_name(const std::string& name) {
    for (OptimizerKind k : {OptimizerKind::LbfgsPi, OptimizerKind::LbfgsBaseline,
                            OptimizerKind::LbfgsBtls, OptimizerKind::Adam, OptimizerKind::Rmsprop})
        if (name == optimizer_name(k)) return k;
    throw LoadError("unknown optimizer kind: " + name);
}

struct OptimizerSpec {
    OptimizerKind kind = OptimizerKind::LbfgsBaseline;
    int memory = 5;                       // L-BFGS kinds
    PolicyParams theta;                   // lbfgs_pi
    BtlsConfig btls;                      // lbfgs_btls
    double lr = 0.03;                     // adam / rmsprop

    std::string name() const { return optimizer_name(kind); }

    static OptimizerSpec adam(double lr = 0.03) {
        OptimizerSpec s;
        s.kind = OptimizerKind::Adam;
        s.lr = lr;
        return s;
    }
    static OptimizerSpec rmsprop(double lr = 0.01) {
        OptimizerSpec s;
        s.kind = OptimizerKind::Rmsprop;
        s.lr = lr;
        return s;
    }
    static OptimizerSpec lbfgs_baseline(int memory = 5) {
        OptimizerSpec s;
        s.kind = OptimizerKind::LbfgsBaseline;
        s.memory = memory;
        return s;
    }
    static OptimizerSpec lbfgs_btls(BtlsConfig cfg = {}, int memory = 5) {
        OptimizerSpec s;
        s.kind = OptimizerKind::LbfgsBtls;
        s.btls = cfg;
        s.memory = memory;
        return s;
    }
    static OptimizerSpec lbfgs_pi(PolicyParams theta, int memory = 5) {
        OptimizerSpec s;
        s.kind = OptimizerKind::LbfgsPi;
        s.theta = std::move(theta);
        s.memory = memory;
        return s;
    }
};

struct StopCriteria {
    int k_max = 800;
    double grad_eps = 1e-8;

    void validate() const {
        if (k_max < 1) throw std::invalid_argument("stop: k_max must be >= 1");
        if (!(grad_eps > 0.0)) throw std::invalid_argument("stop: grad_eps must be > 0");
    }
};

struct IterationRow {
    int k;
    double f;
    double gnorm;
    double t;        // step chosen at this iterate (0 when no step was taken)
    double seconds;  // cumulative compute time at arrival
    long f_evals;    // cumulative objective evaluations at arrival
};

struct RunRecord {
    std::string task_id;
    std::string optimizer;
    std::vector<IterationRow> iterations;
    double f_star = std::numeric_limits<double>::infinity(); // min_k f(x_k)
    double f_final = std::numeric_limits<double>::infinity();
    bool diverged = false;
    bool warmup = false;
};

namespace detail {

class RunTimer {
public:
    RunTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline void finalize(RunRecord& rec) {
    for (const auto& row : rec.iterations) rec.f_star = std::min(rec.f_star, row.f);
    if (!rec.iterations.empty()) rec.f_final = rec.iterations.back().f;
}

/// Shared loop for all L-BFGS kinds: the direction always comes from the
/// two-loop recursion, only the step-size rule differs.
template <class StepChooser>
RunRecord run_lbfgs_loop(const Task& task, const DenseVector& x0, int memory,
                         const StopCriteria& stop, const std::string& name,
                         StepChooser&& choose_step) {
    RunRecord rec;
    rec.task_id = task.id();
    rec.optimizer = name;

    LbfgsHistory hist(memory);
    DenseVector x = x0;
    DenseVector s_prev(x0.size()), y_prev(x0.size());
    long f_evals = 0;
    RunTimer timer;

    try {
        Eval cur = task.eval(x);
        ++f_evals;
        for (int k = 0;; ++k) {
            rec.iterations.push_back({k, cur.f, norm2(cur.g), 0.0, timer.seconds(), f_evals});
            if (norm2(cur.g) < stop.grad_eps || k >= stop.k_max) break;

            DenseVector d = two_loop(hist, cur.g);
            const double t = choose_step(x, cur, d, s_prev, y_prev, f_evals);
            rec.iterations.back().t = t;

            DenseVector x_next = x;
            axpy(t, d, x_next);
            ensure_finite(x_next, "run: iterate");
            Eval next = task.eval(x_next);
            ++f_evals;

            s_prev = x_next - x;
            y_prev = next.g - cur.g;
            hist.push_pair(s_prev, y_prev);
            x = std::move(x_next);
            cur = std::move(next);
        }
    } catch (const DivergedError&) {
        rec.diverged = true;
    }
    finalize(rec);
    return rec;
}

} // namespace detail

/// Run one optimizer on one task from x0, recording the full per-iteration
/// trace. Stops at k_max iterations or when ||g|| < grad_eps; divergence ends
/// the run early with the record marked.
inline RunRecord run_optimizer(const Task& task, const DenseVector& x0,
                               const OptimizerSpec& spec, const StopCriteria& stop) {
    stop.validate();
    if (x0.size() != task.dimension())
        throw std::invalid_argument("run_optimizer: x0 dimension mismatch");

    switch (spec.kind) {
    case OptimizerKind::LbfgsBaseline:
        return detail::run_lbfgs_loop(task, x0, spec.memory, stop, spec.name(),
                                      [](const DenseVector&, const Eval&, const DenseVector&,
                                         const DenseVector&, const DenseVector&,
                                         long&) { return 1.0; });
    case OptimizerKind::LbfgsBtls:
        return detail::run_lbfgs_loop(
            task, x0, spec.memory, stop, spec.name(),
            [&task, cfg = spec.btls](const DenseVector& x, const Eval& cur,
                                     const DenseVector& d, const DenseVector&,
                                     const DenseVector&, long& f_evals) {
                BtlsResult r = btls([&task](const DenseVector& p) { return task.eval(p).f; },
                                    x, d, cur.g, cfg, cur.f);
                f_evals += r.f_evals;
                return r.t;
            });
    case OptimizerKind::LbfgsPi: {
        spec.theta.validate();
        return detail::run_lbfgs_loop(
            task, x0, spec.memory, stop, spec.name(),
            [&theta = spec.theta](const DenseVector&, const Eval& cur, const DenseVector& d,
                                  const DenseVector& s_prev, const DenseVector& y_prev,
                                  long&) {
                return policy_step(theta, d, cur.g, s_prev, y_prev).t;
            });
    }
    case OptimizerKind::Adam:
    case OptimizerKind::Rmsprop: {
        RunRecord rec;
        rec.task_id = task.id();
        rec.optimizer = spec.name();
        AdamState adam_state(x0.size());
        RmspropState rms_state(x0.size());
        DenseVector x = x0;
        long f_evals = 0;
        detail::RunTimer timer;
        try {
            Eval cur = task.eval(x);
            ++f_evals;
            for (int k = 0;; ++k) {
                rec.iterations.push_back({k, cur.f, norm2(cur.g), 0.0, timer.seconds(), f_evals});
                if (norm2(cur.g) < stop.grad_eps || k >= stop.k_max) break;
                rec.iterations.back().t = spec.lr;
                DenseVector dx = spec.kind == OptimizerKind::Adam
                                     ? adam_update(adam_state, cur.g, spec.lr)
                                     : rmsprop_update(rms_state, cur.g, spec.lr);
                x += dx;
                ensure_finite(x, "run: iterate");
                cur = task.eval(x);
                ++f_evals;
            }
        } catch (const DivergedError&) {
            rec.diverged = true;
        }
        detail::finalize(rec);
        return rec;
    }
    }
    throw std::logic_error("run_optimizer: unhandled kind");
}

enum class TfMode { WallClock, Iterations };

/// First instant (cumulative seconds, or iteration index in the
/// deterministic mode) at which ||g|| drops below eps; infinity if never.
inline double compute_tf(const RunRecord& rec, double eps, TfMode mode = TfMode::WallClock) {
    for (const auto& row : rec.iterations)
        if (row.gnorm < eps)
            return mode == TfMode::WallClock ? row.seconds : static_cast<double>(row.k);
    return std::numeric_limits<double>::infinity();
}

enum class IndexVariant { MinValue, FinalValue };

/// ln(f*^a / f*^pi): positive when the learned policy reached a lower value.
inline double index_Ia(const RunRecord& record_a, const RunRecord& record_pi,
                       IndexVariant variant) {
    const double fa = variant == IndexVariant::MinValue ? record_a.f_star : record_a.f_final;
    const double fp = variant == IndexVariant::MinValue ? record_pi.f_star : record_pi.f_final;
    if (!(fa > 0.0) || !(fp > 0.0))
        throw std::domain_error("index_Ia: undefined for nonpositive objective values");
    return std::log(fa / fp);
}

struct WinTieRow {
    std::string competitor;
    double eps;
    double win_pct;
    double tie_pct;
    int n_pairs;
};

/// Per-competitor win/tie percentages against lbfgs_pi over matched
/// (task, x0) pairs: a win means pi reached the precision strictly first, a
/// tie that both times are equal or both infinite. Warm-up records are
/// excluded (timing aggregate).
inline std::vector<WinTieRow> win_tie_table(std::span<const RunRecord> records,
                                            std::span<const double> eps_grid,
                                            TfMode mode = TfMode::WallClock) {
    std::map<std::string, std::map<std::string, const RunRecord*>> by_task;
    std::vector<std::string> competitors;
    for (const auto& rec : records) {
        if (rec.warmup) continue;
        by_task[rec.task_id][rec.optimizer] = &rec;
        if (rec.optimizer != "lbfgs_pi") {
            bool known = false;
            for (const auto& c : competitors) known = known || c == rec.optimizer;
            if (!known) competitors.push_back(rec.optimizer);
        }
    }
    std::vector<WinTieRow> table;
    for (const auto& comp : competitors) {
        for (double eps : eps_grid) {
            int wins = 0, ties = 0, pairs = 0;
            for (const auto& [task_id, runs] : by_task) {
                auto pi = runs.find("lbfgs_pi");
                auto other = runs.find(comp);
                if (pi == runs.end() || other == runs.end()) continue;
                ++pairs;
                const double tf_pi = compute_tf(*pi->second, eps, mode);
                const double tf_a = compute_tf(*other->second, eps, mode);
                const bool both_inf = std::isinf(tf_pi) && std::isinf(tf_a);
                if (both_inf || tf_pi == tf_a)
                    ++ties;
                else if (tf_pi < tf_a)
                    ++wins;
            }
            const double denom = pairs > 0 ? static_cast<double>(pairs) : 1.0;
            table.push_back({comp, eps, 100.0 * wins / denom, 100.0 * ties / denom, pairs});
        }
    }
    return table;
}

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

inline void write_traces_csv(std::span<const RunRecord> records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("traces: cannot open for writing: " + path);
    out << "task_id,optimizer,k,f,gnorm,t_k,seconds,f_evals\n";
    for (const auto& rec : records)
        for (const auto& row : rec.iterations)
            out << rec.task_id << ',' << rec.optimizer << ',' << row.k << ','
                << detail::fmt_double(row.f) << ',' << detail::fmt_double(row.gnorm) << ','
                << detail::fmt_double(row.t) << ',' << detail::fmt_double(row.seconds) << ','
                << row.f_evals << '\n';
}

/// Rebuild records from a traces CSV (rows of one run are contiguous).
inline std::vector<RunRecord> read_traces_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("traces: cannot open: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "task_id,optimizer,k,f,gnorm,t_k,seconds,f_evals")
        throw LoadError("traces: unexpected CSV header in " + path);
    std::vector<RunRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string task_id, optimizer, field;
        if (!std::getline(ss, task_id, ',') || !std::getline(ss, optimizer, ','))
            throw LoadError("traces: malformed row in " + path);
        IterationRow row{};
        try {
            std::getline(ss, field, ',');
            row.k = std::stoi(field);
            std::getline(ss, field, ',');
            row.f = std::stod(field);
            std::getline(ss, field, ',');
            row.gnorm = std::stod(field);
            std::getline(ss, field, ',');
            row.t = std::stod(field);
            std::getline(ss, field, ',');
            row.seconds = std::stod(field);
            if (!std::getline(ss, field, ',')) throw std::invalid_argument("short row");
            row.f_evals = std::stol(field);
        } catch (const std::exception&) {
            throw LoadError("traces: malformed row in " + path);
        }
        if (records.empty() || records.back().task_id != task_id ||
            records.back().optimizer != optimizer) {
            RunRecord rec;
            rec.task_id = task_id;
            rec.optimizer = optimizer;
            records.push_back(std::move(rec));
        }
        records.back().iterations.push_back(row);
    }
    for (auto& rec : records) detail::finalize(rec);
    return records;
}

struct ReportOptions {
    std::vector<double> eps_grid = {1e-3, 1e-4, 1e-5};
    TfMode tf_mode = TfMode::WallClock;
};

/// Summary JSON: per-run f_star/f_final/t_f plus per-task log-ratio indices
/// against lbfgs_pi and the win/tie table.
inline nlohmann::json make_summary(std::span<const RunRecord> records,
                                   const ReportOptions& opts = {}) {
    nlohmann::json summary;
    summary["runs"] = nlohmann::json::array();
    std::map<std::string, std::map<std::string, const RunRecord*>> by_task;
    for (const auto& rec : records) {
        nlohmann::json r;
        r["task_id"] = rec.task_id;
        r["optimizer"] = rec.optimizer;
        r["f_star"] = rec.f_star;
        r["f_final"] = rec.f_final;
        r["diverged"] = rec.diverged;
        r["warmup"] = rec.warmup;
        r["iterations"] = rec.iterations.size();
        nlohmann::json tf;
        for (double eps : opts.eps_grid) {
            const double v = compute_tf(rec, eps, opts.tf_mode);
            tf[detail::fmt_double(eps)] =
                std::isinf(v) ? nlohmann::json() : nlohmann::json(v);
        }
        r["t_f"] = std::move(tf);
        summary["runs"].push_back(std::move(r));
        by_task[rec.task_id][rec.optimizer] = &rec;
    }

    nlohmann::json indices = nlohmann::json::array();
    for (const auto& [task_id, runs] : by_task) {
        auto pi = runs.find("lbfgs_pi");
        if (pi == runs.end()) continue;
        for (const auto& [name, rec] : runs) {
            if (name == "lbfgs_pi") continue;
            nlohmann::json e;
            e["task_id"] = task_id;
            e["competitor"] = name;
            for (auto [variant, key] : {std::pair{IndexVariant::MinValue, "I_min"},
                                        std::pair{IndexVariant::FinalValue, "I_final"}}) {
                try {
                    e[key] = index_Ia(*rec, *pi->second, variant);
                } catch (const std::domain_error&) {
                    e[key] = nullptr; // undefined metric for this task
                }
            }
            indices.push_back(std::move(e));
        }
    }
    summary["index_Ia"] = std::move(indices);

    nlohmann::json wt = nlohmann::json::array();
    for (const auto& row : win_tie_table(records, opts.eps_grid, opts.tf_mode)) {
        nlohmann::json e;
        e["competitor"] = row.competitor;
        e["eps"] = row.eps;
        e["win_pct"] = row.win_pct;
        e["tie_pct"] = row.tie_pct;
        e["n_pairs"] = row.n_pairs;
        wt.push_back(std::move(e));
    }
    summary["win_tie"] = std::move(wt);
    return summary;
}

/// Write traces.csv and summary.json under dir (plot-ready, no rendering).
inline void export_report(std::span<const RunRecord> records, const std::string& dir,
                          const ReportOptions& opts = {}) {
    write_traces_csv(records, dir + "/traces.csv");
    std::ofstream out(dir + "/summary.json");
    if (!out) throw LoadError("summary: cannot open for writing: " + dir + "/summary.json");
    out << make_summary(records, opts).dump(2) << '\n';
}

struct SuiteOptions {
    int warmup_runs = 0;  // first runs per optimizer, flagged and excluded
                          // from timing aggregates
    int threads = 1;
};

/// Run every optimizer on every (task, x0) instance. Instances are labeled
/// task_id#index so repeated inits stay distinguishable. Runs execute
/// concurrently up to `threads`; results are positionally deterministic.
inline std::vector<RunRecord> run_suite(std::span<const TaskInstance> instances,
                                        std::span<const OptimizerSpec> optimizers,
                                        const StopCriteria& stop, const SuiteOptions& opts = {}) {
    struct Job {
        std::size_t instance;
        std::size_t optimizer;
        std::string label;
        bool warmup;
    };
    std::vector<Job> jobs;
    for (std::size_t oi = 0; oi < optimizers.size(); ++oi)
        for (std::size_t ii = 0; ii < instances.size(); ++ii)
            jobs.push_back({ii, oi,
                            instances[ii].task.id() + "#" + std::to_string(ii),
                            static_cast<int>(ii) < opts.warmup_runs});

    std::vector<RunRecord> records(jobs.size());
    std::atomic<std::size_t> cursor{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t j = cursor.fetch_add(1);
            if (j >= jobs.size()) return;
            const Job& job = jobs[j];
            RunRecord rec = run_optimizer(instances[job.instance].task,
                                          instances[job.instance].x0,
                                          optimizers[job.optimizer], stop);
            rec.task_id = job.label;
            rec.warmup = job.warmup;
            records[j] = std::move(rec);
        }
    };
    const int n_threads = std::max(1, opts.threads);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return records;
}

} // namespace lbfgspi
