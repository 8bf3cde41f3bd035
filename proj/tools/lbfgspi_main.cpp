#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lbfgspi/lbfgspi.hpp"

namespace {

using namespace lbfgspi;

struct GlobalArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
};

HarnessConfig load_config(const GlobalArgs& args) {
    if (args.config_path.empty())
        throw std::invalid_argument("a --config file is required for this subcommand");
    HarnessConfig cfg = load_config_file(args.config_path);
    if (args.seed_set) {
        cfg.task_set.seed = args.seed;
        cfg.train.seed = args.seed;
    }
    if (args.threads > 0) cfg.threads = args.threads;
    return cfg;
}

int cmd_train(const GlobalArgs& args) {
    const HarnessConfig cfg = load_config(args);
    const auto tasks = build_task_set(cfg.task_set);
    const PolicyParams theta0 = PolicyParams::random_init(cfg.init_seed, cfg.n_h);
    std::printf("training on %zu tasks: K=%d T=%d epochs=%d\n", tasks.size(), cfg.train.K,
                cfg.train.T, cfg.train.epochs);
    const TrainResult res = train(theta0, tasks, cfg.train);

    std::filesystem::create_directories(args.out_dir);
    const std::string theta_path = args.out_dir + "/" + cfg.theta_out;
    save_params_file(res.theta, theta_path);
    write_train_log(args.out_dir + "/train_log.jsonl", res.log);

    double last_loss = 0.0;
    std::size_t divergences = 0;
    for (const auto& e : res.log) {
        last_loss = e.loss;
        divergences += e.diverged ? 1 : 0;
    }
    std::printf("wrote %s and train_log.jsonl (%zu outer steps, %zu divergences, last loss %g)\n",
                theta_path.c_str(), res.log.size(), divergences, last_loss);
    return 0;
}

int cmd_run(const GlobalArgs& args) {
    const HarnessConfig cfg = load_config(args);
    if (cfg.optimizers.empty())
        throw std::invalid_argument("config lists no optimizers to run");
    const auto tasks = build_task_set(cfg.task_set);
    SuiteOptions opts;
    opts.warmup_runs = cfg.warmup_runs;
    opts.threads = cfg.threads;
    std::printf("running %zu optimizers on %zu instances (k_max=%d, grad_eps=%g)\n",
                cfg.optimizers.size(), tasks.size(), cfg.stop.k_max, cfg.stop.grad_eps);
    const auto records = run_suite(tasks, cfg.optimizers, cfg.stop, opts);

    std::filesystem::create_directories(args.out_dir);
    export_report(records, args.out_dir, cfg.report);
    std::printf("wrote %s/traces.csv and summary.json (%zu runs)\n", args.out_dir.c_str(),
                records.size());
    return 0;
}

int cmd_compare(const GlobalArgs& args, const std::string& traces_path) {
    ReportOptions report;
    if (!args.config_path.empty()) report = load_config(args).report;
    const auto records = read_traces_csv(traces_path);

    const auto table = win_tie_table(records, report.eps_grid, report.tf_mode);
    std::printf("%-16s %10s %8s %8s %8s\n", "competitor", "eps", "win%", "tie%", "pairs");
    for (const auto& row : table)
        std::printf("%-16s %10.1e %8.1f %8.1f %8d\n", row.competitor.c_str(), row.eps,
                    row.win_pct, row.tie_pct, row.n_pairs);

    std::filesystem::create_directories(args.out_dir);
    const auto summary = make_summary(records, report);
    {
        std::ofstream out(args.out_dir + "/win_tie.csv");
        out << "competitor,eps,win_pct,tie_pct,n_pairs\n";
        for (const auto& row : table)
            out << row.competitor << ',' << row.eps << ',' << row.win_pct << ','
                << row.tie_pct << ',' << row.n_pairs << '\n';
    }
    {
        // box-plot ready log-ratio indices, one row per (task, competitor)
        std::ofstream out(args.out_dir + "/ia_indices.csv");
        out << "task_id,competitor,I_min,I_final\n";
        for (const auto& e : summary["index_Ia"]) {
            out << e["task_id"].get<std::string>() << ',' << e["competitor"].get<std::string>()
                << ',';
            if (e["I_min"].is_null()) out << "undefined";
            else out << e["I_min"].get<double>();
            out << ',';
            if (e["I_final"].is_null()) out << "undefined";
            else out << e["I_final"].get<double>();
            out << '\n';
        }
    }
    std::printf("wrote %s/win_tie.csv and ia_indices.csv\n", args.out_dir.c_str());
    return 0;
}

bool report_check(const char* name, double err, double tol) {
    const bool ok = err < tol;
    std::printf("[%s] %-44s max err %.3e (tol %.0e)\n", ok ? "PASS" : "FAIL", name, err, tol);
    return ok;
}

int cmd_gradcheck(const GlobalArgs& args) {
    Rng rng(args.seed_set ? args.seed : 1234);
    bool all_ok = true;

    {
        // tape adjoints against central differences
        double worst = 0.0;
        for (int rep = 0; rep < 5; ++rep) {
            const DenseVector x = randn(rng, 10, 1.0);
            const DenseVector y = randn(rng, 10, 1.0);
            Tape tape;
            const auto xid = tape.constant(x);
            const auto yid = tape.constant(y);
            const auto q = tape.sub(xid, tape.scale(tape.dot(xid, yid), yid));
            const auto root = tape.add(tape.exp_(tape.scale(tape.constant(0.05), tape.norm(q))),
                                       tape.dot(q, xid));
            const auto adj = tape.backward(root);
            for (auto [leaf, ref] : {std::pair{xid, &x}, {yid, &y}}) {
                const DenseVector fd = central_differences(
                    [&](const DenseVector& p) {
                        Tape t2;
                        const auto a = t2.constant(leaf == xid ? p : x);
                        const auto b = t2.constant(leaf == yid ? p : y);
                        const auto q2 = t2.sub(a, t2.scale(t2.dot(a, b), b));
                        return t2.scalar(
                            t2.add(t2.exp_(t2.scale(t2.constant(0.05), t2.norm(q2))),
                                   t2.dot(q2, a)));
                    },
                    *ref);
                worst = std::max(worst, compare_gradients(adj[leaf], fd).max_rel_err);
            }
        }
        all_ok &= report_check("tape adjoints vs finite differences", worst, 1e-5);
    }

    {
        // analytic task gradients
        double worst = 0.0;
        for (auto kind : {SyntheticKind::Quadratic, SyntheticKind::Logistic}) {
            const auto fam = make_synthetic_family(kind, 8, 2, rng.next_u64());
            for (const auto& inst : fam) {
                const DenseVector x = randn(rng, 8, 1.0);
                const Eval e = inst.task.eval(x);
                const DenseVector fd = central_differences(
                    [&](const DenseVector& p) { return inst.task.eval(p).f; }, x);
                worst = std::max(worst, compare_gradients(e.g, fd).max_rel_err);
            }
        }
        all_ok &= report_check("task gradients vs finite differences", worst, 1e-5);
    }

    {
        // policy step gradient w.r.t. theta at interior points
        double worst = 0.0;
        int checked = 0;
        while (checked < 5) {
            const PolicyParams theta = PolicyParams::random_init(rng.next_u64(), 3);
            const DenseVector d = randn(rng, 6, 1.0), g = randn(rng, 6, 1.0);
            const DenseVector s = randn(rng, 6, 1.0), y = randn(rng, 6, 1.0);
            const StepDecision base = policy_step(theta, d, g, s, y);
            if (base.tau <= theta.tau_m + 0.05 || base.tau >= theta.tau_M - 0.05) continue;
            ++checked;
            Tape tape;
            TapeEngine eng(tape);
            const Tape::NodeId ids[4] = {tape.constant(theta.w01), tape.constant(theta.b01),
                                         tape.constant(theta.w02), tape.constant(theta.b02)};
            const detail::ThetaRef<TapeEngine> th{ids[0], ids[1], ids[2], ids[3],
                                                  theta.n_h, theta.tau_m, theta.tau_M};
            const auto out = detail::policy_eval(eng, th, tape.constant(d), tape.constant(g),
                                                 tape.constant(s), tape.constant(y));
            const auto adj = tape.backward(out.t);
            DenseVector analytic(theta.flat_size());
            std::size_t off = 0;
            for (Tape::NodeId id : ids)
                for (double v : adj[static_cast<std::size_t>(id)]) analytic[off++] = v;
            const DenseVector fd = central_differences(
                [&](const DenseVector& flat) {
                    PolicyParams p = theta;
                    p.unflatten(flat);
                    return policy_step(p, d, g, s, y).t;
                },
                theta.flatten());
            worst = std::max(worst, compare_gradients(analytic, fd).max_rel_err);
        }
        all_ok &= report_check("policy gradient w.r.t. theta", worst, 1e-5);
    }

    {
        // TBPTT unroll gradient against the frozen surrogate
        const auto fam = make_synthetic_family(SyntheticKind::Quadratic, 3, 3, rng.next_u64());
        const std::vector<double> w(3, 1.0);
        double worst = 0.0;
        int checked = 0;
        while (checked < 3) {
            const PolicyParams theta = PolicyParams::random_init(rng.next_u64());
            const auto& inst = fam[static_cast<std::size_t>(checked) % fam.size()];
            RecordingTask<Task> recorder(inst.task);
            const UnrollResult res =
                unroll(theta, recorder, inst.x0, LbfgsHistory(5), 3, w);
            if (res.diverged) continue;
            bool interior = true;
            for (double tau : res.step_taus)
                interior = interior && tau > theta.tau_m + 0.05 && tau < theta.tau_M - 0.05;
            if (!interior) continue;
            ++checked;
            const FrozenTaskTrace frozen = recorder.freeze();
            const DenseVector fd =
                unroll_fd_gradient(theta, frozen, inst.x0, LbfgsHistory(5), 3, w);
            worst = std::max(worst, compare_gradients(res.grad_theta, fd).max_rel_err);
        }
        all_ok &= report_check("TBPTT unroll gradient (frozen contract)", worst, 1e-5);
    }

    if (!all_ok) {
        std::printf("gradcheck: FAILURES above\n");
        return 2;
    }
    std::printf("gradcheck: all suites passed\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"L-BFGS with a learned step-size policy: train, run, compare"};
    app.require_subcommand(1);

    GlobalArgs args;
    app.add_option("--config", args.config_path, "JSON configuration file");
    app.add_option("--out", args.out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", args.seed, "override the configured seed");
    app.add_option("--threads", args.threads, "parallel runs for `run`");

    auto* train_cmd = app.add_subcommand("train", "train a step-size policy on a task set");
    auto* run_cmd = app.add_subcommand("run", "run configured optimizers and export traces");
    auto* compare_cmd =
        app.add_subcommand("compare", "win/tie table and log-ratio indices from traces");
    std::string traces_path = "traces.csv";
    compare_cmd->add_option("--traces", traces_path, "traces CSV produced by `run`");
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "run the gradient oracle suites");
    for (auto* cmd : {train_cmd, run_cmd, compare_cmd, gradcheck_cmd}) cmd->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }
    args.seed_set = seed_opt->count() > 0;

    try {
        if (train_cmd->parsed()) return cmd_train(args);
        if (run_cmd->parsed()) return cmd_run(args);
        if (compare_cmd->parsed()) return cmd_compare(args, traces_path);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(args);
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const LoadError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
