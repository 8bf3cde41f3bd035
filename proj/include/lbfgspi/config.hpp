#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lbfgspi/harness.hpp"
#include "lbfgspi/trainer.hpp"

namespace lbfgspi {

/// Task-set construction settings (JSON key "task_set").
struct TaskSetConfig {
    std::string kind = "synthetic_logistic"; // synthetic_quadratic | synthetic_logistic | mnist_mlp
    // synthetic families
    std::size_t n = 50;
    std::size_t count = 20;
    std::uint64_t seed = 1;
    SyntheticOptions synth;
    // dataset-backed MLP families
    std::string images;
    std::string labels;
    std::size_t batch_size = 1000;
    std::size_t n_batches = 60;
    std::size_t inits_per_batch = 1;
    MlpTaskOptions mlp;
};

struct HarnessConfig {
    TaskSetConfig task_set;
    std::vector<OptimizerSpec> optimizers;
    StopCriteria stop;
    ReportOptions report;
    int warmup_runs = 0;
    int threads = 1;
    TrainConfig train;
    std::uint64_t init_seed = 7; // policy initialization for `train`
    int n_h = 6;
    std::string theta_out = "theta.json";
};

namespace detail {

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline TaskSetConfig parse_task_set(const nlohmann::json& j) {
    TaskSetConfig c;
    read_if(j, "kind", c.kind);
    read_if(j, "n", c.n);
    read_if(j, "count", c.count);
    read_if(j, "seed", c.seed);
    read_if(j, "x0_scale", c.synth.x0_scale);
    read_if(j, "logistic_samples", c.synth.logistic_samples);
    read_if(j, "logistic_l2", c.synth.logistic_l2);
    read_if(j, "images", c.images);
    read_if(j, "labels", c.labels);
    read_if(j, "batch_size", c.batch_size);
    read_if(j, "n_batches", c.n_batches);
    read_if(j, "inits_per_batch", c.inits_per_batch);
    read_if(j, "hidden_layers", c.mlp.hidden_layers);
    read_if(j, "hidden_units", c.mlp.hidden_units);
    read_if(j, "downsample_side", c.mlp.downsample_side);
    if (j.contains("x0_scale")) c.mlp.x0_scale = j.at("x0_scale").get<double>();
    return c;
}

inline OptimizerSpec parse_optimizer(const nlohmann::json& j) {
    OptimizerSpec s;
    s.kind = optimizer_kind_from_name(j.at("kind").get<std::string>());
    read_if(j, "memory", s.memory);
    switch (s.kind) {
    case OptimizerKind::Adam:
        s.lr = 0.03;
        break;
    case OptimizerKind::Rmsprop:
        s.lr = 0.01;
        break;
    default:
        break;
    }
    read_if(j, "lr", s.lr);
    read_if(j, "c1", s.btls.c1);
    read_if(j, "c2", s.btls.c2);
    read_if(j, "t_init", s.btls.t_init);
    read_if(j, "max_backtracks", s.btls.max_backtracks);
    if (j.contains("theta")) s.theta = load_params_file(j.at("theta").get<std::string>());
    return s;
}

} // namespace detail

inline HarnessConfig parse_config(const nlohmann::json& j) {
    HarnessConfig c;
    if (j.contains("task_set")) c.task_set = detail::parse_task_set(j.at("task_set"));
    if (j.contains("optimizers"))
        for (const auto& o : j.at("optimizers"))
            c.optimizers.push_back(detail::parse_optimizer(o));
    if (j.contains("stop")) {
        detail::read_if(j.at("stop"), "k_max", c.stop.k_max);
        detail::read_if(j.at("stop"), "grad_eps", c.stop.grad_eps);
    }
    if (j.contains("report")) {
        const auto& r = j.at("report");
        detail::read_if(r, "eps_grid", c.report.eps_grid);
        std::string mode = "wall";
        detail::read_if(r, "tf_mode", mode);
        if (mode == "wall")
            c.report.tf_mode = TfMode::WallClock;
        else if (mode == "iterations")
            c.report.tf_mode = TfMode::Iterations;
        else
            throw LoadError("config: tf_mode must be 'wall' or 'iterations'");
    }
    detail::read_if(j, "warmup_runs", c.warmup_runs);
    detail::read_if(j, "threads", c.threads);
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::read_if(t, "K", c.train.K);
        detail::read_if(t, "T", c.train.T);
        detail::read_if(t, "epochs", c.train.epochs);
        detail::read_if(t, "w", c.train.w);
        detail::read_if(t, "resample_eps", c.train.resample_eps);
        detail::read_if(t, "seed", c.train.seed);
        detail::read_if(t, "memory", c.train.memory);
        detail::read_if(t, "learn_bounds", c.train.learn_bounds);
        detail::read_if(t, "init_seed", c.init_seed);
        detail::read_if(t, "n_h", c.n_h);
        detail::read_if(t, "theta_out", c.theta_out);
    }
    return c;
}

inline HarnessConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("config: malformed JSON: ") + e.what());
    }
    try {
        return parse_config(j);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("config: invalid document: ") + e.what());
    }
}

inline std::vector<TaskInstance> build_task_set(const TaskSetConfig& c) {
    if (c.kind == "synthetic_quadratic")
        return make_synthetic_family(SyntheticKind::Quadratic, c.n, c.count, c.seed, c.synth);
    if (c.kind == "synthetic_logistic")
        return make_synthetic_family(SyntheticKind::Logistic, c.n, c.count, c.seed, c.synth);
    if (c.kind == "mnist_mlp") {
        if (c.images.empty() || c.labels.empty())
            throw LoadError("config: mnist_mlp requires 'images' and 'labels' paths");
        Dataset data = load_dataset(c.images, c.labels);
        return make_task_set(data, c.batch_size, c.n_batches, c.inits_per_batch, c.seed, c.mlp);
    }
    throw LoadError("config: unknown task_set kind: " + c.kind);
}

} // namespace lbfgspi
