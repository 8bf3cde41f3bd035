#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lbfgspi/fdcheck.hpp"
#include "lbfgspi/trainer.hpp"

#include "helpers.hpp"

using namespace lbfgspi;

namespace {

std::vector<double> ones(int k) { return std::vector<double>(static_cast<std::size_t>(k), 1.0); }

struct ExplodingTask {
    std::size_t dim;
    mutable int calls = 0;
    std::size_t dimension() const { return dim; }
    Eval eval(const DenseVector& x) const {
        if (++calls > 2) return {std::numeric_limits<double>::infinity(), DenseVector(dim)};
        return {0.5 * dot(x, x), x};
    }
};

} // namespace

TEST_CASE("unroll gradient matches frozen finite differences") {
    const auto fam = make_synthetic_family(SyntheticKind::Quadratic, 3, 4, 77);
    for (int K : {1, 2, 3}) {
        int checked = 0;
        std::uint64_t draw = 0;
        while (checked < 3) {
            REQUIRE(draw < 500);
            const PolicyParams theta = PolicyParams::random_init(5000 + draw++);
            const auto& inst = fam[static_cast<std::size_t>(checked) % fam.size()];
            RecordingTask<Task> recorder(inst.task);
            const UnrollResult res = unroll(theta, recorder, inst.x0, LbfgsHistory(5), K, ones(K));
            REQUIRE_FALSE(res.diverged);

            // skip draws where a log-step sits near the clip boundary
            bool interior = true;
            for (double tau : res.step_taus)
                interior = interior && tau > theta.tau_m + 0.05 && tau < theta.tau_M - 0.05;
            if (!interior) continue;
            ++checked;

            const FrozenTaskTrace frozen = recorder.freeze();
            frozen.reset();
            const UnrollResult replay = unroll(theta, frozen, inst.x0, LbfgsHistory(5), K, ones(K));
            CHECK(replay.loss == Catch::Approx(res.loss).margin(1e-12));

            const DenseVector fd = unroll_fd_gradient(theta, frozen, inst.x0, LbfgsHistory(5), K, ones(K));
            const auto cmp = compare_gradients(res.grad_theta, fd);
            INFO("K=" << K << " draw=" << draw << " worst=" << cmp.worst_index);
            CHECK(cmp.max_rel_err < 1e-5);
        }
    }
}

TEST_CASE("unroll under a clip-active constant policy has zero gradient") {
    // W = 0 makes tau a constant -10/(1+eps), clipped to tau_m at every step,
    // so the clip subgradient cuts every theta path exactly
    PolicyParams theta = PolicyParams::zeros(6);
    theta.b01[0] = -10.0;
    theta.b02[0] = 1.0;
    const auto fam = make_synthetic_family(SyntheticKind::Quadratic, 4, 1, 10);
    const UnrollResult res = unroll(theta, fam[0].task, fam[0].x0, LbfgsHistory(5), 5, ones(5));
    REQUIRE_FALSE(res.diverged);
    for (double tau : res.step_taus) CHECK(tau == theta.tau_m);
    CHECK(norm2(res.grad_theta) == 0.0);
}

TEST_CASE("unroll with zero weights has zero gradient") {
    const auto fam = make_synthetic_family(SyntheticKind::Quadratic, 4, 1, 11);
    const PolicyParams theta = PolicyParams::random_init(3);
    const UnrollResult res = unroll(theta, fam[0].task, fam[0].x0, LbfgsHistory(5), 4,
                                    std::vector<double>(4, 0.0));
    CHECK(res.loss == 0.0);
    CHECK(norm2(res.grad_theta) == 0.0);
}

TEST_CASE("unroll flags divergence and discards gradients") {
    ExplodingTask task{3};
    const PolicyParams theta = PolicyParams::random_init(4);
    const UnrollResult res = unroll(theta, task, DenseVector{1, 2, 3}, LbfgsHistory(5), 5, ones(5));
    CHECK(res.diverged);
    CHECK(norm2(res.grad_theta) == 0.0);
}

TEST_CASE("unroll validates its inputs") {
    const auto fam = make_synthetic_family(SyntheticKind::Quadratic, 4, 1, 12);
    const PolicyParams theta = PolicyParams::random_init(5);
    CHECK_THROWS_AS(unroll(theta, fam[0].task, fam[0].x0, LbfgsHistory(5), 0, {}),
                    std::invalid_argument);
    CHECK_THROWS_AS(unroll(theta, fam[0].task, fam[0].x0, LbfgsHistory(5), 2, ones(3)),
                    std::invalid_argument);
    CHECK_THROWS_AS(unroll(theta, fam[0].task, DenseVector(3), LbfgsHistory(5), 2, ones(2)),
                    std::invalid_argument);
}

TEST_CASE("training with zero epochs is the identity") {
    const auto fam = make_synthetic_family(SyntheticKind::Quadratic, 4, 3, 13);
    const PolicyParams theta0 = PolicyParams::random_init(6);
    TrainConfig cfg;
    cfg.epochs = 0;
    const TrainResult res = train(theta0, fam, cfg);
    CHECK(res.theta.flatten() == theta0.flatten());
    CHECK(res.log.empty());
}

TEST_CASE("training is deterministic given the seed") {
    const auto fam = make_synthetic_family(SyntheticKind::Quadratic, 4, 3, 14);
    const PolicyParams theta0 = PolicyParams::random_init(7);
    TrainConfig cfg;
    cfg.K = 5;
    cfg.T = 2;
    cfg.epochs = 2;
    cfg.seed = 99;
    const TrainResult a = train(theta0, fam, cfg);
    const TrainResult b = train(theta0, fam, cfg);
    CHECK(a.theta.flatten() == b.theta.flatten());
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss == b.log[i].loss);
}

TEST_CASE("outer steps carry the iterate and update theta exactly once") {
    const auto fam = make_synthetic_family(SyntheticKind::Quadratic, 5, 1, 15);
    const PolicyParams theta0 = PolicyParams::random_init(8);
    TrainConfig cfg;
    cfg.K = 4;
    cfg.T = 2;
    cfg.epochs = 1;
    cfg.seed = 3;
    cfg.resample_eps = 0.0; // never resample within this check
    const TrainResult res = train(theta0, fam, cfg);
    REQUIRE(res.log.size() == 2);

    // replay the same trajectory by hand
    const std::vector<double> w = ones(cfg.K);
    Rng rng(cfg.seed);
    const DenseVector x0 = fam[0].task.sample_x0(rng);
    const UnrollResult r0 = unroll(theta0, fam[0].task, x0, LbfgsHistory(cfg.memory), cfg.K, w);
    CHECK(res.log[0].loss == r0.loss);

    AdadeltaState ada(theta0.flat_size());
    const DenseVector delta = adadelta_update(ada, r0.grad_theta);
    PolicyParams theta1 = theta0;
    theta1.unflatten(theta0.flatten() + delta);
    const UnrollResult r1 = unroll(theta1, fam[0].task, r0.x_final, r0.history, cfg.K, w);
    CHECK(res.log[1].loss == r1.loss);
}

TEST_CASE("short training run reduces the unroll loss on a quadratic family") {
    const auto fam = make_synthetic_family(SyntheticKind::Quadratic, 5, 10, 21);
    const PolicyParams theta0 = PolicyParams::random_init(9);
    TrainConfig cfg;
    cfg.K = 10;
    cfg.T = 4;
    cfg.epochs = 20;
    cfg.seed = 31;
    const TrainResult res = train(theta0, fam, cfg);

    const std::size_t per_epoch = res.log.size() / static_cast<std::size_t>(cfg.epochs);
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < per_epoch; ++i) {
        first += res.log[i].loss;
        last += res.log[res.log.size() - per_epoch + i].loss;
    }
    CHECK(last < first);
}

TEST_CASE("warm start with zero epochs returns the pretrained policy") {
    const auto fam = make_synthetic_family(SyntheticKind::Quadratic, 4, 2, 22);
    const PolicyParams theta = PolicyParams::random_init(10);
    TrainConfig cfg;
    cfg.epochs = 0;
    const TrainResult res = warm_start_train(theta, fam, cfg);
    CHECK(res.theta.flatten() == theta.flatten());
}

TEST_CASE("one warm-start epoch moves theta by a finite amount") {
    const auto fam = make_synthetic_family(SyntheticKind::Quadratic, 4, 2, 23);
    const PolicyParams theta = PolicyParams::random_init(11);
    TrainConfig cfg;
    cfg.K = 5;
    cfg.T = 2;
    cfg.epochs = 1;
    const TrainResult res = warm_start_train(theta, fam, cfg);
    const DenseVector diff = res.theta.flatten() - theta.flatten();
    CHECK(norm2(diff) > 0.0);
    CHECK(diff.all_finite());
    for (const auto& e : res.log) CHECK_FALSE(e.diverged);
}

TEST_CASE("train log serializes to JSON lines") {
    const auto fam = make_synthetic_family(SyntheticKind::Quadratic, 4, 1, 24);
    const PolicyParams theta = PolicyParams::random_init(12);
    TrainConfig cfg;
    cfg.K = 3;
    cfg.T = 2;
    cfg.epochs = 1;
    const TrainResult res = train(theta, fam, cfg);
    const auto path = std::filesystem::temp_directory_path() / "lbfgspi_train_log.jsonl";
    write_train_log(path.string(), res.log);

    std::ifstream in(path);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.contains("epoch"));
        CHECK(j.contains("task_id"));
        CHECK(j.contains("outer_step"));
        CHECK(j.contains("loss"));
        CHECK(j.contains("grad_norm"));
        CHECK(j.contains("diverged"));
        ++rows;
    }
    CHECK(rows == res.log.size());
}
