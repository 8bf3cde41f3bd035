#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lbfgspi/rng.hpp"
#include "lbfgspi/steppers.hpp"
#include "lbfgspi/tasks.hpp"

using namespace lbfgspi;

namespace {

double half_square(const DenseVector& x) { return 0.5 * x[0] * x[0]; }

} // namespace

TEST_CASE("btls accepts the initial step when sufficient decrease holds") {
    BtlsConfig cfg;
    cfg.c1 = 0.25;
    // f(x)=x^2/2 at x=1, d=-1: f(0)=0 <= 0.5 - 0.25
    const BtlsResult r = btls(half_square, DenseVector{1}, DenseVector{-1}, DenseVector{1}, cfg);
    CHECK(r.t == 1.0);
    CHECK(r.f_evals == 1);
    CHECK_FALSE(r.exhausted);
}

TEST_CASE("btls contracts past failing candidates") {
    BtlsConfig cfg;
    cfg.c1 = 0.25;
    cfg.c2 = 0.5;
    // d = -4: t=1 and t=0.5 overshoot, t=0.25 lands on the minimizer
    const BtlsResult r = btls(half_square, DenseVector{1}, DenseVector{-4}, DenseVector{1}, cfg);
    CHECK(r.t == 0.25);
    CHECK(r.f_evals == 3);
    CHECK_FALSE(r.exhausted);
}

TEST_CASE("btls with a zero budget returns t_init untested") {
    BtlsConfig cfg;
    cfg.max_backtracks = 0;
    const BtlsResult r = btls(half_square, DenseVector{1}, DenseVector{1}, DenseVector{1}, cfg);
    CHECK(r.t == cfg.t_init);
    CHECK(r.f_evals == 0);
    CHECK(r.exhausted);
}

TEST_CASE("btls accepted steps satisfy sufficient decrease on random quadratics") {
    Rng rng(404);
    const BtlsConfig cfg; // c1=0.25, c2=0.5, t_init=1
    for (int rep = 0; rep < 100; ++rep) {
        const auto fam = make_synthetic_family(SyntheticKind::Quadratic, 6, 1, 9000 + rep);
        const Task& task = fam[0].task;
        const DenseVector x = fam[0].x0;
        const Eval e = task.eval(x);
        const DenseVector d = -1.0 * e.g;
        auto objective = [&](const DenseVector& p) { return task.eval(p).f; };
        const BtlsResult r = btls(objective, x, d, e.g, cfg, e.f);
        REQUIRE_FALSE(r.exhausted);
        DenseVector trial = x;
        axpy(r.t, d, trial);
        CHECK(task.eval(trial).f <= e.f + cfg.c1 * r.t * dot(e.g, d));
    }
}

TEST_CASE("adam first step moves by roughly -lr and stalls on zero gradients") {
    AdamState st(3);
    const DenseVector dx = adam_update(st, unit_vector(3, 0), 0.03);
    CHECK(dx[0] == Catch::Approx(-0.03).epsilon(1e-6));
    CHECK(dx[1] == 0.0);

    AdamState fresh(2);
    CHECK(adam_update(fresh, DenseVector(2), 0.03) == DenseVector(2));
    CHECK_THROWS_AS(adam_update(fresh, DenseVector(3), 0.03), std::invalid_argument);
}

TEST_CASE("adam repeated identical steps shrink monotonically") {
    // scalar reference recursion
    AdamState st(1);
    double prev = std::abs(adam_update(st, DenseVector{1}, 0.1)[0]);
    for (int k = 0; k < 10; ++k) {
        const double cur = std::abs(adam_update(st, DenseVector{1}, 0.1)[0]);
        CHECK(cur < prev + 1e-15);
        prev = cur;
    }
}

TEST_CASE("rmsprop first step and zero gradient") {
    RmspropState st(1);
    const DenseVector dx = rmsprop_update(st, DenseVector{1}, 0.01);
    CHECK(dx[0] == Catch::Approx(-0.01 / (std::sqrt(0.01) + 1e-8)).epsilon(1e-12));

    RmspropState fresh(4);
    CHECK(rmsprop_update(fresh, DenseVector(4), 0.01) == DenseVector(4));
}

TEST_CASE("rmsprop first step is scale-free in the gradient direction") {
    for (double c : {3.0, 100.0, 0.25}) {
        RmspropState st(1);
        const double base = rmsprop_update(st, DenseVector{1}, 0.01)[0];
        RmspropState st2(1);
        const double scaled = rmsprop_update(st2, DenseVector{c}, 0.01)[0];
        CHECK(scaled == Catch::Approx(base).epsilon(1e-5)); // direction-only dependence
    }
}

TEST_CASE("adadelta first step follows the published recursion") {
    AdadeltaState st(1);
    const DenseVector dx = adadelta_update(st, DenseVector{1});
    const double expected = -std::sqrt(1e-6) / std::sqrt(0.05 + 1e-6);
    CHECK(dx[0] == Catch::Approx(expected).epsilon(1e-12));

    AdadeltaState fresh(2);
    CHECK(adadelta_update(fresh, DenseVector(2)) == DenseVector(2));
}

TEST_CASE("adadelta steps oppose the gradient componentwise") {
    Rng rng(3030);
    AdadeltaState st(6);
    for (int k = 0; k < 25; ++k) {
        const DenseVector g = randn(rng, 6, 1.0);
        const DenseVector dx = adadelta_update(st, g);
        for (std::size_t i = 0; i < 6; ++i)
            if (g[i] != 0.0) CHECK(dx[i] * g[i] < 0.0);
    }
}

TEST_CASE("first-order rules are coordinatewise") {
    Rng rng(505);
    const DenseVector g = randn(rng, 5, 1.0);
    const std::size_t perm[5] = {3, 0, 4, 1, 2};
    DenseVector gp(5);
    for (std::size_t i = 0; i < 5; ++i) gp[i] = g[perm[i]];

    AdamState a1(5), a2(5);
    const DenseVector d1 = adam_update(a1, g, 0.03);
    const DenseVector d2 = adam_update(a2, gp, 0.03);
    for (std::size_t i = 0; i < 5; ++i) CHECK(d2[i] == d1[perm[i]]);

    RmspropState r1(5), r2(5);
    const DenseVector e1 = rmsprop_update(r1, g, 0.01);
    const DenseVector e2 = rmsprop_update(r2, gp, 0.01);
    for (std::size_t i = 0; i < 5; ++i) CHECK(e2[i] == e1[perm[i]]);
}
