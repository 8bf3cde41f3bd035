#include <catch2/catch_amalgamated.hpp>

#include "lbfgspi/lbfgs.hpp"
#include "lbfgspi/rng.hpp"
#include "lbfgspi/tasks.hpp"

#include "helpers.hpp"

using namespace lbfgspi;

TEST_CASE("push_pair honors the curvature skip rule") {
    LbfgsHistory h(5);
    CHECK(h.push_pair(unit_vector(3, 0), unit_vector(3, 0)));
    CHECK(h.pair(0).rho == 1.0);
    CHECK_FALSE(h.push_pair(unit_vector(3, 0), -1.0 * unit_vector(3, 0)));
    CHECK(h.size() == 1);
    CHECK_THROWS_AS(h.push_pair(DenseVector(2), DenseVector(3)), std::invalid_argument);
}

TEST_CASE("push_pair evicts the oldest beyond the memory bound") {
    LbfgsHistory h(2);
    CHECK(h.push_pair(DenseVector{1, 0}, DenseVector{1, 0}));
    CHECK(h.push_pair(DenseVector{0, 2}, DenseVector{0, 1}));
    CHECK(h.push_pair(DenseVector{3, 0}, DenseVector{1, 0}));
    REQUIRE(h.size() == 2);
    CHECK(h.pair(0).s == DenseVector{0, 2});
    CHECK(h.pair(1).s == DenseVector{3, 0});
}

TEST_CASE("gamma scaling") {
    LbfgsHistory h(3);
    CHECK(h.gamma() == 1.0);
    h.push_pair(2.0 * unit_vector(2, 0), unit_vector(2, 0));
    CHECK(h.gamma() == 2.0);
    h.push_pair(unit_vector(2, 1), unit_vector(2, 1));
    CHECK(h.gamma() == 1.0);
}

TEST_CASE("two_loop with empty history is steepest descent") {
    LbfgsHistory h(5);
    CHECK(two_loop(h, DenseVector{1, -2}) == DenseVector{-1, 2});
}

TEST_CASE("two_loop single-pair hand trace") {
    LbfgsHistory h(5);
    h.push_pair(unit_vector(2, 0), unit_vector(2, 0));
    // q=e1, alpha=1, q->0, gamma=1, r=0, r += s(alpha-beta) = e1, d = -e1
    CHECK(two_loop(h, unit_vector(2, 0)) == -1.0 * unit_vector(2, 0));
}

TEST_CASE("two_loop matches the dense BFGS recursion") {
    Rng rng(99);
    for (std::size_t n : {2u, 5u, 10u}) {
        for (int m : {1, 3, 10}) {
            const auto pairs = testutil::random_curvature_pairs(rng, n, m);
            LbfgsHistory h(m);
            for (const auto& [s, y] : pairs) REQUIRE(h.push_pair(s, y));
            const DenseVector g = randn(rng, n, 1.0);
            const DenseVector d = two_loop(h, g);
            const DenseVector ref = testutil::dense_bfgs_direction(pairs, g);
            const double scale = std::max(norm2(ref), 1e-12);
            CHECK(testutil::max_abs_diff(d, ref) / scale < 1e-10);
        }
    }
}

TEST_CASE("two_loop is linear in the gradient for fixed history") {
    Rng rng(7);
    const auto pairs = testutil::random_curvature_pairs(rng, 6, 4);
    LbfgsHistory h(4);
    for (const auto& [s, y] : pairs) h.push_pair(s, y);
    const DenseVector g = randn(rng, 6, 1.0);
    for (double c : {2.0, -0.5, 13.0}) {
        const DenseVector lhs = two_loop(h, c * g);
        const DenseVector rhs = c * two_loop(h, g);
        CHECK(testutil::max_abs_diff(lhs, rhs) < 1e-12 * std::max(1.0, norm2(rhs)));
    }
}

TEST_CASE("descent direction on convex quadratics with exact-step history") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        const auto fam = make_synthetic_family(SyntheticKind::Quadratic, 8, 1, 1000 + rep);
        const Task& task = fam[0].task;
        DenseVector x = fam[0].x0;
        LbfgsHistory h(5);
        Eval cur = task.eval(x);
        for (int k = 0; k < 12; ++k) {
            const DenseVector d = two_loop(h, cur.g);
            if (norm2(cur.g) > 1e-12) CHECK(dot(d, cur.g) < 0.0);
            DenseVector x_next = x;
            axpy(1.0, d, x_next);
            Eval next = task.eval(x_next);
            h.push_pair(x_next - x, next.g - cur.g);
            x = std::move(x_next);
            cur = std::move(next);
        }
        for (int i = 0; i < h.size(); ++i) CHECK(h.pair(i).rho > 0.0);
    }
}
