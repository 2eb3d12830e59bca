#include "doctest.h"

#include <random>

#include "lincomb/batch.hpp"
#include "support.hpp"

using namespace lincomb;

namespace {

Matrix random_log_probs(std::mt19937_64& rng, std::size_t n, std::size_t d) {
    Matrix p = testing::random_matrix(rng, n, d, 0.05, 1.0);
    for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (double x : p.row(r)) s += x;
        for (double& x : p.row(r)) x /= s;
    }
    return testing::log_of(p);
}

Matrix random_one_hot(std::mt19937_64& rng, std::size_t n, std::size_t d) {
    Matrix y(n, d);
    for (std::size_t r = 0; r < n; ++r) y(r, rng() % d) = 1.0;
    return y;
}

}  // namespace

TEST_CASE("parallel matching batch is bitwise equal to the serial reference") {
    std::mt19937_64 rng(1);
    std::vector<Matrix> lp, y;
    for (int i = 0; i < 64; ++i) {
        lp.push_back(random_log_probs(rng, 8, 10));
        y.push_back(random_one_hot(rng, 8, 10));
    }
    auto s = matching_loss_batch(lp, y, Execution::Serial);
    auto p = matching_loss_batch(lp, y, Execution::Parallel);
    CHECK(s.total == p.total);
    CHECK(s.losses == p.losses);
    for (std::size_t i = 0; i < lp.size(); ++i) {
        CHECK(s.grads[i] == p.grads[i]);
        CHECK(s.losses[i] == matching_loss(lp[i], y[i]).loss);
    }
}

TEST_CASE("parallel GSA batch is bitwise equal to the serial reference") {
    std::mt19937_64 rng(2);
    std::vector<Matrix> lp, y;
    for (int i = 0; i < 64; ++i) {
        lp.push_back(random_log_probs(rng, 3 + i % 5, 6));
        y.push_back(random_one_hot(rng, 2 + i % 6, 6));
    }
    auto s = gsa_loss_batch(lp, y, 1.5, Execution::Serial);
    auto p = gsa_loss_batch(lp, y, 1.5, Execution::Parallel);
    CHECK(s.total == p.total);
    for (std::size_t i = 0; i < lp.size(); ++i) CHECK(s.grads[i] == p.grads[i]);
}

TEST_CASE("the lowest failing index is reported") {
    std::vector<Matrix> costs{Matrix{{0, 1}, {1, 0}}, Matrix(2, 3), Matrix{{1, INFINITY}, {0, 0}}};
    try {
        solve_assignments(costs, Execution::Parallel);
        FAIL("expected failure");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonSquare);
    }
}
