#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lincomb/assignment.hpp"
#include "lincomb/lpref.hpp"
#include "support.hpp"

using namespace lincomb;
using lincomb::testing::random_matrix;

namespace {

bool is_permutation_matrix(const Matrix& M) {
    for (std::size_t i = 0; i < M.rows(); ++i) {
        double rs = 0.0, cs = 0.0;
        for (std::size_t j = 0; j < M.cols(); ++j) {
            if (M(i, j) != 0.0 && M(i, j) != 1.0) return false;
            rs += M(i, j);
            cs += M(j, i);
        }
        if (rs != 1.0 || cs != 1.0) return false;
    }
    return true;
}

void check_certificate(const Matrix& C, const MatchingResult& r) {
    const std::size_t n = C.rows();
    CHECK(is_permutation_matrix(r.M));
    CHECK(std::abs(r.z_star - frobenius(C, r.M)) <= 1e-9);
    double du = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < n; ++k) CHECK(r.duals_u[j] + r.duals_v[k] <= C(j, k) + 1e-9);
        CHECK(std::abs(r.duals_u[j] + r.duals_v[r.perm[j]] - C(j, r.perm[j])) <= 1e-9);
        du += r.duals_u[j] + r.duals_v[j];
    }
    CHECK(std::abs(du - r.z_star) <= 1e-9);
}

}  // namespace

TEST_CASE("solve_assignment: worked instances") {
    SUBCASE("zero diagonal") {
        auto r = solve_assignment(Matrix{{0, 1}, {1, 0}});
        CHECK(r.perm == std::vector<std::size_t>{0, 1});
        CHECK(r.z_star == 0.0);
        CHECK(r.M == Matrix::identity(2));
        CHECK(r.unique);
    }
    SUBCASE("2x2: permutations cost 2 and 4") {
        Matrix C{{1, 2}, {2, 1}};
        CHECK(enumerate_permutations(C).z_min == 2.0);
        auto r = solve_assignment(C);
        CHECK(r.perm == std::vector<std::size_t>{0, 1});
        CHECK(r.z_star == 2.0);
    }
    SUBCASE("3x3: minimum is 1 + 2 + 2") {
        Matrix C{{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
        auto oracle = enumerate_permutations(C);
        CHECK(oracle.z_min == 5.0);
        REQUIRE(oracle.argmin.size() == 1);
        CHECK(oracle.argmin[0] == std::vector<std::size_t>{1, 0, 2});
        auto r = solve_assignment(C);
        CHECK(r.perm == std::vector<std::size_t>{1, 0, 2});
        CHECK(r.z_star == 5.0);
        check_certificate(C, r);
    }
}

TEST_CASE("solve_assignment: input validation") {
    CHECK_THROWS_AS(solve_assignment(Matrix(2, 3)), Error);
    Matrix C{{0, 1}, {1, INFINITY}};
    try {
        solve_assignment(C);
        FAIL("expected NonFinite");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFinite);
    }
    try {
        solve_assignment(Matrix(3, 2));
        FAIL("expected NonSquare");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonSquare);
    }
}

TEST_CASE("solve_assignment agrees with permutation enumeration") {
    std::mt19937_64 rng(2024);
    for (std::size_t b = 1; b <= 7; ++b)
        for (int t = 0; t < 40; ++t) {
            Matrix C = random_matrix(rng, b, b);
            auto r = solve_assignment(C);
            CHECK(std::abs(r.z_star - enumerate_permutations(C).z_min) <= 1e-9);
            check_certificate(C, r);
        }
}

TEST_CASE("ties resolve to the lexicographically smallest optimal permutation") {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> small(0, 2);
    for (int t = 0; t < 300; ++t) {
        const std::size_t b = 2 + static_cast<std::size_t>(t % 5);
        Matrix C(b, b);
        for (double& x : C.data()) x = small(rng);
        auto oracle = enumerate_permutations(C);
        auto r = solve_assignment(C);
        CHECK(r.z_star == oracle.z_min);
        CHECK(r.perm == *std::min_element(oracle.argmin.begin(), oracle.argmin.end()));
        CHECK(r.unique == (oracle.argmin.size() == 1));
        check_certificate(C, r);
    }
}

TEST_CASE("constant cost matrix: every permutation is optimal") {
    Matrix C(5, 5, 1.0);
    CHECK(enumerate_permutations(C).argmin.size() == 120);
    auto r = solve_assignment(C);
    CHECK_FALSE(r.unique);
    CHECK(r.perm == std::vector<std::size_t>{0, 1, 2, 3, 4});
    CHECK(r.second_best_gap == 0.0);
}

TEST_CASE("assignment_gengrad is the permutation matrix") {
    auto g = assignment_gengrad(solve_assignment(Matrix{{0, 1}, {1, 0}}));
    CHECK(*g.d_c == Matrix::identity(2).data());
    CHECK_FALSE(g.d_b);

    Matrix C{{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
    auto g3 = assignment_gengrad(solve_assignment(C));
    CHECK(*g3.d_c == Vector{0, 1, 0, 1, 0, 0, 0, 0, 1});

    // Edge (0,1) lies on the unique optimum: dz* = eps.
    const double eps = 1e-6;
    Matrix C2 = C;
    C2(0, 1) += eps;
    CHECK(solve_assignment(C2).z_star - 5.0 == doctest::Approx(eps).epsilon(1e-6));
}

TEST_CASE("assignment supergradient inequality and local exactness") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g(0, 1);
    int exact_checked = 0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t b = 2 + static_cast<std::size_t>(t % 7);
        Matrix C = random_matrix(rng, b, b), C2 = random_matrix(rng, b, b);
        auto r = solve_assignment(C);
        Matrix diff = C2;
        for (std::size_t i = 0; i < diff.size(); ++i) diff.data()[i] -= C.data()[i];
        CHECK(solve_assignment(C2).z_star <= r.z_star + frobenius(r.M, diff) + 1e-9);

        if (!r.unique) continue;
        Matrix D(b, b);
        for (double& x : D.data()) x = g(rng);
        const double eps = 1e-5;
        Matrix Ce = C;
        for (std::size_t i = 0; i < Ce.size(); ++i) Ce.data()[i] += eps * D.data()[i];
        CHECK(std::abs((solve_assignment(Ce).z_star - r.z_star) / eps - frobenius(r.M, D)) <= 1e-6);
        ++exact_checked;
    }
    CHECK(exact_checked > 90);
}

TEST_CASE("permuting rows of C permutes the matching and keeps z*") {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 50; ++t) {
        const std::size_t b = 2 + static_cast<std::size_t>(t % 6);
        Matrix C = random_matrix(rng, b, b);
        std::vector<std::size_t> sigma(b);
        std::iota(sigma.begin(), sigma.end(), 0);
        std::shuffle(sigma.begin(), sigma.end(), rng);
        Matrix P(b, b);
        for (std::size_t j = 0; j < b; ++j)
            for (std::size_t k = 0; k < b; ++k) P(j, k) = C(sigma[j], k);
        auto r = solve_assignment(C), rp = solve_assignment(P);
        CHECK(std::abs(r.z_star - rp.z_star) <= 1e-9);
        if (r.unique)
            for (std::size_t j = 0; j < b; ++j) CHECK(rp.perm[j] == r.perm[sigma[j]]);
    }
}

TEST_CASE("matching_loss on a two-sample bag") {
    Matrix logp = testing::log_of(Matrix{{0.9, 0.1}, {0.2, 0.8}});
    Matrix Y = testing::one_hot_rows({1, 0}, 2);
    // C = -log [[.1,.9],[.8,.2]]; permutations: (0,1) -> 2.3026+1.6094, (1,0) -> 0.1054+0.2231.
    Matrix C = matching_cost(logp, Y);
    CHECK(C(0, 0) == doctest::Approx(-std::log(0.1)));
    CHECK(C(0, 1) == doctest::Approx(-std::log(0.9)));
    CHECK(C(1, 0) == doctest::Approx(-std::log(0.8)));
    CHECK(C(1, 1) == doctest::Approx(-std::log(0.2)));
    auto oracle = enumerate_permutations(C);

    auto res = matching_loss(logp, Y);
    CHECK(res.matching.perm == std::vector<std::size_t>{1, 0});
    CHECK(res.loss == doctest::Approx(oracle.z_min));
    CHECK(res.loss == doctest::Approx(0.3285).epsilon(1e-4));
    CHECK(res.grad_log_probs == Matrix{{-1, 0}, {0, -1}});
}

TEST_CASE("matching_loss with perfect predictions hits the clamp floor") {
    Matrix logp{{0.0, std::log(1e-300)}, {std::log(1e-300), 0.0}};
    // Rows are log-distributions up to 1e-300; the clamp floors the zero probabilities.
    Matrix Y = testing::one_hot_rows({1, 0}, 2);
    auto res = matching_loss(logp, Y);
    CHECK(res.loss == doctest::Approx(0.0));
    CHECK(res.matching.perm == std::vector<std::size_t>{1, 0});
    CHECK(res.grad_log_probs == Matrix{{-1, 0}, {0, -1}});
    CHECK(matching_cost(logp, testing::one_hot_rows({0, 1}, 2))(0, 1) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("matching_loss with b = 1 is cross-entropy") {
    Matrix logp = testing::log_of(Matrix{{0.2, 0.5, 0.3}});
    auto res = matching_loss(logp, testing::one_hot_rows({2}, 3));
    CHECK(res.loss == doctest::Approx(-std::log(0.3)));
    CHECK(res.grad_log_probs == Matrix{{0, 0, -1}});
}

TEST_CASE("matching_loss rejects non-distributions") {
    CHECK_THROWS_AS(matching_loss(Matrix{{0.0, 0.0}}, testing::one_hot_rows({0}, 2)), Error);
    CHECK_THROWS_AS(matching_loss(testing::log_of(Matrix{{0.5, 0.5}}), testing::one_hot_rows({0, 1}, 2)), Error);
}

TEST_CASE("filter_bag thresholds") {
    std::vector<int> six_of_eight{0, 1, 2, 3, 4, 5, 5, 5};
    std::vector<int> five_of_eight{0, 1, 2, 3, 4, 4, 4, 4};
    std::vector<int> three_of_four{0, 1, 2, 2};
    CHECK(filter_bag(six_of_eight, 0.75));
    CHECK_FALSE(filter_bag(five_of_eight, 0.75));
    CHECK(filter_bag(three_of_four, 0.75));
    CHECK(filter_bag(testing::one_hot_rows({0, 1, 2, 2}, 3), 0.75));
    CHECK_THROWS_AS(filter_bag(three_of_four, 0.0), Error);
    CHECK_THROWS_AS(filter_bag(three_of_four, 1.5), Error);
}

TEST_CASE("matching outcome certifies the Birkhoff LP") {
    // Row sums then column sums, u = vec(M).
    Matrix C{{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
    LPSpec lp{C.data(), Matrix(6, 9), Vector(6, 1.0)};
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t k = 0; k < 3; ++k) {
            lp.A(j, j * 3 + k) = 1.0;
            lp.A(3 + k, j * 3 + k) = 1.0;
        }
    auto out = as_outcome(solve_assignment(C));
    CHECK(certifies(lp, out));
    CHECK(solve_lp(lp).z_star == doctest::Approx(5.0));
}
