#include "doctest.h"

#include <cmath>
#include <random>

#include "lincomb/assignment.hpp"
#include "lincomb/core.hpp"
#include "lincomb/lpref.hpp"
#include "support.hpp"

using namespace lincomb;

TEST_CASE("assemble_gengrad: primal class copies the primal witness") {
    SolverOutcome out{2.0, Vector{1, 0, 0, 1}, std::nullopt, true};
    GenGrad gg = assemble_gengrad(out, EfficiencyClass::primal());
    REQUIRE(gg.d_c);
    CHECK(*gg.d_c == Vector{1, 0, 0, 1});
    CHECK_FALSE(gg.d_b);
    CHECK_FALSE(gg.d_A);
}

TEST_CASE("assemble_gengrad: A block is the negative outer product") {
    // min x1 + 2 x2 s.t. x1 + x2 = 1: vertices (1,0) z=1 and (0,1) z=2.
    LPSpec lp{{1, 2}, Matrix{{1, 1}}, {1}};
    VertexSet vs = enumerate_vertices(lp);
    REQUIRE(vs.min_objective() == doctest::Approx(1.0));

    SolverOutcome out{1.0, Vector{1, 0}, Vector{1}, true};
    GenGrad gg = assemble_gengrad(out, EfficiencyClass::primal_dual(true, true, true));
    REQUIRE(gg.d_A);
    CHECK((*gg.d_A)(0, 0) == -1.0);
    CHECK((*gg.d_A)(0, 1) == 0.0);
    CHECK(*gg.d_c == Vector{1, 0});
    CHECK(*gg.d_b == Vector{1});
}

TEST_CASE("assemble_gengrad: missing witnesses are contract violations") {
    SolverOutcome primal_only{1.0, Vector{1, 0}, std::nullopt, true};
    CHECK_THROWS_AS(assemble_gengrad(primal_only, EfficiencyClass::dual()), Error);
    try {
        assemble_gengrad(primal_only, EfficiencyClass::dual());
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingWitness);
    }
    SolverOutcome dual_only{1.0, std::nullopt, Vector{1}, true};
    CHECK_THROWS_AS(assemble_gengrad(dual_only, EfficiencyClass::primal()), Error);
    CHECK_THROWS_AS(assemble_gengrad(dual_only, EfficiencyClass::primal_dual(true, true, true)), Error);
}

TEST_CASE("outer-product identity holds entrywise") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int t = 0; t < 50; ++t) {
        Vector pu(5), dv(3);
        for (double& x : pu) x = u(rng);
        for (double& x : dv) x = u(rng);
        GenGrad gg = assemble_gengrad(SolverOutcome{0.0, pu, dv, true},
                                      EfficiencyClass::primal_dual(true, true, true));
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 5; ++j) CHECK((*gg.d_A)(i, j) == -(*gg.d_b)[i] * (*gg.d_c)[j]);
    }
}

TEST_CASE("comb_loss_backward: identity and scaled chains") {
    GenGrad gg = assemble_gengrad(SolverOutcome{2.0, Vector{1, 0, 0, 1}, std::nullopt, true},
                                  EfficiencyClass::primal());
    ChainMaps id{SparseJacobian::identity(4), std::nullopt, std::nullopt};
    CHECK(comb_loss_backward(gg, id, 1.0) == Vector{1, 0, 0, 1});
    CHECK(comb_loss_backward(gg, id, 2.0) == Vector{2, 0, 0, 2});

    ChainMaps scaled{SparseJacobian::scaled_identity(4, 3.0), std::nullopt, std::nullopt};
    CHECK(comb_loss_backward(gg, scaled, 1.0) == Vector{3, 0, 0, 3});
}

TEST_CASE("comb_loss_backward: scaled chain matches finite differences of z*(3w)") {
    // Oracle: z*(3w) by permutation enumeration, forward differences per entry.
    Matrix w{{0, 1}, {1, 0}};
    auto z = [](const Matrix& c) {
        Matrix s = c;
        for (double& x : s.data()) x *= 3.0;
        return enumerate_permutations(s).z_min;
    };
    const double eps = 1e-6;
    Vector fd(4);
    for (std::size_t e = 0; e < 4; ++e) {
        Matrix w2 = w;
        w2.data()[e] += eps;
        fd[e] = (z(w2) - z(w)) / eps;
    }
    CHECK(fd[0] == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(fd[1] == doctest::Approx(0.0));
    CHECK(fd[2] == doctest::Approx(0.0));
    CHECK(fd[3] == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("comb_loss_backward: b and A blocks compose with the dual witness") {
    // b = 2 w0, A = [[w1, 1]] at the witness u = (1,0), v = (1).
    GenGrad gg = assemble_gengrad(SolverOutcome{1.0, Vector{1, 0}, Vector{1}, true},
                                  EfficiencyClass::primal_dual(false, true, true));
    SparseJacobian db(1, 2), dA(2, 2);
    db.add(0, 0, 2.0);
    dA.add(0, 1, 1.0);
    ChainMaps chain{std::nullopt, db, dA};
    Vector g = comb_loss_backward(gg, chain, 1.0);
    CHECK(g[0] == 2.0);   // v* . db/dw0
    CHECK(g[1] == -1.0);  // -v0 u0 . dA00/dw1
}

TEST_CASE("comb_loss_backward is linear in the upstream gradient") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int t = 0; t < 100; ++t) {
        Vector pu(4), dv(2);
        for (double& x : pu) x = u(rng);
        for (double& x : dv) x = u(rng);
        GenGrad gg = assemble_gengrad(SolverOutcome{0.0, pu, dv, true},
                                      EfficiencyClass::primal_dual(true, true, true));
        SparseJacobian jc(4, 3), jb(2, 3), ja(8, 3);
        for (std::size_t r = 0; r < 4; ++r) jc.add(r, r % 3, u(rng));
        for (std::size_t r = 0; r < 2; ++r) jb.add(r, (r + 1) % 3, u(rng));
        for (std::size_t r = 0; r < 8; ++r) ja.add(r, r % 3, u(rng));
        ChainMaps chain{jc, jb, ja};
        const double s = u(rng), alpha = u(rng);
        Vector lhs = comb_loss_backward(gg, chain, alpha * s);
        Vector rhs = comb_loss_backward(gg, chain, s);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(std::abs(lhs[i] - alpha * rhs[i]) <= 1e-13 * (1.0 + std::abs(lhs[i])));
    }
}

TEST_CASE("comb_loss_backward rejects inconsistent chains") {
    GenGrad gg = assemble_gengrad(SolverOutcome{2.0, Vector{1, 0, 0, 1}, std::nullopt, true},
                                  EfficiencyClass::primal());
    ChainMaps wrong{SparseJacobian::identity(3), std::nullopt, std::nullopt};
    CHECK_THROWS_AS(comb_loss_backward(gg, wrong, 1.0), Error);
    ChainMaps needs_b{SparseJacobian::identity(4), SparseJacobian(1, 4), std::nullopt};
    CHECK_THROWS_AS(comb_loss_backward(gg, needs_b, 1.0), Error);
    CHECK_THROWS_AS(comb_loss_backward(gg, ChainMaps{}, 1.0), Error);
}

TEST_CASE("supergradient_check: permutation matrix certifies the assignment value") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
        Matrix C = testing::random_matrix(rng, 4, 4);
        MatchingResult r = solve_assignment(C);
        auto f = [](std::span<const double> w) {
            Matrix c(4, 4);
            std::copy(w.begin(), w.end(), c.data().begin());
            return solve_assignment(c).z_star;
        };
        auto rep = supergradient_check(f, C.data(), r.M.data(), 50, 0.5, Curvature::Concave, 100 + t);
        CHECK(rep.pass);
        CHECK(rep.worst_violation <= 1e-9);
    }
}

TEST_CASE("supergradient_check: zero is not a supergradient of a decreasing value") {
    Matrix C{{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
    auto f = [](std::span<const double> w) {
        Matrix c(3, 3);
        std::copy(w.begin(), w.end(), c.data().begin());
        return solve_assignment(c).z_star;
    };
    Vector zero(9, 0.0);
    auto rep = supergradient_check(f, C.data(), zero, 50, 0.5, Curvature::Concave, 9);
    CHECK_FALSE(rep.pass);
    CHECK(rep.worst_violation > 1e-3);
}

TEST_CASE("supergradient_check: dual witness is a subgradient of z*(b)") {
    // z*(b1) = b1 for min x1 + 2 x2, x1 + x2 = b1 (b1 > 0).
    auto f = [](std::span<const double> b) {
        LPSpec lp{{1, 2}, Matrix{{1, 1}}, {b[0]}};
        return solve_lp(lp).z_star;
    };
    Vector b{1.0}, v{1.0};
    auto rep = supergradient_check(f, b, v, 50, 0.5, Curvature::Convex, 4);
    CHECK(rep.pass);
    CHECK(rep.worst_violation <= 1e-9);
}

TEST_CASE("LPSpec::validate catches shapes and non-finite entries") {
    LPSpec bad{{1, 2, 3}, Matrix{{1, 1}}, {1}};
    CHECK_THROWS_AS(bad.validate(), Error);
    LPSpec nan{{1, std::nan("")}, Matrix{{1, 1}}, {1}};
    CHECK_THROWS_AS(nan.validate(), Error);
}

TEST_CASE("CombLayer counts solver invocations") {
    CombLayer layer;
    layer.input_dim = 4;
    layer.solve = [](std::span<const double> w) {
        Matrix c(2, 2);
        std::copy(w.begin(), w.end(), c.data().begin());
        return as_outcome(solve_assignment(c));
    };
    Vector w{0, 1, 1, 0};
    SolverOutcome out = layer.run(w);
    CHECK(out.z_star == 0.0);
    CHECK(layer.invocations->load() == 1);
    CHECK_THROWS_AS(layer.run(Vector{1, 2}), Error);
}
