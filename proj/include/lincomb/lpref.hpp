#pragma once

// Reference machinery: a small dense simplex with dual recovery, brute-force
// oracles (LP vertices, permutations, lattice paths) and finite-difference
// checks of the LP value-function gradients.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "lincomb/alignment.hpp"
#include "lincomb/core.hpp"

namespace lincomb {

inline constexpr std::size_t kMaxLpVars = 20;
inline constexpr std::size_t kMaxLpRows = 12;

/// Two-phase dense tableau simplex with Bland's rule.  Returns z*, a basic
/// optimal u*, and v* = c_B^T B^-1 from the optimal basis.  `unique` is set
/// when every nonbasic reduced cost and every basic value is strictly positive.
/// Throws Infeasible, Unbounded, InvalidArgument (over the reference caps).
SolverOutcome solve_lp(const LPSpec& spec, const Tolerance& tol = {});

struct Vertex {
    std::vector<std::size_t> basis;
    Vector u;
    double objective = 0.0;
};

struct VertexSet {
    std::vector<Vertex> vertices;
    double min_objective() const;
};

/// All basic feasible solutions by basis enumeration (redundant rows removed
/// first).  Throws Infeasible.
VertexSet enumerate_vertices(const LPSpec& spec, const Tolerance& tol = {});

struct FDReport {
    Vector direction;  // flattened for the A block
    double analytic = 0.0;
    double numeric = 0.0;
    double abs_error = 0.0;
    bool pass = false;
};

struct Theorem1Report {
    FDReport c_block;
    FDReport b_block;
    FDReport A_block;
    bool all_pass() const { return c_block.pass && b_block.pass && A_block.pass; }
};

struct Theorem1Options {
    double eps = 1e-5;
    double rtol = 1e-4;
    std::uint64_t seed = 0x5eed;
};

/// Central differences of z* along one random unit direction per block,
/// against u*.d, v*.d and <-v* u*^T, D>.  Throws DegenerateInstance when the
/// outcome is not unique or its basis margin is within reach of the step.
Theorem1Report check_theorem1(const LPSpec& spec, const SolverOutcome& outcome,
                              const Theorem1Options& opts = {});

/// Random feasible, bounded instance: A ~ U[-1,1], b = A u0 with u0 > 0, c > 0.
LPSpec random_lp(std::mt19937_64& rng, std::size_t vars, std::size_t rows);

struct PermutationOracle {
    double z_min = 0.0;
    std::vector<std::vector<std::size_t>> argmin;
};

/// Exhaustive minimum over all b! permutations (b <= 8).
PermutationOracle enumerate_permutations(const Matrix& cost, const Tolerance& tol = {});

struct PathOracle {
    double z_min = 0.0;
    std::vector<std::vector<Move>> argmin;
    std::size_t paths = 0;
};

/// Exhaustive minimum over all monotone lattice paths (T_p, T_t <= 7).
PathOracle enumerate_paths(const AlignGrid& grid, const Tolerance& tol = {});

}  // namespace lincomb
