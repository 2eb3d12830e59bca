#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lincomb/core.hpp"
#include "lincomb/matrix.hpp"

namespace lincomb {

/// Probabilities are floored at this value before taking -log.
inline constexpr double kProbFloor = 1e-12;

struct MatchingResult {
    std::vector<std::size_t> perm;  // left j -> right perm[j]
    Matrix M;                       // permutation matrix, M(j, perm[j]) = 1
    double z_star = 0.0;
    Vector duals_u;  // row potentials
    Vector duals_v;  // column potentials
    bool unique = false;
    /// Cost of the best alternative perfect matching minus z* (infinity when b = 1).
    double second_best_gap = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method,
/// O(b^3)).  Among optimal matchings the lexicographically smallest
/// permutation is returned.  Throws NonSquare / NonFinite.
MatchingResult solve_assignment(const Matrix& cost, const Tolerance& tol = {});

/// d_c = vec(M): the permutation matrix is a supergradient of z*(C).
GenGrad assignment_gengrad(const MatchingResult& result);

/// The matching as an outcome of the Birkhoff LP: u* = vec(M), v* = (u, v).
SolverOutcome as_outcome(const MatchingResult& result);

/// C[j][k] = -<max(logP[j], log floor), Y[k]>.
Matrix matching_cost(const Matrix& log_probs, const Matrix& labels);

struct LossAndGrad {
    double loss = 0.0;
    Matrix grad_log_probs;
};

struct MatchingLoss : LossAndGrad {
    MatchingResult matching;
};

/// Bag loss: z* of the assignment between predictions and shuffled labels,
/// with grad_logP[j] = -Y[perm[j]].
MatchingLoss matching_loss(const Matrix& log_probs, const Matrix& labels, const Tolerance& tol = {});

/// Accept iff (#distinct classes) / b >= threshold.
bool filter_bag(std::span<const int> labels, double threshold);
bool filter_bag(const Matrix& one_hot_labels, double threshold);

/// Primal-efficient layer over w = vec(logP) (b x d) for a fixed label bag:
/// c = vec(matching_cost(logP, labels)); the clamp is passed straight through.
CombLayer matching_layer(const Matrix& labels, const Tolerance& tol = {});

/// Throws InvalidArgument if some row is not a log-distribution within 1e-6.
void require_log_distributions(const Matrix& log_probs);

}  // namespace lincomb
