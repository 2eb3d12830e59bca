#pragma once

#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "lincomb/assignment.hpp"
#include "lincomb/core.hpp"
#include "lincomb/matrix.hpp"

namespace lincomb {

/// Match costs m (T_p x T_t) and gap scale gamma > 1.
struct AlignGrid {
    Matrix match;
    double gamma = 1.5;

    std::size_t pred_len() const noexcept { return match.rows(); }
    std::size_t target_len() const noexcept { return match.cols(); }

    /// Clamped cell whose match cost prices a gap leaving lattice node (i, k).
    std::pair<std::size_t, std::size_t> gap_cell(std::size_t i, std::size_t k) const noexcept {
        return {std::min(i, pred_len() - 1), std::min(k, target_len() - 1)};
    }
    double gap_cost(std::size_t i, std::size_t k) const noexcept {
        auto [ic, kc] = gap_cell(i, k);
        return gamma * match(ic, kc);
    }

    /// Throws InvalidArgument / NonFinite.
    void validate() const;
};

enum class Move : unsigned char {
    Diag,     // (i, k) -> (i+1, k+1), matches predicted i with target k
    GapPred,  // (i, k) -> (i, k+1), gap in the predicted sequence
    GapTarg,  // (i, k) -> (i+1, k), gap in the target sequence
};

struct AlignEdge {
    Move move;
    std::size_t i;  // source lattice node
    std::size_t k;
    double cost;
};

enum class GapGradient {
    Through,   // gap edges contribute gamma to their clamped match cell
    Constant,  // gap costs treated as constants in the backward pass
};

struct AlignOptions {
    GapGradient gap_gradient = GapGradient::Through;
    Tolerance tol{};
};

struct AlignResult {
    std::vector<AlignEdge> path;
    double z_star = 0.0;
    std::map<std::pair<std::size_t, std::size_t>, double> edge_grad;
    bool unique = false;
    double optimal_paths = 0.0;  // number of optimal lattice paths
};

/// m[i][k] = -<max(logP[i], log floor), Y[k]>.
AlignGrid build_grid(const Matrix& log_probs, const Matrix& targets, double gamma);

/// Minimum-cost monotone path from (0,0) to (T_p,T_t).  Ties prefer
/// Diag over GapPred over GapTarg at the earliest node.
AlignResult solve_gsa(const AlignGrid& grid, const AlignOptions& opts = {});

/// Dense T_p x T_t supergradient of z*(m).
Matrix gsa_gengrad(const AlignResult& result, const AlignGrid& grid);

struct GsaLoss : LossAndGrad {
    AlignGrid grid;
    AlignResult alignment;
};

GsaLoss gsa_loss(const Matrix& log_probs, const Matrix& targets, double gamma,
                 const AlignOptions& opts = {});

/// Edge indexing of the path LP on a T_p x T_t grid: Diag edges first
/// (T_p*T_t), then GapPred ((T_p+1)*T_t), then GapTarg (T_p*(T_t+1)).
std::size_t gsa_edge_count(std::size_t pred_len, std::size_t target_len);
std::size_t gsa_edge_index(std::size_t pred_len, std::size_t target_len, Move move, std::size_t i,
                           std::size_t k);

/// Primal-efficient layer over w = vec(logP) (pred_len x d): c holds the edge
/// costs, u* the optimal path indicator.
CombLayer gsa_layer(const Matrix& targets, std::size_t pred_len, double gamma, const AlignOptions& opts = {});

}  // namespace lincomb
