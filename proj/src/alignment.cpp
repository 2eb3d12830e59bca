#include "lincomb/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lincomb {

void AlignGrid::validate() const {
    if (match.rows() == 0 || match.cols() == 0)
        fail(ErrorCode::InvalidArgument, "alignment grid needs T_p >= 1 and T_t >= 1");
    if (!(gamma > 1.0) || !std::isfinite(gamma))
        fail(ErrorCode::InvalidArgument, "gap scale gamma must satisfy gamma > 1");
    if (!match.all_finite()) fail(ErrorCode::NonFinite, "alignment grid has non-finite costs");
}

AlignGrid build_grid(const Matrix& log_probs, const Matrix& targets, double gamma) {
    if (log_probs.cols() != targets.cols())
        fail(ErrorCode::DimensionMismatch, "log-probabilities and targets disagree on vocabulary size");
    require_log_distributions(log_probs);
    AlignGrid grid{matching_cost(log_probs, targets), gamma};
    grid.validate();
    return grid;
}

AlignResult solve_gsa(const AlignGrid& grid, const AlignOptions& opts) {
    grid.validate();
    const std::size_t P = grid.pred_len();
    const std::size_t T = grid.target_len();
    constexpr double kInf = std::numeric_limits<double>::infinity();

    // Cost-to-go and optimal-path counts over the (P+1) x (T+1) node lattice.
    Matrix best(P + 1, T + 1, kInf);
    Matrix count(P + 1, T + 1, 0.0);
    best(P, T) = 0.0;
    count(P, T) = 1.0;

    struct Option {
        Move move;
        std::size_t ni, nk;
        double cost;
    };
    auto options = [&](std::size_t i, std::size_t k, Option* out) {
        int n = 0;
        if (i < P && k < T) out[n++] = {Move::Diag, i + 1, k + 1, grid.match(i, k)};
        if (k < T) out[n++] = {Move::GapPred, i, k + 1, grid.gap_cost(i, k)};
        if (i < P) out[n++] = {Move::GapTarg, i + 1, k, grid.gap_cost(i, k)};
        return n;
    };

    Option opt[3];
    for (std::size_t ii = P + 1; ii-- > 0;) {
        for (std::size_t kk = T + 1; kk-- > 0;) {
            if (ii == P && kk == T) continue;
            const int n = options(ii, kk, opt);
            double b = kInf;
            for (int o = 0; o < n; ++o) b = std::min(b, opt[o].cost + best(opt[o].ni, opt[o].nk));
            best(ii, kk) = b;
            const double tie = opts.tol.allow(std::abs(b));
            double c = 0.0;
            for (int o = 0; o < n; ++o)
                if (opt[o].cost + best(opt[o].ni, opt[o].nk) <= b + tie) c += count(opt[o].ni, opt[o].nk);
            count(ii, kk) = c;
        }
    }

    AlignResult r;
    r.z_star = best(0, 0);
    r.optimal_paths = count(0, 0);
    r.unique = r.optimal_paths == 1.0;

    std::size_t i = 0, k = 0;
    while (i != P || k != T) {
        const int n = options(i, k, opt);
        const double b = best(i, k);
        // Only absorb rounding noise here; the preference order decides genuine ties.
        const double noise = 1e-12 * (1.0 + std::abs(b));
        int pick = -1;
        for (int o = 0; o < n && pick < 0; ++o)
            if (opt[o].cost + best(opt[o].ni, opt[o].nk) <= b + noise) pick = o;
        const Option& e = opt[pick];
        r.path.push_back({e.move, i, k, e.cost});
        if (e.move == Move::Diag) {
            r.edge_grad[{i, k}] += 1.0;
        } else if (opts.gap_gradient == GapGradient::Through) {
            r.edge_grad[grid.gap_cell(i, k)] += grid.gamma;
        }
        i = e.ni;
        k = e.nk;
    }
    return r;
}

Matrix gsa_gengrad(const AlignResult& result, const AlignGrid& grid) {
    Matrix G(grid.pred_len(), grid.target_len());
    for (const auto& [cell, coef] : result.edge_grad) G(cell.first, cell.second) = coef;
    return G;
}

GsaLoss gsa_loss(const Matrix& log_probs, const Matrix& targets, double gamma, const AlignOptions& opts) {
    GsaLoss out;
    out.grid = build_grid(log_probs, targets, gamma);
    out.alignment = solve_gsa(out.grid, opts);
    out.loss = out.alignment.z_star;
    out.grad_log_probs = Matrix(log_probs.rows(), log_probs.cols());
    for (const auto& [cell, coef] : out.alignment.edge_grad) {
        auto y = targets.row(cell.second);
        auto g = out.grad_log_probs.row(cell.first);
        for (std::size_t c = 0; c < g.size(); ++c) g[c] -= coef * y[c];
    }
    return out;
}

}  // namespace lincomb

namespace lincomb {

std::size_t gsa_edge_count(std::size_t P, std::size_t T) { return P * T + (P + 1) * T + P * (T + 1); }

std::size_t gsa_edge_index(std::size_t P, std::size_t T, Move move, std::size_t i, std::size_t k) {
    switch (move) {
        case Move::Diag:
            return i * T + k;
        case Move::GapPred:
            return P * T + i * T + k;
        case Move::GapTarg:
            break;
    }
    return P * T + (P + 1) * T + i * (T + 1) + k;
}

CombLayer gsa_layer(const Matrix& targets, std::size_t pred_len, double gamma, const AlignOptions& opts) {
    const std::size_t P = pred_len, T = targets.rows(), d = targets.cols();
    if (P == 0 || T == 0) fail(ErrorCode::InvalidArgument, "gsa_layer needs nonempty sequences");
    if (!(gamma > 1.0)) fail(ErrorCode::InvalidArgument, "gap scale gamma must satisfy gamma > 1");

    CombLayer layer;
    layer.efficiency = EfficiencyClass::primal();
    layer.input_dim = P * d;
    layer.solve = [=](std::span<const double> w) {
        Matrix logp(P, d);
        std::copy(w.begin(), w.end(), logp.data().begin());
        AlignGrid grid{matching_cost(logp, targets), gamma};
        AlignResult r = solve_gsa(grid, opts);
        SolverOutcome out;
        out.z_star = r.z_star;
        out.unique = r.unique;
        out.u_star = Vector(gsa_edge_count(P, T), 0.0);
        for (const AlignEdge& e : r.path) (*out.u_star)[gsa_edge_index(P, T, e.move, e.i, e.k)] = 1.0;
        return out;
    };
    layer.chain = [=](std::span<const double>) {
        SparseJacobian J(gsa_edge_count(P, T), P * d);
        auto price = [&](std::size_t e, std::size_t ci, std::size_t ck, double coef) {
            for (std::size_t c = 0; c < d; ++c)
                if (targets(ck, c) != 0.0) J.add(e, ci * d + c, -coef * targets(ck, c));
        };
        for (std::size_t i = 0; i <= P; ++i)
            for (std::size_t k = 0; k <= T; ++k) {
                const std::size_t ci = std::min(i, P - 1), ck = std::min(k, T - 1);
                if (i < P && k < T) price(gsa_edge_index(P, T, Move::Diag, i, k), i, k, 1.0);
                if (opts.gap_gradient == GapGradient::Constant) continue;
                if (k < T) price(gsa_edge_index(P, T, Move::GapPred, i, k), ci, ck, gamma);
                if (i < P) price(gsa_edge_index(P, T, Move::GapTarg, i, k), ci, ck, gamma);
            }
        return ChainMaps{std::move(J), std::nullopt, std::nullopt};
    };
    return layer;
}

}  // namespace lincomb
