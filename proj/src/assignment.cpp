#include "lincomb/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace lincomb {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Potentials {
    std::vector<std::size_t> perm;
    Vector u;
    Vector v;
};

// Shortest augmenting path Hungarian method with row/column potentials.
// Index 0 is a sentinel column; rows and columns are 1-based internally.
Potentials hungarian(const Matrix& C) {
    const std::size_t n = C.rows();
    Vector u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> owner(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);

    for (std::size_t i = 1; i <= n; ++i) {
        owner[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = owner[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = C(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (owner[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    Potentials p;
    p.perm.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) p.perm[owner[j] - 1] = j - 1;
    p.u.assign(u.begin() + 1, u.end());
    p.v.assign(v.begin() + 1, v.end());
    return p;
}

double slack(const Matrix& C, const Potentials& p, std::size_t j, std::size_t k) {
    return std::max(0.0, C(j, k) - p.u[j] - p.v[k]);
}

// Every alternative perfect matching differs from the optimum by alternating
// cycles whose excess cost is the sum of reduced costs on their non-matching
// edges, so the second-best gap is the minimum-weight cycle in the graph
// "row j -> row j' with weight slack(j, perm[j'])".
double second_best_gap(const Matrix& C, const Potentials& p) {
    const std::size_t n = C.rows();
    if (n < 2) return kInf;
    Matrix d(n, n, kInf);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t j2 = 0; j2 < n; ++j2)
            if (j != j2) d(j, j2) = slack(C, p, j, p.perm[j2]);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i) {
            const double dik = d(i, k);
            if (dik == kInf) continue;
            for (std::size_t j = 0; j < n; ++j) d(i, j) = std::min(d(i, j), dik + d(k, j));
        }
    double best = kInf;
    for (std::size_t j = 0; j < n; ++j) best = std::min(best, d(j, j));
    return best;
}

// Under ties, move to the lexicographically smallest permutation that uses
// only tight edges.  Row j tries each smaller tight column k and accepts it if
// the rows after j can be re-routed along tight edges to free perm[j].
void canonicalize(const Matrix& C, Potentials& p, double tight_tol) {
    const std::size_t n = C.rows();
    auto tight = [&](std::size_t j, std::size_t k) { return slack(C, p, j, k) <= tight_tol; };
    std::vector<std::size_t> owner(n);
    for (std::size_t j = 0; j < n; ++j) owner[p.perm[j]] = j;

    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < p.perm[j]; ++k) {
            if (!tight(j, k) || owner[k] < j) continue;
            // BFS from row owner[k] over unfixed rows, looking for a row that can take perm[j].
            const std::size_t target = p.perm[j];
            const std::size_t start = owner[k];
            std::vector<std::size_t> parent_row(n, n);
            std::vector<char> seen(n, 0);
            std::vector<std::size_t> queue{start};
            seen[start] = 1;
            std::size_t found = n;
            for (std::size_t qi = 0; qi < queue.size() && found == n; ++qi) {
                const std::size_t r = queue[qi];
                if (tight(r, target)) {
                    found = r;
                    break;
                }
                for (std::size_t k2 = 0; k2 < n; ++k2) {
                    const std::size_t r2 = owner[k2];
                    if (r2 <= j || seen[r2] || k2 == p.perm[r] || !tight(r, k2)) continue;
                    seen[r2] = 1;
                    parent_row[r2] = r;
                    queue.push_back(r2);
                }
            }
            if (found == n) continue;
            // Rotate: found takes target, each parent takes the column its child held.
            std::size_t r = found;
            std::size_t take = target;
            while (true) {
                const std::size_t held = p.perm[r];
                p.perm[r] = take;
                owner[take] = r;
                if (r == start) break;
                take = held;
                r = parent_row[r];
            }
            p.perm[j] = k;
            owner[k] = j;
            break;
        }
    }
}

}  // namespace

void require_log_distributions(const Matrix& log_probs) {
    for (std::size_t i = 0; i < log_probs.rows(); ++i) {
        auto row = log_probs.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double x : row) s += std::exp(x - mx);
        const double lse = mx + std::log(s);
        if (!std::isfinite(mx) || std::abs(lse) > 1e-6)
            fail(ErrorCode::InvalidArgument, "row " + std::to_string(i) + " is not a log-distribution");
    }
}

MatchingResult solve_assignment(const Matrix& cost, const Tolerance& tol) {
    if (cost.rows() != cost.cols()) fail(ErrorCode::NonSquare, "cost matrix must be square");
    if (!cost.all_finite()) fail(ErrorCode::NonFinite, "cost matrix has non-finite entries");
    const std::size_t n = cost.rows();

    Potentials p = hungarian(cost);
    double scale = 0.0;
    for (double x : cost.data()) scale = std::max(scale, std::abs(x));
    const double tight_tol = tol.allow(scale);

    MatchingResult r;
    r.second_best_gap = second_best_gap(cost, p);
    r.unique = r.second_best_gap > tight_tol;
    if (!r.unique) canonicalize(cost, p, tight_tol);

    r.perm = std::move(p.perm);
    r.duals_u = std::move(p.u);
    r.duals_v = std::move(p.v);
    r.M = Matrix(n, n);
    r.z_star = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        r.M(j, r.perm[j]) = 1.0;
        r.z_star += cost(j, r.perm[j]);
    }
    return r;
}

GenGrad assignment_gengrad(const MatchingResult& result) {
    GenGrad gg;
    gg.d_c = result.M.data();
    gg.unique = result.unique;
    return gg;
}

SolverOutcome as_outcome(const MatchingResult& result) {
    SolverOutcome out;
    out.z_star = result.z_star;
    out.u_star = result.M.data();
    Vector v = result.duals_u;
    v.insert(v.end(), result.duals_v.begin(), result.duals_v.end());
    out.v_star = std::move(v);
    out.unique = result.unique;
    return out;
}

Matrix matching_cost(const Matrix& log_probs, const Matrix& labels) {
    if (log_probs.cols() != labels.cols())
        fail(ErrorCode::DimensionMismatch, "log-probabilities and labels disagree on class count");
    const double floor = std::log(kProbFloor);
    Matrix C(log_probs.rows(), labels.rows());
    for (std::size_t j = 0; j < log_probs.rows(); ++j)
        for (std::size_t k = 0; k < labels.rows(); ++k) {
            double s = 0.0;
            for (std::size_t c = 0; c < labels.cols(); ++c)
                s += std::max(log_probs(j, c), floor) * labels(k, c);
            C(j, k) = -s;
        }
    return C;
}

MatchingLoss matching_loss(const Matrix& log_probs, const Matrix& labels, const Tolerance& tol) {
    if (log_probs.rows() != labels.rows())
        fail(ErrorCode::DimensionMismatch, "bag needs as many labels as samples");
    require_log_distributions(log_probs);

    MatchingLoss out;
    out.matching = solve_assignment(matching_cost(log_probs, labels), tol);
    out.loss = out.matching.z_star;
    out.grad_log_probs = Matrix(log_probs.rows(), log_probs.cols());
    for (std::size_t j = 0; j < log_probs.rows(); ++j) {
        auto y = labels.row(out.matching.perm[j]);
        for (std::size_t c = 0; c < log_probs.cols(); ++c) out.grad_log_probs(j, c) = -y[c];
    }
    return out;
}

bool filter_bag(std::span<const int> labels, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        fail(ErrorCode::InvalidArgument, "bag threshold must lie in (0, 1]");
    if (labels.empty()) return false;
    const std::set<int> distinct(labels.begin(), labels.end());
    return static_cast<double>(distinct.size()) >= threshold * static_cast<double>(labels.size()) - 1e-12;
}

bool filter_bag(const Matrix& one_hot_labels, double threshold) {
    std::vector<int> cls(one_hot_labels.rows());
    for (std::size_t i = 0; i < one_hot_labels.rows(); ++i) {
        auto row = one_hot_labels.row(i);
        cls[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return filter_bag(cls, threshold);
}

}  // namespace lincomb

namespace lincomb {

CombLayer matching_layer(const Matrix& labels, const Tolerance& tol) {
    const std::size_t b = labels.rows(), d = labels.cols();
    CombLayer layer;
    layer.efficiency = EfficiencyClass::primal();
    layer.input_dim = b * d;
    layer.solve = [labels, tol, b, d](std::span<const double> w) {
        Matrix logp(b, d);
        std::copy(w.begin(), w.end(), logp.data().begin());
        return as_outcome(solve_assignment(matching_cost(logp, labels), tol));
    };
    layer.chain = [labels, b, d](std::span<const double>) {
        SparseJacobian J(b * b, b * d);
        for (std::size_t j = 0; j < b; ++j)
            for (std::size_t k = 0; k < b; ++k)
                for (std::size_t c = 0; c < d; ++c)
                    if (labels(k, c) != 0.0) J.add(j * b + k, j * d + c, -labels(k, c));
        return ChainMaps{std::move(J), std::nullopt, std::nullopt};
    };
    return layer;
}

}  // namespace lincomb
