#include "lincomb/lpref.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lincomb {
namespace {

double max_abs(const LPSpec& s) {
    double m = 0.0;
    for (double x : s.c) m = std::max(m, std::abs(x));
    for (double x : s.b) m = std::max(m, std::abs(x));
    for (double x : s.A.data()) m = std::max(m, std::abs(x));
    return m;
}

// Tableau rows hold B^-1 [A | I | b]; the identity block starts as the
// artificial columns, so it carries B^-1 throughout.
class Tableau {
public:
    Tableau(const LPSpec& spec, double pivot_tol)
        : m_(spec.num_constraints()), p_(spec.num_vars()), width_(p_ + m_ + 1),
          t_(m_, width_), basis_(m_), sign_(m_, 1.0), tol_(pivot_tol) {
        for (std::size_t i = 0; i < m_; ++i) {
            sign_[i] = spec.b[i] < 0.0 ? -1.0 : 1.0;
            for (std::size_t j = 0; j < p_; ++j) t_(i, j) = sign_[i] * spec.A(i, j);
            t_(i, p_ + i) = 1.0;
            t_(i, width_ - 1) = sign_[i] * spec.b[i];
            basis_[i] = p_ + i;
        }
    }

    // Runs Bland's rule on `cost` (length p + m), letting only columns < enter_limit enter.
    // Returns false if unbounded.
    bool optimize(const Vector& cost, std::size_t enter_limit) {
        const std::size_t cap = 5000;
        for (std::size_t iter = 0; iter < cap; ++iter) {
            std::size_t enter = enter_limit;
            for (std::size_t j = 0; j < enter_limit; ++j) {
                if (is_basic(j)) continue;
                if (reduced_cost(cost, j) < -tol_) {
                    enter = j;
                    break;
                }
            }
            if (enter == enter_limit) return true;

            std::size_t leave = m_;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < m_; ++i) {
                if (t_(i, enter) <= tol_) continue;
                const double ratio = t_(i, width_ - 1) / t_(i, enter);
                const double tie = 1e-12 * (1.0 + std::abs(ratio));
                const bool better = leave == m_ || ratio < best - tie;
                const bool tied_lower_index = !better && ratio <= best + tie && basis_[i] < basis_[leave];
                if (better || tied_lower_index) {
                    best = std::min(best, ratio);
                    leave = i;
                }
            }
            if (leave == m_) return false;
            pivot(leave, enter);
        }
        fail(ErrorCode::SolverFailure, "simplex iteration cap reached");
    }

    // Pivots artificials out of the basis where an original column allows it.
    void drive_out_artificials() {
        for (std::size_t i = 0; i < m_; ++i) {
            if (basis_[i] < p_) continue;
            for (std::size_t j = 0; j < p_; ++j) {
                if (!is_basic(j) && std::abs(t_(i, j)) > tol_) {
                    pivot(i, j);
                    break;
                }
            }
        }
    }

    double reduced_cost(const Vector& cost, std::size_t j) const {
        double r = cost[j];
        for (std::size_t i = 0; i < m_; ++i) r -= cost[basis_[i]] * t_(i, j);
        return r;
    }

    double objective(const Vector& cost) const {
        double z = 0.0;
        for (std::size_t i = 0; i < m_; ++i) z += cost[basis_[i]] * t_(i, width_ - 1);
        return z;
    }

    bool is_basic(std::size_t j) const {
        return std::find(basis_.begin(), basis_.end(), j) != basis_.end();
    }

    Vector primal() const {
        Vector u(p_, 0.0);
        for (std::size_t i = 0; i < m_; ++i)
            if (basis_[i] < p_) u[basis_[i]] = std::max(0.0, t_(i, width_ - 1));
        return u;
    }

    // v^T = c_B^T B^-1, mapped back through the row sign flips.
    Vector dual(const Vector& cost) const {
        Vector v(m_, 0.0);
        for (std::size_t k = 0; k < m_; ++k) {
            double y = 0.0;
            for (std::size_t i = 0; i < m_; ++i) y += cost[basis_[i]] * t_(i, p_ + k);
            v[k] = sign_[k] * y;
        }
        return v;
    }

    const std::vector<std::size_t>& basis() const { return basis_; }
    double rhs(std::size_t i) const { return t_(i, width_ - 1); }
    std::size_t vars() const { return p_; }

private:
    void pivot(std::size_t r, std::size_t c) {
        const double pv = t_(r, c);
        for (std::size_t j = 0; j < width_; ++j) t_(r, j) /= pv;
        for (std::size_t i = 0; i < m_; ++i) {
            if (i == r) continue;
            const double f = t_(i, c);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < width_; ++j) t_(i, j) -= f * t_(r, j);
            t_(i, c) = 0.0;
        }
        basis_[r] = c;
    }

    std::size_t m_, p_, width_;
    Matrix t_;
    std::vector<std::size_t> basis_;
    Vector sign_;
    double tol_;
};

// Gauss-Jordan on [A | b]; returns the independent rows.  Throws Infeasible if
// a dependent row is inconsistent.
LPSpec remove_redundant_rows(const LPSpec& spec, double tol) {
    const std::size_t m = spec.num_constraints(), p = spec.num_vars();
    Matrix aug(m, p + 1);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < p; ++j) aug(i, j) = spec.A(i, j);
        aug(i, p) = spec.b[i];
    }
    std::size_t rank = 0;
    for (std::size_t col = 0; col < p && rank < m; ++col) {
        std::size_t piv = rank;
        for (std::size_t i = rank; i < m; ++i)
            if (std::abs(aug(i, col)) > std::abs(aug(piv, col))) piv = i;
        if (std::abs(aug(piv, col)) <= tol) continue;
        for (std::size_t j = 0; j <= p; ++j) std::swap(aug(rank, j), aug(piv, j));
        const double pv = aug(rank, col);
        for (std::size_t j = 0; j <= p; ++j) aug(rank, j) /= pv;
        for (std::size_t i = 0; i < m; ++i) {
            if (i == rank) continue;
            const double f = aug(i, col);
            for (std::size_t j = 0; j <= p; ++j) aug(i, j) -= f * aug(rank, j);
        }
        ++rank;
    }
    for (std::size_t i = rank; i < m; ++i)
        if (std::abs(aug(i, p)) > tol) fail(ErrorCode::Infeasible, "infeasible: inconsistent equality constraints");

    LPSpec out{spec.c, Matrix(rank, p), Vector(rank)};
    for (std::size_t i = 0; i < rank; ++i) {
        for (std::size_t j = 0; j < p; ++j) out.A(i, j) = aug(i, j);
        out.b[i] = aug(i, p);
    }
    return out;
}

// Solves the square system B x = rhs with partial pivoting; false if singular.
bool solve_square(Matrix B, Vector rhs, Vector& x, double tol) {
    const std::size_t n = B.rows();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t i = col; i < n; ++i)
            if (std::abs(B(i, col)) > std::abs(B(piv, col))) piv = i;
        if (std::abs(B(piv, col)) <= tol) return false;
        for (std::size_t j = 0; j < n; ++j) std::swap(B(col, j), B(piv, j));
        std::swap(rhs[col], rhs[piv]);
        for (std::size_t i = col + 1; i < n; ++i) {
            const double f = B(i, col) / B(col, col);
            for (std::size_t j = col; j < n; ++j) B(i, j) -= f * B(col, j);
            rhs[i] -= f * rhs[col];
        }
    }
    x.assign(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = rhs[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= B(i, j) * x[j];
        x[i] = s / B(i, i);
    }
    return true;
}

Vector unit_direction(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vector d(n);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : d) {
            x = g(rng);
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : d) x /= norm;
    return d;
}

FDReport compare(Vector direction, double analytic, double numeric, double rtol, double z) {
    FDReport r;
    r.direction = std::move(direction);
    r.analytic = analytic;
    r.numeric = numeric;
    r.abs_error = std::abs(analytic - numeric);
    const double allow = rtol * std::max(std::abs(analytic), std::abs(numeric)) + 1e-9 * (1.0 + std::abs(z));
    r.pass = std::isfinite(numeric) && r.abs_error <= allow;
    return r;
}

}  // namespace

SolverOutcome solve_lp(const LPSpec& spec, const Tolerance& tol) {
    spec.validate();
    const std::size_t p = spec.num_vars(), m = spec.num_constraints();
    if (p > kMaxLpVars || m > kMaxLpRows)
        fail(ErrorCode::InvalidArgument, "LP exceeds the reference solver caps (p <= 20, m <= 12)");
    const double scale = std::max(1.0, max_abs(spec));
    const double eps = tol.allow(scale);

    Tableau tab(spec, 1e-11 * scale);

    Vector phase1(p + m, 0.0);
    std::fill(phase1.begin() + static_cast<std::ptrdiff_t>(p), phase1.end(), 1.0);
    tab.optimize(phase1, p + m);
    if (tab.objective(phase1) > eps) fail(ErrorCode::Infeasible, "infeasible");
    tab.drive_out_artificials();

    Vector cost(p + m, 0.0);
    std::copy(spec.c.begin(), spec.c.end(), cost.begin());
    if (!tab.optimize(cost, p)) fail(ErrorCode::Unbounded, "unbounded");

    SolverOutcome out;
    out.u_star = tab.primal();
    out.v_star = tab.dual(cost);
    out.z_star = dot(spec.c, *out.u_star);

    bool primal_unique = true;
    for (std::size_t j = 0; j < p; ++j)
        if (!tab.is_basic(j) && tab.reduced_cost(cost, j) <= eps) primal_unique = false;
    bool dual_unique = true;
    for (std::size_t i = 0; i < m; ++i)
        if (tab.basis()[i] >= p || tab.rhs(i) <= eps) dual_unique = false;
    out.unique = primal_unique && dual_unique;
    return out;
}

double VertexSet::min_objective() const {
    double z = std::numeric_limits<double>::infinity();
    for (const auto& v : vertices) z = std::min(z, v.objective);
    return z;
}

VertexSet enumerate_vertices(const LPSpec& spec, const Tolerance& tol) {
    spec.validate();
    const double scale = std::max(1.0, max_abs(spec));
    const LPSpec red = remove_redundant_rows(spec, 1e-11 * scale);
    const std::size_t p = red.num_vars(), r = red.num_constraints();

    VertexSet set;
    std::vector<char> pick(p, 0);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(r), 1);
    // prev_permutation walks all r-subsets of the columns.
    do {
        std::vector<std::size_t> cols;
        for (std::size_t j = 0; j < p; ++j)
            if (pick[j]) cols.push_back(j);
        Matrix B(r, r);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t k = 0; k < r; ++k) B(i, k) = red.A(i, cols[k]);
        Vector x;
        if (!solve_square(B, red.b, x, 1e-11 * scale)) continue;
        if (std::any_of(x.begin(), x.end(), [&](double xi) { return xi < -tol.allow(scale); })) continue;

        Vertex v;
        v.basis = cols;
        v.u.assign(p, 0.0);
        for (std::size_t k = 0; k < r; ++k) v.u[cols[k]] = std::max(0.0, x[k]);
        v.objective = dot(spec.c, v.u);
        const bool seen = std::any_of(set.vertices.begin(), set.vertices.end(), [&](const Vertex& w) {
            for (std::size_t j = 0; j < p; ++j)
                if (std::abs(w.u[j] - v.u[j]) > tol.allow(scale)) return false;
            return true;
        });
        if (!seen) set.vertices.push_back(std::move(v));
    } while (std::prev_permutation(pick.begin(), pick.end()));

    if (set.vertices.empty()) fail(ErrorCode::Infeasible, "infeasible: no basic feasible solution");
    return set;
}

Theorem1Report check_theorem1(const LPSpec& spec, const SolverOutcome& outcome, const Theorem1Options& opts) {
    if (!outcome.unique || !outcome.u_star || !outcome.v_star)
        fail(ErrorCode::DegenerateInstance, "degenerate instance: optimum not unique, check skipped");
    const Vector& u = *outcome.u_star;
    const Vector& v = *outcome.v_star;
    const std::size_t p = spec.num_vars(), m = spec.num_constraints();

    // Basis margin: smallest positive primal value and smallest reduced cost off the support.
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < p; ++j) {
        if (u[j] > 0.0) {
            margin = std::min(margin, u[j]);
        } else {
            double r = spec.c[j];
            for (std::size_t i = 0; i < m; ++i) r -= v[i] * spec.A(i, j);
            margin = std::min(margin, r);
        }
    }
    const double scale = std::max(1.0, max_abs(spec));
    if (margin <= 100.0 * opts.eps * scale)
        fail(ErrorCode::DegenerateInstance, "degenerate instance: basis margin below the step size");

    std::mt19937_64 rng(opts.seed);
    const double z0 = outcome.z_star;
    // Central quotient; z* is smooth inside the basis margin checked above.
    auto quotient = [&](const LPSpec& plus, const LPSpec& minus) {
        try {
            return (solve_lp(plus).z_star - solve_lp(minus).z_star) / (2.0 * opts.eps);
        } catch (const Error&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };

    Theorem1Report rep;
    {
        Vector d = unit_direction(rng, p);
        LPSpec s = spec, t = spec;
        for (std::size_t j = 0; j < p; ++j) {
            s.c[j] += opts.eps * d[j];
            t.c[j] -= opts.eps * d[j];
        }
        const double num = quotient(s, t);
        rep.c_block = compare(d, dot(u, d), num, opts.rtol, z0);
    }
    {
        Vector d = unit_direction(rng, m);
        LPSpec s = spec, t = spec;
        for (std::size_t i = 0; i < m; ++i) {
            s.b[i] += opts.eps * d[i];
            t.b[i] -= opts.eps * d[i];
        }
        const double num = quotient(s, t);
        rep.b_block = compare(d, dot(v, d), num, opts.rtol, z0);
    }
    {
        Vector d = unit_direction(rng, m * p);
        LPSpec s = spec, t = spec;
        double analytic = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < p; ++j) {
                s.A(i, j) += opts.eps * d[i * p + j];
                t.A(i, j) -= opts.eps * d[i * p + j];
                analytic += -v[i] * u[j] * d[i * p + j];
            }
        const double num = quotient(s, t);
        rep.A_block = compare(d, analytic, num, opts.rtol, z0);
    }
    return rep;
}

LPSpec random_lp(std::mt19937_64& rng, std::size_t vars, std::size_t rows) {
    std::uniform_real_distribution<double> a(-1.0, 1.0), pos(0.5, 1.5);
    LPSpec s{Vector(vars), Matrix(rows, vars), Vector(rows, 0.0)};
    Vector u0(vars);
    for (double& x : u0) x = pos(rng);
    for (double& x : s.c) x = pos(rng);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < vars; ++j) {
            s.A(i, j) = a(rng);
            s.b[i] += s.A(i, j) * u0[j];
        }
    return s;
}

PermutationOracle enumerate_permutations(const Matrix& cost, const Tolerance& tol) {
    if (cost.rows() != cost.cols()) fail(ErrorCode::NonSquare, "cost matrix must be square");
    if (cost.rows() > 8) fail(ErrorCode::InvalidArgument, "permutation oracle limited to b <= 8");
    const std::size_t n = cost.rows();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);

    std::vector<std::pair<double, std::vector<std::size_t>>> all;
    double best = std::numeric_limits<double>::infinity();
    do {
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += cost(j, perm[j]);
        best = std::min(best, z);
        all.emplace_back(z, perm);
    } while (std::next_permutation(perm.begin(), perm.end()));

    PermutationOracle out;
    out.z_min = best;
    for (auto& [z, pm] : all)
        if (z <= best + tol.allow(std::abs(best))) out.argmin.push_back(std::move(pm));
    return out;
}

PathOracle enumerate_paths(const AlignGrid& grid, const Tolerance& tol) {
    const std::size_t P = grid.match.rows(), T = grid.match.cols();
    if (P == 0 || T == 0) fail(ErrorCode::InvalidArgument, "path oracle needs a non-empty grid");
    if (P > 7 || T > 7) fail(ErrorCode::InvalidArgument, "path oracle limited to 7 x 7 grids");

    auto cell = [&](std::size_t i, std::size_t k) {
        return grid.match(i < P ? i : P - 1, k < T ? k : T - 1);
    };

    // First pass: minimum and count.  Second pass: collect the optimal paths.
    PathOracle out;
    out.z_min = std::numeric_limits<double>::infinity();
    std::vector<Move> moves;
    double cutoff = 0.0;
    bool collect = false;
    auto walk = [&](auto&& self, std::size_t i, std::size_t k, double acc) -> void {
        if (i == P && k == T) {
            if (!collect) {
                ++out.paths;
                out.z_min = std::min(out.z_min, acc);
            } else if (acc <= cutoff) {
                out.argmin.push_back(moves);
            }
            return;
        }
        if (i < P && k < T) {
            moves.push_back(Move::Diag);
            self(self, i + 1, k + 1, acc + grid.match(i, k));
            moves.pop_back();
        }
        if (k < T) {
            moves.push_back(Move::GapPred);
            self(self, i, k + 1, acc + grid.gamma * cell(i, k));
            moves.pop_back();
        }
        if (i < P) {
            moves.push_back(Move::GapTarg);
            self(self, i + 1, k, acc + grid.gamma * cell(i, k));
            moves.pop_back();
        }
    };
    walk(walk, 0, 0, 0.0);
    cutoff = out.z_min + tol.allow(std::abs(out.z_min));
    collect = true;
    walk(walk, 0, 0, 0.0);
    return out;
}

}  // namespace lincomb
