#include "lincomb/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace lincomb {

bool Tolerance::close(double a, double b) const noexcept {
    return std::abs(a - b) <= allow(std::max(std::abs(a), std::abs(b)));
}

void LPSpec::validate() const {
    if (A.rows() != b.size() || A.cols() != c.size())
        fail(ErrorCode::DimensionMismatch, "LPSpec: A must be |b| x |c|");
    auto finite = [](double x) { return std::isfinite(x); };
    if (!std::all_of(c.begin(), c.end(), finite) || !std::all_of(b.begin(), b.end(), finite) ||
        !A.all_finite())
        fail(ErrorCode::NonFinite, "LPSpec: non-finite entry");
}

bool certifies(const LPSpec& spec, const SolverOutcome& outcome, const Tolerance& tol) {
    if (outcome.u_star) {
        const Vector& u = *outcome.u_star;
        if (u.size() != spec.num_vars()) return false;
        for (double x : u)
            if (x < -tol.abs) return false;
        for (std::size_t i = 0; i < spec.num_constraints(); ++i) {
            double r = dot(spec.A.row(i), u);
            if (!tol.close(r, spec.b[i])) return false;
        }
        if (!tol.close(dot(spec.c, u), outcome.z_star)) return false;
    }
    if (outcome.v_star) {
        if (outcome.v_star->size() != spec.num_constraints()) return false;
        if (!tol.close(dot(spec.b, *outcome.v_star), outcome.z_star)) return false;
    }
    return true;
}

GenGrad assemble_gengrad(const SolverOutcome& outcome, const EfficiencyClass& cls) {
    if (cls.needs_primal() && !outcome.u_star)
        fail(ErrorCode::MissingWitness, "primal witness u* required");
    if (cls.needs_dual() && !outcome.v_star)
        fail(ErrorCode::MissingWitness, "dual witness v* required");

    GenGrad gg;
    gg.unique = outcome.unique;
    if (cls.depends_c()) gg.d_c = *outcome.u_star;
    if (cls.depends_b()) gg.d_b = *outcome.v_star;
    if (cls.depends_A()) {
        const Vector& u = *outcome.u_star;
        const Vector& v = *outcome.v_star;
        Matrix dA(v.size(), u.size());
        for (std::size_t i = 0; i < v.size(); ++i)
            for (std::size_t j = 0; j < u.size(); ++j) dA(i, j) = -v[i] * u[j];
        gg.d_A = std::move(dA);
    }
    return gg;
}

SparseJacobian SparseJacobian::identity(std::size_t n) { return scaled_identity(n, 1.0); }

SparseJacobian SparseJacobian::scaled_identity(std::size_t n, double s) {
    SparseJacobian j(n, n);
    for (std::size_t i = 0; i < n; ++i) j.add(i, i, s);
    return j;
}

void SparseJacobian::add(std::size_t row, std::size_t col, double value) {
    if (row >= rows_ || col >= cols_) fail(ErrorCode::DimensionMismatch, "SparseJacobian: index out of range");
    entries_.push_back({row, col, value});
}

void SparseJacobian::accumulate_transpose(std::span<const double> y, double scale,
                                          std::span<double> out) const {
    if (y.size() != rows_ || out.size() != cols_)
        fail(ErrorCode::DimensionMismatch, "SparseJacobian: operand size mismatch");
    for (const Entry& e : entries_) out[e.col] += scale * e.value * y[e.row];
}

namespace {

std::size_t input_dim(const ChainMaps& chain) {
    std::optional<std::size_t> n;
    for (const auto* j : {&chain.dc_dw, &chain.db_dw, &chain.dA_dw}) {
        if (!*j) continue;
        if (n && *n != (*j)->cols()) fail(ErrorCode::DimensionMismatch, "chain maps disagree on dim(w)");
        n = (*j)->cols();
    }
    if (!n) fail(ErrorCode::DimensionMismatch, "no chain map supplied");
    return *n;
}

}  // namespace

Vector comb_loss_backward(const GenGrad& gg, const ChainMaps& chain, double upstream) {
    Vector out(input_dim(chain), 0.0);
    if (chain.dc_dw) {
        if (!gg.d_c) fail(ErrorCode::DimensionMismatch, "dc/dw supplied without d_c");
        chain.dc_dw->accumulate_transpose(*gg.d_c, upstream, out);
    }
    if (chain.db_dw) {
        if (!gg.d_b) fail(ErrorCode::DimensionMismatch, "db/dw supplied without d_b");
        chain.db_dw->accumulate_transpose(*gg.d_b, upstream, out);
    }
    if (chain.dA_dw) {
        if (!gg.d_A) fail(ErrorCode::DimensionMismatch, "dA/dw supplied without d_A");
        // d_A already carries the minus sign of -v u^T.
        chain.dA_dw->accumulate_transpose(gg.d_A->data(), upstream, out);
    }
    return out;
}

SolverOutcome CombLayer::run(std::span<const double> w) const {
    if (w.size() != input_dim) fail(ErrorCode::DimensionMismatch, "CombLayer: dim(w) mismatch");
    invocations->fetch_add(1, std::memory_order_relaxed);
    return solve(w);
}

SupergradientReport supergradient_check(const std::function<double(std::span<const double>)>& f,
                                        std::span<const double> w, std::span<const double> g,
                                        std::size_t trials, double radius, Curvature curvature,
                                        std::uint64_t seed, const Tolerance& tol) {
    if (w.size() != g.size()) fail(ErrorCode::DimensionMismatch, "supergradient_check: |g| != |w|");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> step(-radius, radius);

    const double f0 = f(w);
    SupergradientReport report;
    report.trials = trials;
    report.worst_violation = -std::numeric_limits<double>::infinity();
    Vector w2(w.size());
    for (std::size_t t = 0; t < trials; ++t) {
        double lin = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            double d = step(rng);
            w2[i] = w[i] + d;
            lin += g[i] * d;
        }
        const double f1 = f(w2);
        const double violation = curvature == Curvature::Concave ? f1 - (f0 + lin) : (f0 + lin) - f1;
        report.worst_violation = std::max(report.worst_violation, violation);
        if (violation > tol.allow(std::max(std::abs(f0), std::abs(f1)))) report.pass = false;
    }
    if (trials == 0) report.worst_violation = 0.0;
    return report;
}

}  // namespace lincomb
