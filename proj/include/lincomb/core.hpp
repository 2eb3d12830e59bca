#pragma once

// Shared domain types for combinatorial losses: the LP triple, solver
// outcomes with primal/dual witnesses, generalized gradients assembled from
// those witnesses, and the backward composition through the maps w -> (c,b,A).

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "lincomb/error.hpp"
#include "lincomb/matrix.hpp"

namespace lincomb {

struct Tolerance {
    double abs = 1e-9;
    double rel = 1e-9;

    double allow(double scale) const noexcept { return abs + rel * scale; }
    bool close(double a, double b) const noexcept;
};

/// min c^T u  s.t.  A u = b,  u >= 0.
struct LPSpec {
    Vector c;
    Matrix A;
    Vector b;

    std::size_t num_vars() const noexcept { return c.size(); }
    std::size_t num_constraints() const noexcept { return b.size(); }

    /// Throws DimensionMismatch or NonFinite.
    void validate() const;
};

struct SolverOutcome {
    double z_star = 0.0;
    std::optional<Vector> u_star;
    std::optional<Vector> v_star;
    bool unique = false;
};

/// Strong duality, primal feasibility and u >= 0 for an outcome of `spec`.
bool certifies(const LPSpec& spec, const SolverOutcome& outcome, const Tolerance& tol = {});

enum class Efficiency { Primal, Dual, PrimalDual };

/// Which LP blocks are functions of the parameter vector w.
class EfficiencyClass {
public:
    static EfficiencyClass primal() { return {Efficiency::Primal, true, false, false}; }
    static EfficiencyClass dual() { return {Efficiency::Dual, false, true, false}; }
    static EfficiencyClass primal_dual(bool depends_c, bool depends_b, bool depends_A) {
        return {Efficiency::PrimalDual, depends_c, depends_b, depends_A};
    }

    Efficiency kind() const noexcept { return kind_; }
    bool depends_c() const noexcept { return c_; }
    bool depends_b() const noexcept { return b_; }
    bool depends_A() const noexcept { return A_; }

    bool needs_primal() const noexcept { return kind_ != Efficiency::Dual; }
    bool needs_dual() const noexcept { return kind_ != Efficiency::Primal; }

private:
    EfficiencyClass(Efficiency k, bool c, bool b, bool A) : kind_(k), c_(c), b_(b), A_(A) {}

    Efficiency kind_;
    bool c_;
    bool b_;
    bool A_;
};

/// One element of each generalized-gradient set, for the blocks that exist.
struct GenGrad {
    std::optional<Vector> d_c;  // element of dz*/dc = U*
    std::optional<Vector> d_b;  // element of dz*/db = V*
    std::optional<Matrix> d_A;  // -v* u*^T
    bool unique = false;
};

GenGrad assemble_gengrad(const SolverOutcome& outcome, const EfficiencyClass& cls);

/// Sparse linear operator J (rows = target block entries, cols = entries of w),
/// evaluated at the current w.  For the A block, rows index A row-major.
class SparseJacobian {
public:
    struct Entry {
        std::size_t row;
        std::size_t col;
        double value;
    };

    SparseJacobian(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

    static SparseJacobian identity(std::size_t n);
    static SparseJacobian scaled_identity(std::size_t n, double s);

    void add(std::size_t row, std::size_t col, double value);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    /// out += scale * J^T y
    void accumulate_transpose(std::span<const double> y, double scale, std::span<double> out) const;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<Entry> entries_;
};

struct ChainMaps {
    std::optional<SparseJacobian> dc_dw;
    std::optional<SparseJacobian> db_dw;
    std::optional<SparseJacobian> dA_dw;
};

/// upstream * ( J_c^T u* + J_b^T v* - J_A^T vec(v* u*^T) ).
/// The dual witness composes with db/dw, never with dc/dw.
Vector comb_loss_backward(const GenGrad& gg, const ChainMaps& chain, double upstream);

/// A combinatorial layer: efficiency declaration, a solver run on w, and the
/// chain maps at w.  Counts solver invocations.
struct CombLayer {
    EfficiencyClass efficiency = EfficiencyClass::primal();
    std::size_t input_dim = 0;
    std::function<SolverOutcome(std::span<const double> w)> solve;
    std::function<ChainMaps(std::span<const double> w)> chain;
    std::shared_ptr<std::atomic<std::uint64_t>> invocations =
        std::make_shared<std::atomic<std::uint64_t>>(0);

    SolverOutcome run(std::span<const double> w) const;
};

enum class Curvature {
    Concave,  // z* as a min of functions linear in the block (c or cost matrix)
    Convex,   // z* as a function of b
};

struct SupergradientReport {
    bool pass = true;
    double worst_violation = 0.0;
    std::size_t trials = 0;
};

/// Samples w' uniformly in the cube of half-width `radius` around w and checks
/// f(w') <= f(w) + g.(w'-w) (concave) or >= (convex).
SupergradientReport supergradient_check(const std::function<double(std::span<const double>)>& f,
                                        std::span<const double> w, std::span<const double> g,
                                        std::size_t trials, double radius, Curvature curvature,
                                        std::uint64_t seed, const Tolerance& tol = {});

}  // namespace lincomb
