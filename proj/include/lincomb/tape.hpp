#pragma once

// Minimal reverse-mode automatic differentiation over dense 2-D tensors.
//
// A Tape owns every node created during one forward pass.  Values are
// immutable once recorded; gradients accumulate additively when a node feeds
// several consumers.  Combinatorial solvers enter the graph through
// comb_node, whose backward pass is the generalized gradient assembled from
// the solver's witnesses.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lincomb/core.hpp"
#include "lincomb/matrix.hpp"

namespace lincomb::ad {

class Tape;

/// Handle to a tape node.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    const Matrix& grad() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    double scalar() const;

    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf without gradient.
    Var constant(Matrix value);
    /// Leaf whose gradient is retained.
    Var variable(Matrix value);
    /// Interior node; `needs_grad` is true when any parent needs it.
    Var record(Matrix value, std::initializer_list<Var> parents, Backward backward);
    Var record(Matrix value, std::span<const Var> parents, Backward backward);

    /// Seeds d(root)/d(root) = seed (root must be 1x1) and runs all closures in reverse.
    void backward(Var root, double seed = 1.0);

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    /// Zero matrix of the right shape if nothing reached the node.
    const Matrix& grad(std::size_t id) const;
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

    /// grad(id) += g, allocating on first use.  No-op for nodes without gradient.
    void accumulate(std::size_t id, const Matrix& g);
    Matrix& grad_buffer(std::size_t id);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        Backward backward;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
    mutable Matrix zero_;
};

// Primitive operations.  Shapes must agree exactly except where noted.
Var matmul(Var a, Var b);
Var add(Var a, Var b);  // b may be a 1 x cols row broadcast over a's rows
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var log_softmax(Var a);  // per row
Var softmax(Var a);      // per row
/// Mean over rows of -<logP_i, y_i>.
Var nll(Var log_probs, const Matrix& one_hot);
Var sum(Var a);
Var mean(Var a);
/// Rows of `table` selected by index.
Var embed(Var table, std::span<const std::size_t> indices);
Var concat(Var a, Var b);  // along columns
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var stack_rows(std::span<const Var> parts);

/// Temperature schedule: start, minus `decrement` per epoch, never below `floor`.
struct GumbelConfig {
    double tau = 5.0;
    double start = 5.0;
    double decrement = 0.5;
    double floor = 1.0;

    double tau_at(std::size_t epoch) const;
    void validate() const;
};

/// Forward: one-hot rows at argmax(logits + g), g ~ Gumbel(0,1).
/// Backward: gradient of softmax((logits + g) / tau) (straight-through).
Var gumbel_softmax_st(Var logits, double tau, std::mt19937_64& rng);
Var gumbel_softmax_st(Var logits, const GumbelConfig& cfg, std::mt19937_64& rng);

/// Scalar z* of `layer` run on the flattened value of w; backward applies
/// comb_loss_backward with the witnesses recorded in the forward pass.
Var comb_node(Var w, const CombLayer& layer);

/// One independent layer per consecutive row block of w (block b spans
/// layers[b].input_dim / w.cols() rows).  Returns an n x 1 column of z*.
/// Solves run concurrently when `parallel` is set; results are identical.
Var comb_node_batch(Var w, std::span<const CombLayer> layers, bool parallel = true);

// Parameters and optimizers.

inline constexpr std::uint64_t kDefaultSeed = 20200531;

class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = kDefaultSeed) : seed_(seed), rng_(seed) {}

    void add(const std::string& name, Matrix init);
    /// Uniform(-s, s) with s = sqrt(6 / (rows + cols)).
    void add_glorot(const std::string& name, std::size_t rows, std::size_t cols);
    void add_zeros(const std::string& name, std::size_t rows, std::size_t cols);

    Matrix& at(const std::string& name);
    const Matrix& at(const std::string& name) const;
    std::size_t index_of(const std::string& name) const;

    const std::vector<std::string>& names() const noexcept { return names_; }
    std::size_t size() const noexcept { return values_.size(); }
    Matrix& value(std::size_t i) { return values_[i]; }
    const Matrix& value(std::size_t i) const { return values_[i]; }

    std::uint64_t seed() const noexcept { return seed_; }
    std::mt19937_64& rng() noexcept { return rng_; }

    /// Variables for every parameter, in registration order.
    std::vector<Var> bind(Tape& tape) const;
    /// Gradients of bound variables after tape.backward().
    std::vector<Matrix> gradients(const Tape& tape, std::span<const Var> bound) const;

    // Adam state.
    std::uint64_t adam_steps = 0;
    std::vector<Matrix> first_moment;
    std::vector<Matrix> second_moment;

private:
    std::uint64_t seed_;
    std::mt19937_64 rng_;
    std::vector<std::string> names_;
    std::vector<Matrix> values_;
};

using Gradients = std::vector<Matrix>;

void sgd_step(ParamStore& store, const Gradients& grads, double lr);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void adam_step(ParamStore& store, const Gradients& grads, const AdamConfig& cfg);

/// Text checkpoint:
///   lincomb-checkpoint 1
///   seed <u64>
///   params <n>
///   then per parameter: "<name> <rows> <cols>" and one line of %.17g values.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace lincomb::ad
