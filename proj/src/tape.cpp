#include "lincomb/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "lincomb/batch.hpp"

namespace lincomb::ad {

namespace {

Tape& tape_of(Var a) {
    if (!a.valid()) fail(ErrorCode::InvalidArgument, "operation on an unbound variable");
    return *a.tape();
}

Tape& tape_of(Var a, Var b) {
    if (a.tape() != b.tape()) fail(ErrorCode::InvalidArgument, "operands live on different tapes");
    return tape_of(a);
}

void same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        fail(ErrorCode::ShapeMismatch, std::string(op) + ": shape mismatch");
}

Matrix matmul_raw(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double x = a(i, k);
            if (x == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += x * b(k, j);
        }
    return out;
}

// a^T g
Matrix matmul_tn(const Matrix& a, const Matrix& g) {
    Matrix out(a.cols(), g.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double x = a(i, k);
            if (x == 0.0) continue;
            for (std::size_t j = 0; j < g.cols(); ++j) out(k, j) += x * g(i, j);
        }
    return out;
}

// g b^T
Matrix matmul_nt(const Matrix& g, const Matrix& b) {
    Matrix out(g.rows(), b.rows());
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t k = 0; k < b.rows(); ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j) * b(k, j);
            out(i, k) = s;
        }
    return out;
}

Matrix map(const Matrix& a, auto&& f) {
    Matrix out = a;
    for (double& x : out.data()) x = f(x);
    return out;
}

Matrix row_log_softmax(const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = a.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double x : row) s += std::exp(x - mx);
        const double lse = mx + std::log(s);
        for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = row[c] - lse;
    }
    return out;
}

// Softmax backward: g_in = y * (g - <g, y>) per row.
Matrix softmax_backward(const Matrix& y, const Matrix& g) {
    Matrix out(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
        const double s = dot(g.row(r), y.row(r));
        for (std::size_t c = 0; c < y.cols(); ++c) out(r, c) = y(r, c) * (g(r, c) - s);
    }
    return out;
}

}  // namespace

// Var

const Matrix& Var::value() const { return tape_of(*this).value(id_); }
const Matrix& Var::grad() const { return tape_of(*this).grad(id_); }

double Var::scalar() const {
    const Matrix& v = value();
    if (v.size() != 1) fail(ErrorCode::ShapeMismatch, "scalar() on a non-scalar tensor");
    return v.data()[0];
}

// Tape

Var Tape::constant(Matrix value) {
    if (!value.all_finite()) fail(ErrorCode::NonFinite, "tensor holds non-finite values");
    nodes_.push_back({std::move(value), {}, {}, false});
    return {this, nodes_.size() - 1};
}

Var Tape::variable(Matrix value) {
    if (!value.all_finite()) fail(ErrorCode::NonFinite, "tensor holds non-finite values");
    nodes_.push_back({std::move(value), {}, {}, true});
    return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward backward) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward backward) {
    if (!value.all_finite()) fail(ErrorCode::NonFinite, "operation produced non-finite values");
    bool needs = false;
    for (const Var& p : parents) {
        if (p.tape() != this) fail(ErrorCode::InvalidArgument, "parent lives on a different tape");
        needs = needs || nodes_[p.id()].needs_grad;
    }
    nodes_.push_back({std::move(value), {}, needs ? std::move(backward) : Backward{}, needs});
    return {this, nodes_.size() - 1};
}

void Tape::backward(Var root, double seed) {
    if (root.tape() != this) fail(ErrorCode::InvalidArgument, "backward root lives on a different tape");
    if (nodes_[root.id()].value.size() != 1) fail(ErrorCode::ShapeMismatch, "backward root must be a scalar");
    for (Node& n : nodes_) n.grad = Matrix();
    if (!nodes_[root.id()].needs_grad) return;
    nodes_[root.id()].grad = Matrix(1, 1, seed);
    for (std::size_t id = root.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.backward && !n.grad.empty()) n.backward(*this, id);
    }
}

const Matrix& Tape::grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (!n.grad.empty()) return n.grad;
    zero_ = Matrix(n.value.rows(), n.value.cols());
    return zero_;
}

Matrix& Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
    if (!nodes_[id].needs_grad) return;
    Matrix& buf = grad_buffer(id);
    same_shape(buf, g, "accumulate");
    for (std::size_t i = 0; i < g.size(); ++i) buf.data()[i] += g.data()[i];
}

// Primitives

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    if (a.cols() != b.rows()) fail(ErrorCode::ShapeMismatch, "matmul: inner dimensions differ");
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(matmul_raw(a.value(), b.value()), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        if (tp.needs_grad(ia)) tp.accumulate(ia, matmul_nt(g, tp.value(ib)));
        if (tp.needs_grad(ib)) tp.accumulate(ib, matmul_tn(tp.value(ia), g));
    });
}

Var add(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Matrix& A = a.value();
    const Matrix& B = b.value();
    const bool broadcast = B.rows() == 1 && A.rows() != 1 && B.cols() == A.cols();
    if (!broadcast) same_shape(A, B, "add");
    Matrix out = A;
    for (std::size_t r = 0; r < A.rows(); ++r)
        for (std::size_t c = 0; c < A.cols(); ++c) out(r, c) += broadcast ? B(0, c) : B(r, c);
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(std::move(out), {a, b}, [ia, ib, broadcast](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        tp.accumulate(ia, g);
        if (!broadcast) {
            tp.accumulate(ib, g);
            return;
        }
        Matrix gb(1, g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
        tp.accumulate(ib, gb);
    });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var mul(Var a, Var b) {
    Tape& t = tape_of(a, b);
    same_shape(a.value(), b.value(), "mul");
    Matrix out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        Matrix ga = g, gb = g;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga.data()[i] *= tp.value(ib).data()[i];
            gb.data()[i] *= tp.value(ia).data()[i];
        }
        tp.accumulate(ia, ga);
        tp.accumulate(ib, gb);
    });
}

Var scale(Var a, double s) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.id();
    return t.record(map(a.value(), [s](double x) { return s * x; }), {a}, [ia, s](Tape& tp, std::size_t self) {
        tp.accumulate(ia, map(tp.grad(self), [s](double g) { return s * g; }));
    });
}

Var tanh(Var a) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.id();
    return t.record(map(a.value(), [](double x) { return std::tanh(x); }), {a}, [ia](Tape& tp, std::size_t self) {
        Matrix g = tp.grad(self);
        const Matrix& y = tp.value(self);
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= 1.0 - y.data()[i] * y.data()[i];
        tp.accumulate(ia, g);
    });
}

Var relu(Var a) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.id();
    return t.record(map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }), {a},
                    [ia](Tape& tp, std::size_t self) {
                        Matrix g = tp.grad(self);
                        const Matrix& x = tp.value(ia);
                        for (std::size_t i = 0; i < g.size(); ++i)
                            if (!(x.data()[i] > 0.0)) g.data()[i] = 0.0;
                        tp.accumulate(ia, g);
                    });
}

Var exp(Var a) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.id();
    return t.record(map(a.value(), [](double x) { return std::exp(x); }), {a}, [ia](Tape& tp, std::size_t self) {
        Matrix g = tp.grad(self);
        const Matrix& y = tp.value(self);
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= y.data()[i];
        tp.accumulate(ia, g);
    });
}

Var log_softmax(Var a) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.id();
    return t.record(row_log_softmax(a.value()), {a}, [ia](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        const Matrix& y = tp.value(self);
        Matrix out = g;
        for (std::size_t r = 0; r < g.rows(); ++r) {
            double s = 0.0;
            for (double x : g.row(r)) s += x;
            for (std::size_t c = 0; c < g.cols(); ++c) out(r, c) -= std::exp(y(r, c)) * s;
        }
        tp.accumulate(ia, out);
    });
}

Var softmax(Var a) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.id();
    Matrix y = map(row_log_softmax(a.value()), [](double x) { return std::exp(x); });
    return t.record(std::move(y), {a}, [ia](Tape& tp, std::size_t self) {
        tp.accumulate(ia, softmax_backward(tp.value(self), tp.grad(self)));
    });
}

Var nll(Var log_probs, const Matrix& one_hot) {
    Tape& t = tape_of(log_probs);
    same_shape(log_probs.value(), one_hot, "nll");
    const std::size_t n = one_hot.rows();
    if (n == 0) fail(ErrorCode::ShapeMismatch, "nll: empty batch");
    const double loss = -frobenius(log_probs.value(), one_hot) / static_cast<double>(n);
    const std::size_t ia = log_probs.id();
    return t.record(Matrix(1, 1, loss), {log_probs}, [ia, one_hot, n](Tape& tp, std::size_t self) {
        const double g = tp.grad(self)(0, 0) / static_cast<double>(n);
        tp.accumulate(ia, map(one_hot, [g](double y) { return -g * y; }));
    });
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    double s = 0.0;
    for (double x : a.value().data()) s += x;
    const std::size_t ia = a.id();
    return t.record(Matrix(1, 1, s), {a}, [ia](Tape& tp, std::size_t self) {
        const Matrix& x = tp.value(ia);
        tp.accumulate(ia, Matrix(x.rows(), x.cols(), tp.grad(self)(0, 0)));
    });
}

Var mean(Var a) {
    if (a.value().empty()) fail(ErrorCode::ShapeMismatch, "mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var embed(Var table, std::span<const std::size_t> indices) {
    Tape& t = tape_of(table);
    const Matrix& T = table.value();
    Matrix out(indices.size(), T.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= T.rows()) fail(ErrorCode::ShapeMismatch, "embed: index out of range");
        std::copy(T.row(indices[r]).begin(), T.row(indices[r]).end(), out.row(r).begin());
    }
    const std::size_t it = table.id();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    return t.record(std::move(out), {table}, [it, idx](Tape& tp, std::size_t self) {
        if (!tp.needs_grad(it)) return;
        const Matrix& g = tp.grad(self);
        Matrix& buf = tp.grad_buffer(it);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) buf(idx[r], c) += g(r, c);
    });
}

Var concat(Var a, Var b) {
    Tape& t = tape_of(a, b);
    const Matrix& A = a.value();
    const Matrix& B = b.value();
    if (A.rows() != B.rows()) fail(ErrorCode::ShapeMismatch, "concat: row counts differ");
    const std::size_t ca = A.cols(), cb = B.cols();
    Matrix out(A.rows(), ca + cb);
    for (std::size_t r = 0; r < A.rows(); ++r) {
        std::copy(A.row(r).begin(), A.row(r).end(), out.row(r).begin());
        std::copy(B.row(r).begin(), B.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(ca));
    }
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(std::move(out), {a, b}, [ia, ib, ca, cb](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        Matrix ga(g.rows(), ca), gb(g.rows(), cb);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < ca; ++c) ga(r, c) = g(r, c);
            for (std::size_t c = 0; c < cb; ++c) gb(r, c) = g(r, ca + c);
        }
        tp.accumulate(ia, ga);
        tp.accumulate(ib, gb);
    });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
    Tape& t = tape_of(a);
    const Matrix& A = a.value();
    if (begin + count > A.rows()) fail(ErrorCode::ShapeMismatch, "slice_rows: range out of bounds");
    Matrix out(count, A.cols());
    std::copy_n(A.data().begin() + static_cast<std::ptrdiff_t>(begin * A.cols()), count * A.cols(),
                out.data().begin());
    const std::size_t ia = a.id();
    return t.record(std::move(out), {a}, [ia, begin](Tape& tp, std::size_t self) {
        if (!tp.needs_grad(ia)) return;
        const Matrix& g = tp.grad(self);
        Matrix& buf = tp.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) buf.data()[begin * g.cols() + i] += g.data()[i];
    });
}

Var stack_rows(std::span<const Var> parts) {
    if (parts.empty()) fail(ErrorCode::ShapeMismatch, "stack_rows: nothing to stack");
    Tape& t = tape_of(parts[0]);
    const std::size_t cols = parts[0].cols();
    std::size_t rows = 0;
    for (const Var& p : parts) {
        if (p.tape() != &t) fail(ErrorCode::InvalidArgument, "operands live on different tapes");
        if (p.cols() != cols) fail(ErrorCode::ShapeMismatch, "stack_rows: column counts differ");
        rows += p.rows();
    }
    Matrix out(rows, cols);
    std::vector<std::size_t> ids, offsets;
    std::size_t off = 0;
    for (const Var& p : parts) {
        std::copy(p.value().data().begin(), p.value().data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(off * cols));
        ids.push_back(p.id());
        offsets.push_back(off);
        off += p.rows();
    }
    return t.record(std::move(out), parts, [ids, offsets](Tape& tp, std::size_t self) {
        const Matrix& g = tp.grad(self);
        for (std::size_t j = 0; j < ids.size(); ++j) {
            if (!tp.needs_grad(ids[j])) continue;
            Matrix& buf = tp.grad_buffer(ids[j]);
            const double* src = g.data().data() + offsets[j] * g.cols();
            for (std::size_t i = 0; i < buf.size(); ++i) buf.data()[i] += src[i];
        }
    });
}

// Gumbel-softmax

double GumbelConfig::tau_at(std::size_t epoch) const {
    return std::max(floor, start - decrement * static_cast<double>(epoch));
}

void GumbelConfig::validate() const {
    if (!(floor > 0.0) || !(tau >= floor) || !(start >= floor) || !(decrement >= 0.0))
        fail(ErrorCode::InvalidArgument, "gumbel config needs tau >= floor > 0 and a nonnegative decrement");
}

Var gumbel_softmax_st(Var logits, double tau, std::mt19937_64& rng) {
    if (!(tau > 0.0)) fail(ErrorCode::InvalidArgument, "gumbel temperature must be positive");
    Tape& t = tape_of(logits);
    const Matrix& L = logits.value();
    std::uniform_real_distribution<double> unif(std::numeric_limits<double>::min(), 1.0);
    Matrix perturbed(L.rows(), L.cols());
    for (std::size_t i = 0; i < L.size(); ++i) perturbed.data()[i] = (L.data()[i] - std::log(-std::log(unif(rng)))) / tau;

    Matrix soft = map(row_log_softmax(perturbed), [](double x) { return std::exp(x); });
    Matrix hard(L.rows(), L.cols());
    for (std::size_t r = 0; r < L.rows(); ++r) {
        auto row = perturbed.row(r);
        hard(r, static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())) = 1.0;
    }
    const std::size_t ia = logits.id();
    return t.record(std::move(hard), {logits}, [ia, soft = std::move(soft), tau](Tape& tp, std::size_t self) {
        Matrix g = softmax_backward(soft, tp.grad(self));
        for (double& x : g.data()) x /= tau;
        tp.accumulate(ia, g);
    });
}

Var gumbel_softmax_st(Var logits, const GumbelConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    return gumbel_softmax_st(logits, cfg.tau, rng);
}

// Combinatorial nodes

Var comb_node(Var w, const CombLayer& layer) {
    return comb_node_batch(w, std::span<const CombLayer>(&layer, 1), false);
}

Var comb_node_batch(Var w, std::span<const CombLayer> layers, bool parallel) {
    Tape& t = tape_of(w);
    const Matrix& W = w.value();
    std::vector<std::span<const double>> inputs;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const CombLayer& l : layers) {
        if (off + l.input_dim > W.size()) fail(ErrorCode::DimensionMismatch, "comb_node: layers exceed dim(w)");
        inputs.emplace_back(W.data().data() + off, l.input_dim);
        offsets.push_back(off);
        off += l.input_dim;
    }
    if (off != W.size()) fail(ErrorCode::DimensionMismatch, "comb_node: layers do not cover w");

    std::vector<SolverOutcome> outcomes =
        solve_layers(layers, inputs, parallel ? Execution::Parallel : Execution::Serial);

    // Witnesses and chain maps are fixed at the forward point.
    std::vector<GenGrad> gens;
    std::vector<ChainMaps> chains;
    Matrix z(layers.size(), 1);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        z(i, 0) = outcomes[i].z_star;
        gens.push_back(assemble_gengrad(outcomes[i], layers[i].efficiency));
        chains.push_back(layers[i].chain(inputs[i]));
    }
    const std::size_t iw = w.id();
    return t.record(std::move(z), {w},
                    [iw, gens = std::move(gens), chains = std::move(chains), offsets](Tape& tp, std::size_t self) {
                        const Matrix& g = tp.grad(self);
                        Matrix& buf = tp.grad_buffer(iw);
                        for (std::size_t i = 0; i < gens.size(); ++i) {
                            Vector d = comb_loss_backward(gens[i], chains[i], g(i, 0));
                            for (std::size_t j = 0; j < d.size(); ++j) buf.data()[offsets[i] + j] += d[j];
                        }
                    });
}

// ParamStore

void ParamStore::add(const std::string& name, Matrix init) {
    if (std::find(names_.begin(), names_.end(), name) != names_.end())
        fail(ErrorCode::InvalidArgument, "duplicate parameter name: " + name);
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
        fail(ErrorCode::InvalidArgument, "parameter names must be nonempty without whitespace");
    if (!init.all_finite()) fail(ErrorCode::NonFinite, "parameter " + name + " is not finite");
    names_.push_back(name);
    values_.push_back(std::move(init));
}

void ParamStore::add_glorot(const std::string& name, std::size_t rows, std::size_t cols) {
    const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-s, s);
    Matrix m(rows, cols);
    for (double& x : m.data()) x = u(rng_);
    add(name, std::move(m));
}

void ParamStore::add_zeros(const std::string& name, std::size_t rows, std::size_t cols) {
    add(name, Matrix(rows, cols));
}

std::size_t ParamStore::index_of(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) fail(ErrorCode::InvalidArgument, "unknown parameter: " + name);
    return static_cast<std::size_t>(it - names_.begin());
}

Matrix& ParamStore::at(const std::string& name) { return values_[index_of(name)]; }
const Matrix& ParamStore::at(const std::string& name) const { return values_[index_of(name)]; }

std::vector<Var> ParamStore::bind(Tape& tape) const {
    std::vector<Var> out;
    out.reserve(values_.size());
    for (const Matrix& v : values_) out.push_back(tape.variable(v));
    return out;
}

std::vector<Matrix> ParamStore::gradients(const Tape& tape, std::span<const Var> bound) const {
    if (bound.size() != values_.size()) fail(ErrorCode::ShapeMismatch, "gradients: bound set differs from store");
    std::vector<Matrix> out;
    for (const Var& v : bound) out.push_back(tape.grad(v.id()));
    return out;
}

namespace {

void check_grads(const ParamStore& store, const Gradients& grads) {
    if (grads.size() != store.size()) fail(ErrorCode::ShapeMismatch, "one gradient per parameter required");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (grads[i].rows() != store.value(i).rows() || grads[i].cols() != store.value(i).cols())
            fail(ErrorCode::ShapeMismatch, "gradient shape differs for " + store.names()[i]);
}

}  // namespace

void sgd_step(ParamStore& store, const Gradients& grads, double lr) {
    check_grads(store, grads);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        auto& p = store.value(i).data();
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * grads[i].data()[j];
    }
}

void adam_step(ParamStore& store, const Gradients& grads, const AdamConfig& cfg) {
    check_grads(store, grads);
    if (store.first_moment.size() != store.size()) {
        store.first_moment.clear();
        store.second_moment.clear();
        for (std::size_t i = 0; i < store.size(); ++i) {
            store.first_moment.emplace_back(store.value(i).rows(), store.value(i).cols());
            store.second_moment.emplace_back(store.value(i).rows(), store.value(i).cols());
        }
        store.adam_steps = 0;
    }
    ++store.adam_steps;
    const double t = static_cast<double>(store.adam_steps);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        auto& p = store.value(i).data();
        auto& m = store.first_moment[i].data();
        auto& v = store.second_moment[i].data();
        const auto& g = grads[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            p[j] -= cfg.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
        }
    }
}

// Checkpoints

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::InvalidArgument, "cannot write checkpoint " + path.string());
    out << "lincomb-checkpoint 1\n";
    out << "seed " << store.seed() << "\n";
    out << "params " << store.size() << "\n";
    char buf[32];
    for (std::size_t i = 0; i < store.size(); ++i) {
        const Matrix& v = store.value(i);
        out << store.names()[i] << ' ' << v.rows() << ' ' << v.cols() << '\n';
        for (std::size_t j = 0; j < v.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", v.data()[j]);
            out << (j ? " " : "") << buf;
        }
        out << '\n';
    }
    if (!out) fail(ErrorCode::InvalidArgument, "failed writing checkpoint " + path.string());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::InvalidArgument, "cannot read checkpoint " + path.string());
    auto bad = [&](const std::string& why) -> void {
        fail(ErrorCode::InvalidArgument, "malformed checkpoint " + path.string() + ": " + why);
    };
    std::string magic, key;
    int version = 0;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    if (!(in >> magic >> version) || magic != "lincomb-checkpoint") bad("missing header");
    if (version != 1) bad("unsupported version " + std::to_string(version));
    if (!(in >> key >> seed) || key != "seed") bad("missing seed");
    if (!(in >> key >> n) || key != "params") bad("missing parameter count");
    ParamStore store(seed);
    for (std::size_t i = 0; i < n; ++i) {
        std::string name;
        std::size_t r = 0, c = 0;
        if (!(in >> name >> r >> c)) bad("truncated parameter header");
        Matrix m(r, c);
        for (double& x : m.data()) {
            std::string tok;
            if (!(in >> tok)) bad("truncated values for " + name);
            char* end = nullptr;
            x = std::strtod(tok.c_str(), &end);
            if (end != tok.c_str() + tok.size()) bad("bad number in " + name);
        }
        store.add(name, std::move(m));
    }
    return store;
}

}  // namespace lincomb::ad
