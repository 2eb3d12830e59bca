#include "lincomb/batch.hpp"

#include <exception>

namespace lincomb {

namespace {

// Runs body(i) for i < n; captured exceptions are rethrown for the lowest index.
template <class Body>
void for_each_index(std::size_t n, Execution exec, Body&& body) {
    std::vector<std::exception_ptr> errors(n);
    const auto guarded = [&](std::size_t i) {
        try {
            body(i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) guarded(static_cast<std::size_t>(i));
    } else {
        for (std::size_t i = 0; i < n; ++i) guarded(i);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

void finish(BatchLoss& out) {
    out.total = 0.0;
    for (double l : out.losses) out.total += l;
}

}  // namespace

std::vector<SolverOutcome> solve_layers(std::span<const CombLayer> layers,
                                        std::span<const std::span<const double>> inputs, Execution exec) {
    if (layers.size() != inputs.size()) fail(ErrorCode::DimensionMismatch, "solve_layers: one input per layer");
    std::vector<SolverOutcome> out(layers.size());
    for_each_index(layers.size(), exec, [&](std::size_t i) { out[i] = layers[i].run(inputs[i]); });
    return out;
}

BatchLoss matching_loss_batch(std::span<const Matrix> log_probs, std::span<const Matrix> labels, Execution exec,
                              const Tolerance& tol) {
    if (log_probs.size() != labels.size()) fail(ErrorCode::DimensionMismatch, "one label bag per prediction bag");
    BatchLoss out;
    out.losses.resize(log_probs.size());
    out.grads.resize(log_probs.size());
    for_each_index(log_probs.size(), exec, [&](std::size_t i) {
        MatchingLoss r = matching_loss(log_probs[i], labels[i], tol);
        out.losses[i] = r.loss;
        out.grads[i] = std::move(r.grad_log_probs);
    });
    finish(out);
    return out;
}

BatchLoss gsa_loss_batch(std::span<const Matrix> log_probs, std::span<const Matrix> targets, double gamma,
                         Execution exec, const AlignOptions& opts) {
    if (log_probs.size() != targets.size()) fail(ErrorCode::DimensionMismatch, "one target per prediction");
    BatchLoss out;
    out.losses.resize(log_probs.size());
    out.grads.resize(log_probs.size());
    for_each_index(log_probs.size(), exec, [&](std::size_t i) {
        GsaLoss r = gsa_loss(log_probs[i], targets[i], gamma, opts);
        out.losses[i] = r.loss;
        out.grads[i] = std::move(r.grad_log_probs);
    });
    finish(out);
    return out;
}

std::vector<MatchingResult> solve_assignments(std::span<const Matrix> costs, Execution exec, const Tolerance& tol) {
    std::vector<MatchingResult> out(costs.size());
    for_each_index(costs.size(), exec, [&](std::size_t i) { out[i] = solve_assignment(costs[i], tol); });
    return out;
}

}  // namespace lincomb
