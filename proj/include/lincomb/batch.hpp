#pragma once

// Independent solves over a batch of bags or sequences.  Each kernel has a
// serial reference and an OpenMP version; both reduce in index order so the
// results are bitwise identical.

#include <span>
#include <vector>

#include "lincomb/alignment.hpp"
#include "lincomb/assignment.hpp"
#include "lincomb/core.hpp"

namespace lincomb {

enum class Execution { Serial, Parallel };

/// outcomes[i] = layers[i].run(inputs[i]).  The first failing index rethrows.
std::vector<SolverOutcome> solve_layers(std::span<const CombLayer> layers,
                                        std::span<const std::span<const double>> inputs, Execution exec);

struct BatchLoss {
    double total = 0.0;  // sum of per-item losses, summed in index order
    std::vector<double> losses;
    std::vector<Matrix> grads;  // d loss_i / d logP_i
};

BatchLoss matching_loss_batch(std::span<const Matrix> log_probs, std::span<const Matrix> labels, Execution exec,
                              const Tolerance& tol = {});

BatchLoss gsa_loss_batch(std::span<const Matrix> log_probs, std::span<const Matrix> targets, double gamma,
                         Execution exec, const AlignOptions& opts = {});

/// Assignment solves plus generalized gradients on raw cost matrices (benchmark kernel).
std::vector<MatchingResult> solve_assignments(std::span<const Matrix> costs, Execution exec,
                                              const Tolerance& tol = {});

}  // namespace lincomb
