#pragma once

#include <cstddef>
#include <functional>

#include "contir/autodiff/ops.hpp"
#include "contir/autodiff/parameters.hpp"
#include "contir/random.hpp"

namespace contir::strat {

/// Per-entry importance Omega, same layout as the parameters. Entries >= 0.
using ImportanceMap = ad::ParameterSet;
/// Parameters frozen at the end of the previous task.
using AnchorParams = ad::ParameterSet;

/// lambda * sum_i (theta_i - anchor_i)^2 * omega_i. An empty omega (first
/// task) or lambda == 0 yields an exact constant 0.
ad::Var penalty_term(ad::Tape& tape, const ad::Bindings& theta, const AnchorParams& anchor,
                     const ImportanceMap& omega, double lambda);

/// All-ones map.
ImportanceMap l2_importance(const ad::ParameterSet& params);

/// Gradient of the unregularized loss for one training sample, addressed by
/// its index in the finished task's training set.
using SampleGradient = std::function<ad::GradientMap(std::size_t sample)>;

/// (1/K) * sum_k g_k^2 over K samples drawn without replacement from
/// `available`; K is clamped to `available` with a warning. With `online`
/// the result is added to `prior`, otherwise it replaces it.
ImportanceMap fisher_importance(std::size_t available, std::size_t k, Rng& rng,
                                const SampleGradient& gradient, bool online,
                                const ImportanceMap& prior);

/// Running SI path integral for the current task.
struct PathIntegral {
  ad::ParameterSet omega;     // w
  ad::ParameterSet previous;  // parameters before the latest step
  ad::ParameterSet start;     // parameters at task start
  bool active = false;
};

/// Zeroes w and snapshots the task-start parameters.
void si_begin_task(PathIntegral& state, const ad::ParameterSet& params);

/// w -= g * (after - previous); previous = after.
void si_accumulate(PathIntegral& state, const ad::GradientMap& grad, const ad::ParameterSet& after);

/// prior + max(w, 0) / ((end - start)^2 + xi).
ImportanceMap si_consolidate(const ad::ParameterSet& omega, const ad::ParameterSet& end,
                             const ad::ParameterSet& start, double xi, const ImportanceMap& prior);

/// Gradient of mean((R(q,pos) - R(q,neg))^2) over replay batch k.
using BatchGradient = std::function<ad::GradientMap(std::size_t batch)>;

/// prior + (1/K) * sum_k |gradient(k)|.
ImportanceMap mas_importance(std::size_t batches, const BatchGradient& gradient,
                             const ImportanceMap& prior);

/// Regularization state carried between tasks.
struct StrategyState {
  AnchorParams anchor;
  ImportanceMap omega;
  PathIntegral path;
};

}  // namespace contir::strat
