#pragma once

#include "contir/autodiff/parameters.hpp"

namespace contir::ad {

struct SgdConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;

  void validate() const;
};

/// Heavy-ball SGD state. Velocity tensors are created on the first step and
/// mirror the parameter layout afterwards.
struct OptimizerState {
  SgdConfig config;
  ParameterSet velocity;

  explicit OptimizerState(SgdConfig c = {}) : config(c) { config.validate(); }
  void reset() { velocity = ParameterSet{}; }
};

/// v <- momentum * v + g;  theta <- theta - lr * v, elementwise.
/// Throws ShapeError when `grads` does not cover `params` exactly and
/// NumericError when an update would produce a non-finite value (params are
/// left untouched in that case).
void optimizer_step(ParameterSet& params, const GradientMap& grads, OptimizerState& state);

}  // namespace contir::ad
