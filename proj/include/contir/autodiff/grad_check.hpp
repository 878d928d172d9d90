#pragma once

#include <functional>

#include "contir/autodiff/parameters.hpp"
#include "contir/autodiff/tape.hpp"

namespace contir::ad {

/// Builds a scalar from parameters bound on a fresh tape.
using Objective = std::function<Var(Tape&, const Bindings&)>;

/// Compares reverse-mode gradients with central differences.
/// Returns max over all parameter entries of
///   |analytic - numeric| / max(1, |analytic|, |numeric|).
/// epsilon must lie in [1e-7, 1e-3].
double grad_check(const Objective& objective, const ParameterSet& params, double epsilon = 1e-5);

}  // namespace contir::ad
