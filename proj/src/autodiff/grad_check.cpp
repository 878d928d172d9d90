#include "contir/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "contir/error.hpp"

namespace contir::ad {

namespace {

double evaluate(const Objective& objective, const ParameterSet& params) {
  Tape tape(false);
  Var out = objective(tape, bind_parameters(tape, params));
  return out.value().item();
}

}  // namespace

double grad_check(const Objective& objective, const ParameterSet& params, double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
    throw DomainError("grad_check: epsilon must lie in [1e-7, 1e-3], got " +
                      std::to_string(epsilon));
  }
  GradientMap analytic;
  {
    Tape tape;
    Var out = objective(tape, bind_parameters(tape, params));
    analytic = tape.backward(out);
  }

  double worst = 0.0;
  ParameterSet probe = params;
  for (auto& [name, tensor] : probe) {
    const Tensor& grad = analytic.at(name);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double original = tensor[i];
      tensor[i] = original + epsilon;
      const double up = evaluate(objective, probe);
      tensor[i] = original - epsilon;
      const double down = evaluate(objective, probe);
      tensor[i] = original;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = grad[i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        throw NumericError("grad_check: non-finite gradient for '" + name + "'");
      }
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace contir::ad
