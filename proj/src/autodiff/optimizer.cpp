#include "contir/autodiff/optimizer.hpp"

#include <cmath>
#include <string>

#include "contir/error.hpp"

namespace contir::ad {

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("optimizer: learning rate must be positive, got " +
                      std::to_string(learning_rate));
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("optimizer: momentum must lie in [0, 1), got " + std::to_string(momentum));
  }
}

void optimizer_step(ParameterSet& params, const GradientMap& grads, OptimizerState& state) {
  params.require_same_layout(grads, "optimizer_step");
  if (state.velocity.empty()) state.velocity = params.zeros_like();
  params.require_same_layout(state.velocity, "optimizer_step");

  ParameterSet next_velocity = state.velocity;
  ParameterSet next_params = params;
  auto g = grads.begin();
  auto v = next_velocity.begin();
  for (auto p = next_params.begin(); p != next_params.end(); ++p, ++g, ++v) {
    auto pv = p->second.values();
    auto gv = g->second.values();
    auto vv = v->second.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      vv[i] = state.config.momentum * vv[i] + gv[i];
      pv[i] -= state.config.learning_rate * vv[i];
      if (!std::isfinite(pv[i])) {
        throw NumericError("optimizer_step: non-finite update for '" + p->first + "'");
      }
    }
  }
  params = std::move(next_params);
  state.velocity = std::move(next_velocity);
}

}  // namespace contir::ad
