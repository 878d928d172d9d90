#include "contir/strategies/regularization.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "contir/error.hpp"
#include "contir/log.hpp"

namespace contir::strat {

using ad::Tensor;
using ad::Var;

namespace {

void require_finite(const ad::GradientMap& g, const char* context) {
  for (const auto& [name, t] : g) {
    if (!t.all_finite()) {
      throw NumericError(std::string(context) + ": non-finite gradient for '" + name + "'");
    }
  }
}

}  // namespace

Var penalty_term(ad::Tape& tape, const ad::Bindings& theta, const AnchorParams& anchor,
                 const ImportanceMap& omega, double lambda) {
  if (omega.empty() || lambda == 0.0) return tape.constant(Tensor::scalar(0.0));
  anchor.require_same_layout(omega, "penalty_term");
  if (theta.size() != omega.size()) throw ShapeError("penalty_term: parameter count differs");
  Var total;
  for (const auto& [name, w] : omega) {
    auto it = theta.find(name);
    if (it == theta.end()) throw ShapeError("penalty_term: no parameter '" + name + "'");
    if (it->second.shape() != w.shape()) {
      throw ShapeError("penalty_term: shape mismatch for '" + name + "'");
    }
    Var diff = it->second - tape.constant(anchor.at(name));
    Var term = ad::sum_all(diff * diff * tape.constant(w));
    total = total.valid() ? total + term : term;
  }
  return total * lambda;
}

ImportanceMap l2_importance(const ad::ParameterSet& params) {
  ImportanceMap out;
  for (const auto& [name, t] : params) out.add(name, Tensor(t.shape(), 1.0));
  return out;
}

ImportanceMap fisher_importance(std::size_t available, std::size_t k, Rng& rng,
                                const SampleGradient& gradient, bool online,
                                const ImportanceMap& prior) {
  if (available == 0) throw StateError("fisher: no training samples");
  if (k == 0) throw DomainError("fisher: K must be >= 1");
  if (k > available) {
    log_warning("fisher: K=" + std::to_string(k) + " exceeds " + std::to_string(available) +
                " available samples; using all of them");
    k = available;
  }
  ImportanceMap sum;
  for (std::size_t idx : rng.sample_indices(available, k)) {
    ad::GradientMap g = gradient(idx);
    require_finite(g, "fisher");
    if (sum.empty()) sum = g.zeros_like();
    sum.require_same_layout(g, "fisher");
    auto a = sum.begin();
    for (auto b = g.begin(); b != g.end(); ++a, ++b) {
      for (std::size_t i = 0; i < b->second.size(); ++i) a->second[i] += b->second[i] * b->second[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(k);
  for (auto& [name, t] : sum) {
    for (double& v : t.values()) v *= inv;
  }
  if (online && !prior.empty()) {
    prior.require_same_layout(sum, "fisher");
    auto p = prior.begin();
    for (auto a = sum.begin(); a != sum.end(); ++a, ++p) {
      for (std::size_t i = 0; i < a->second.size(); ++i) a->second[i] += p->second[i];
    }
  }
  return sum;
}

void si_begin_task(PathIntegral& state, const ad::ParameterSet& params) {
  state.omega = params.zeros_like();
  state.previous = params;
  state.start = params;
  state.active = true;
}

void si_accumulate(PathIntegral& state, const ad::GradientMap& grad,
                   const ad::ParameterSet& after) {
  if (!state.active) throw StateError("si_accumulate: no pre-step snapshot (task not started)");
  state.previous.require_same_layout(after, "si_accumulate");
  state.previous.require_same_layout(grad, "si_accumulate");
  auto w = state.omega.begin();
  auto prev = state.previous.begin();
  auto g = grad.begin();
  for (auto a = after.begin(); a != after.end(); ++a, ++w, ++prev, ++g) {
    for (std::size_t i = 0; i < a->second.size(); ++i) {
      w->second[i] -= g->second[i] * (a->second[i] - prev->second[i]);
      prev->second[i] = a->second[i];
    }
  }
}

ImportanceMap si_consolidate(const ad::ParameterSet& omega, const ad::ParameterSet& end,
                             const ad::ParameterSet& start, double xi,
                             const ImportanceMap& prior) {
  if (!(xi > 0.0)) throw DomainError("si_consolidate: xi must be > 0");
  omega.require_same_layout(end, "si_consolidate");
  omega.require_same_layout(start, "si_consolidate");
  ImportanceMap out = prior.empty() ? omega.zeros_like() : prior;
  omega.require_same_layout(out, "si_consolidate");
  auto o = out.begin();
  auto e = end.begin();
  auto s = start.begin();
  for (auto w = omega.begin(); w != omega.end(); ++w, ++o, ++e, ++s) {
    for (std::size_t i = 0; i < w->second.size(); ++i) {
      const double d = e->second[i] - s->second[i];
      o->second[i] += std::max(w->second[i], 0.0) / (d * d + xi);
    }
  }
  return out;
}

ImportanceMap mas_importance(std::size_t batches, const BatchGradient& gradient,
                             const ImportanceMap& prior) {
  if (batches == 0) throw DomainError("mas: at least one batch is required");
  ImportanceMap sum;
  for (std::size_t k = 0; k < batches; ++k) {
    ad::GradientMap g = gradient(k);
    require_finite(g, "mas");
    if (sum.empty()) sum = g.zeros_like();
    sum.require_same_layout(g, "mas");
    auto a = sum.begin();
    for (auto b = g.begin(); b != g.end(); ++a, ++b) {
      for (std::size_t i = 0; i < b->second.size(); ++i) a->second[i] += std::abs(b->second[i]);
    }
  }
  const double inv = 1.0 / static_cast<double>(batches);
  if (!prior.empty()) prior.require_same_layout(sum, "mas");
  auto p = prior.begin();
  for (auto a = sum.begin(); a != sum.end(); ++a) {
    for (std::size_t i = 0; i < a->second.size(); ++i) {
      a->second[i] *= inv;
      if (!prior.empty()) a->second[i] += p->second[i];
    }
    if (!prior.empty()) ++p;
  }
  return sum;
}

}  // namespace contir::strat
