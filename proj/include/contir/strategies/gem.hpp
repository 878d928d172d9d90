#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "contir/autodiff/parameters.hpp"
#include "contir/error.hpp"
#include "contir/strategies/memory.hpp"

namespace contir::strat {

using Matrix = std::vector<std::vector<double>>;  // row-major, one row per constraint

struct QpResult {
  std::vector<double> v;
  std::size_t sweeps = 0;
  double kkt_residual = 0.0;
  bool converged = false;
  bool polished = false;  // refined by an exact solve on the active set
};

/// Minimizes 0.5 v'(G G' + gamma I) v + g'G' v over v >= 0 by cyclic
/// coordinate descent. Stops once every coordinate satisfies the KKT
/// condition to `tol` and then re-solves the active set exactly; otherwise
/// returns the partial solution after `max_sweeps` with converged = false.
QpResult solve_dual_qp(const Matrix& g_rows, const std::vector<double>& g, double gamma,
                       double tol = 1e-8, std::size_t max_sweeps = 100000);

struct Projection {
  std::vector<double> gradient;
  bool projected = false;   // a constraint was violated and the QP was solved
  bool fallback = false;    // QP failed; gradient returned unchanged
  QpResult qp;
};

/// Returns g unchanged when g . G_s >= 0 for every row, else G' v* + g.
Projection gem_project(const std::vector<double>& g, const Matrix& g_rows, double gamma,
                       double tol = 1e-8, std::size_t max_sweeps = 100000);

/// One flattened row per past-task slice: `gradient` evaluates the loss
/// over a whole slice as one batch. Throws StateError on an empty memory or
/// an empty slice.
template <typename T>
Matrix gem_reference_gradients(
    const MemoryBuffer<T>& memory,
    const std::function<ad::GradientMap(std::span<const T>)>& gradient) {
  if (memory.tasks() == 0) throw StateError("gem: no past task in memory");
  Matrix rows;
  for (std::size_t s = 0; s < memory.tasks(); ++s) {
    std::span<const T> slice = memory.slice(s);
    if (slice.empty()) throw StateError("gem: memory slice " + std::to_string(s) + " is empty");
    rows.push_back(gradient(slice).flatten());
  }
  return rows;
}

}  // namespace contir::strat
