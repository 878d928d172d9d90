#include "contir/strategies/gem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "contir/error.hpp"
#include "contir/log.hpp"

namespace contir::strat {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double kkt_violation(double v, double grad) {
  return v > 0.0 ? std::abs(grad) : std::max(0.0, -grad);
}

// Solves a x = b in place by Gaussian elimination with partial pivoting.
// Returns false when a pivot is negligible.
bool solve_dense(std::vector<double> a, std::vector<double>& b) {
  const std::size_t n = b.size();
  double scale = 0.0;
  for (double x : a) scale = std::max(scale, std::abs(x));
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    }
    if (std::abs(a[piv * n + c]) <= 1e-13 * scale) return false;
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t c = n; c-- > 0;) {
    for (std::size_t k = c + 1; k < n; ++k) b[c] -= a[c * n + k] * b[k];
    b[c] /= a[c * n + c];
  }
  return true;
}

}  // namespace

QpResult solve_dual_qp(const Matrix& g_rows, const std::vector<double>& g, double gamma,
                       double tol, std::size_t max_sweeps) {
  const std::size_t m = g_rows.size();
  if (m == 0) throw ShapeError("solve_dual_qp: at least one constraint row is required");
  if (!(gamma >= 0.0)) throw DomainError("solve_dual_qp: gamma must be >= 0");
  for (const auto& row : g_rows) {
    if (row.size() != g.size()) throw ShapeError("solve_dual_qp: row length differs from g");
  }
  std::vector<double> q(m * m);
  std::vector<double> p(m);
  for (std::size_t a = 0; a < m; ++a) {
    p[a] = dot(g_rows[a], g);
    for (std::size_t b = a; b < m; ++b) {
      q[a * m + b] = q[b * m + a] = dot(g_rows[a], g_rows[b]);
    }
    q[a * m + a] += gamma;
  }
  QpResult r;
  r.v.assign(m, 0.0);
  auto gradient = [&](std::size_t s) {
    double acc = p[s];
    for (std::size_t j = 0; j < m; ++j) acc += q[s * m + j] * r.v[j];
    return acc;
  };
  auto residual = [&] {
    double worst = 0.0;
    for (std::size_t s = 0; s < m; ++s) worst = std::max(worst, kkt_violation(r.v[s], gradient(s)));
    return worst;
  };
  r.kkt_residual = residual();
  while (r.kkt_residual > tol && r.sweeps < max_sweeps) {
    for (std::size_t s = 0; s < m; ++s) {
      const double diag = q[s * m + s];
      if (diag <= 0.0) continue;  // zero row with gamma 0: v_s stays at 0
      r.v[s] = std::max(0.0, r.v[s] - gradient(s) / diag);
    }
    ++r.sweeps;
    r.kkt_residual = residual();
  }
  r.converged = r.kkt_residual <= tol;
  if (!r.converged) return r;

  // exact solve on the active set, kept when it is still a KKT point
  std::vector<std::size_t> active;
  for (std::size_t s = 0; s < m; ++s) {
    if (r.v[s] > 0.0) active.push_back(s);
  }
  if (active.empty()) return r;
  const std::size_t k = active.size();
  std::vector<double> h(k * k), rhs(k);
  for (std::size_t a = 0; a < k; ++a) {
    rhs[a] = -p[active[a]];
    for (std::size_t b = 0; b < k; ++b) h[a * k + b] = q[active[a] * m + active[b]];
  }
  if (!solve_dense(h, rhs)) return r;
  QpResult polished = r;
  std::fill(polished.v.begin(), polished.v.end(), 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    if (!(rhs[a] > 0.0)) return r;
    polished.v[active[a]] = rhs[a];
  }
  std::swap(r, polished);
  r.kkt_residual = residual();
  r.polished = true;
  if (r.kkt_residual > polished.kkt_residual && r.kkt_residual > tol) std::swap(r, polished);
  return r;
}

Projection gem_project(const std::vector<double>& g, const Matrix& g_rows, double gamma,
                       double tol, std::size_t max_sweeps) {
  for (double x : g) {
    if (!std::isfinite(x)) throw NumericError("gem_project: non-finite gradient");
  }
  Projection out;
  out.gradient = g;
  bool violated = false;
  for (const auto& row : g_rows) {
    if (row.size() != g.size()) throw ShapeError("gem_project: row length differs from g");
    violated = violated || dot(row, g) < 0.0;
  }
  if (!violated) return out;
  out.qp = solve_dual_qp(g_rows, g, gamma, tol, max_sweeps);
  if (!out.qp.converged) {
    log_warning("gem: dual QP did not converge (KKT residual " +
                std::to_string(out.qp.kkt_residual) + "); using the unprojected gradient");
    out.fallback = true;
    return out;
  }
  for (std::size_t s = 0; s < g_rows.size(); ++s) {
    const double v = out.qp.v[s];
    if (v == 0.0) continue;
    for (std::size_t i = 0; i < g.size(); ++i) out.gradient[i] += v * g_rows[s][i];
  }
  // with gamma 0, n independent active constraints pin the projection to 0
  const auto active = std::count_if(out.qp.v.begin(), out.qp.v.end(), [](double v) { return v > 0.0; });
  if (gamma == 0.0 && out.qp.polished && static_cast<std::size_t>(active) == g.size()) {
    std::fill(out.gradient.begin(), out.gradient.end(), 0.0);
  }
  out.projected = true;
  return out;
}

}  // namespace contir::strat
