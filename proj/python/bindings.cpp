#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "contir/data/kmeans.hpp"
#include "contir/error.hpp"
#include "contir/experiment/config.hpp"
#include "contir/experiment/experiment.hpp"
#include "contir/experiment/report.hpp"
#include "contir/metrics/metrics.hpp"
#include "contir/runner/runner.hpp"
#include "contir/strategies/gem.hpp"

namespace py = pybind11;
using namespace contir;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

strat::Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
  auto r = a.unchecked<2>();
  strat::Matrix m(r.shape(0), std::vector<double>(r.shape(1)));
  for (py::ssize_t i = 0; i < r.shape(0); ++i) {
    for (py::ssize_t j = 0; j < r.shape(1); ++j) m[i][j] = r(i, j);
  }
  return m;
}

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw ShapeError("expected a 1-d array");
  return std::vector<double>(a.data(), a.data() + a.size());
}

Array from_vector(const std::vector<double>& v) {
  return Array(static_cast<py::ssize_t>(v.size()), v.data());
}

// NaN marks an unset entry.
metrics::PerformanceMatrix to_performance(const Array& a) {
  if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw ShapeError("P must be a square 2-d array");
  const auto T = static_cast<std::size_t>(a.shape(0));
  metrics::PerformanceMatrix p(T);
  auto r = a.unchecked<2>();
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < T; ++s) {
      if (!std::isnan(r(t, s))) p.set(t, s, r(t, s));
    }
  }
  return p;
}

Array from_performance(const metrics::PerformanceMatrix& p) {
  const auto T = static_cast<py::ssize_t>(p.tasks());
  Array out({T, T});
  auto w = out.mutable_unchecked<2>();
  for (py::ssize_t t = 0; t < T; ++t) {
    for (py::ssize_t s = 0; s < T; ++s) {
      w(t, s) = p.has(t, s) ? p.at(t, s) : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

exp::ExperimentConfig config_from_text(const std::string& text) {
  std::istringstream in(text);
  return exp::parse_config(in, "<config>");
}

}  // namespace

PYBIND11_MODULE(_contir, m) {
  m.doc() = "contir: continual learning for neural rankers";

  static py::exception<Error> base(m, "ContirError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<StateError>(m, "StateError", base.ptr());

  m.attr("__version__") = runner::version_tag();

  m.def(
      "mrr",
      [](const std::vector<std::vector<std::string>>& ranked, const std::vector<std::set<std::string>>& relevant,
         std::optional<std::size_t> cutoff) {
        if (ranked.size() != relevant.size()) throw ShapeError("mrr: ranked and relevant differ in length");
        metrics::RankedRun run;
        for (std::size_t i = 0; i < ranked.size(); ++i) {
          run.push_back({"q" + std::to_string(i), ranked[i], relevant[i]});
        }
        return metrics::mrr(run, cutoff);
      },
      py::arg("ranked"), py::arg("relevant"), py::arg("cutoff") = py::none(),
      "Mean reciprocal rank over ranked doc-id lists.");
  m.def(
      "rank",
      [](const std::vector<std::string>& doc_ids, const std::vector<double>& scores) {
        if (doc_ids.size() != scores.size()) throw ShapeError("rank: doc_ids and scores differ in length");
        std::vector<metrics::ScoredCandidate> c;
        for (std::size_t i = 0; i < doc_ids.size(); ++i) c.push_back({doc_ids[i], scores[i]});
        return metrics::rank_candidates("q", std::move(c), {}).ranked;
      },
      py::arg("doc_ids"), py::arg("scores"), "Doc ids by descending score, ties by ascending id.");

  m.def("p_final", [](const Array& p) { return metrics::p_final(to_performance(p)); }, py::arg("P"));
  m.def("bwt", [](const Array& p) { return metrics::bwt(to_performance(p)); }, py::arg("P"));
  m.def("fwt", [](const Array& p) { return metrics::fwt(to_performance(p)); }, py::arg("P"));
  m.def(
      "pearson", [](const Array& x, const Array& y) { return metrics::pearson(to_vector(x), to_vector(y)); },
      py::arg("x"), py::arg("y"));

  m.def(
      "solve_dual_qp",
      [](const Array& G, const Array& g, double gamma, double tol, std::size_t max_sweeps) {
        const strat::QpResult r = strat::solve_dual_qp(to_matrix(G), to_vector(g), gamma, tol, max_sweeps);
        py::dict d;
        d["v"] = from_vector(r.v);
        d["sweeps"] = r.sweeps;
        d["kkt_residual"] = r.kkt_residual;
        d["converged"] = r.converged;
        return d;
      },
      py::arg("G"), py::arg("g"), py::arg("gamma") = 1e-3, py::arg("tol") = 1e-8, py::arg("max_sweeps") = 100000);
  m.def(
      "gem_project",
      [](const Array& g, const Array& G, double gamma) {
        const strat::Projection p = strat::gem_project(to_vector(g), to_matrix(G), gamma);
        return py::make_tuple(from_vector(p.gradient), p.projected);
      },
      py::arg("g"), py::arg("G"), py::arg("gamma") = 1e-3,
      "Projected gradient and whether a constraint was violated.");

  m.def(
      "kmeans",
      [](const Array& points, std::size_t k, std::size_t max_iter, std::uint64_t seed, std::size_t restarts) {
        const data::KMeansResult r = data::kmeans_best_of(to_matrix(points), k, max_iter, seed, restarts);
        std::vector<double> flat;
        for (const auto& c : r.centroids) flat.insert(flat.end(), c.begin(), c.end());
        const auto rows = static_cast<py::ssize_t>(r.centroids.size());
        const auto cols = static_cast<py::ssize_t>(r.centroids.empty() ? 0 : r.centroids[0].size());
        Array centroids({rows, cols}, flat.data());
        return py::make_tuple(r.assignments, centroids, r.inertia);
      },
      py::arg("points"), py::arg("k"), py::arg("max_iter") = 100, py::arg("seed") = 0, py::arg("restarts") = 10,
      "(assignments, centroids, inertia) of the best of `restarts` runs.");

  m.def("config_keys", &exp::config_keys, "Documented config keys and defaults.");
  m.def(
      "check_config",
      [](const std::string& text) {
        const exp::ExperimentConfig c = config_from_text(text);
        return exp::plan_jobs(c).size();
      },
      py::arg("text"), "Validates config text; returns the number of planned runs.");
  m.def(
      "taskgen",
      [](const std::string& text, const std::filesystem::path& out) {
        return exp::write_taskgen(config_from_text(text), out);
      },
      py::arg("config"), py::arg("out"));
  m.def(
      "run",
      [](const std::string& text, std::optional<std::filesystem::path> out_dir) {
        const exp::ExperimentConfig c = config_from_text(text);
        const std::vector<exp::Job> jobs = exp::plan_jobs(c);
        const exp::Job& job = jobs.front();
        runner::RunResult r;
        {
          py::gil_scoped_release release;
          const exp::PreparedData d = exp::prepare_data(c, job.data);
          runner::RunOptions o;
          o.out_dir = out_dir;
          r = runner::run_continual(job.config, d.dataset, o);
        }
        py::dict d;
        d["P"] = from_performance(r.performance);
        d["p_final"] = r.p_final;
        d["bwt"] = r.bwt;
        d["fwt"] = r.fwt;
        return d;
      },
      py::arg("config"), py::arg("out_dir") = py::none(),
      "Runs the first planned combination in memory; returns P and the summary metrics.");
  m.def(
      "run_experiment",
      [](const std::string& text, const std::filesystem::path& root, std::size_t threads, bool dry_run) {
        const exp::ExperimentConfig c = config_from_text(text);
        std::vector<exp::RunOutcome> outcomes;
        {
          py::gil_scoped_release release;
          outcomes = exp::run_experiment(c, root, {threads, dry_run});
        }
        py::list out;
        for (const auto& o : outcomes) out.append(py::make_tuple(o.name, o.ok, o.error));
        return out;
      },
      py::arg("config"), py::arg("root"), py::arg("threads") = 1, py::arg("dry_run") = false,
      "Runs every planned combination; returns (name, ok, error) per run.");
  m.def(
      "report",
      [](const std::filesystem::path& root, std::optional<std::filesystem::path> out) {
        return exp::write_report(root, out.value_or(root / "report")).written;
      },
      py::arg("root"), py::arg("out") = py::none(), "Writes tables and sweep CSVs; returns the written paths.");
}
