#include "contir/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "contir/error.hpp"
#include "contir/log.hpp"

namespace contir::metrics {

QueryRun rank_candidates(std::string query_id, std::vector<ScoredCandidate> candidates,
                         std::set<std::string> relevant) {
  if (candidates.empty()) throw DataError("query " + query_id + " has no candidates");
  std::sort(candidates.begin(), candidates.end(),
            [](const ScoredCandidate& a, const ScoredCandidate& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.doc_id < b.doc_id;
            });
  QueryRun run{std::move(query_id), {}, std::move(relevant)};
  run.ranked.reserve(candidates.size());
  for (auto& c : candidates) run.ranked.push_back(std::move(c.doc_id));
  return run;
}

double mrr(const RankedRun& run, std::optional<std::size_t> cutoff) {
  if (run.empty()) throw DataError("mrr: empty run");
  if (cutoff && *cutoff == 0) throw DomainError("mrr: cutoff must be >= 1");
  double total = 0.0;
  std::size_t counted = 0;
  std::size_t skipped = 0;
  for (const QueryRun& q : run) {
    if (q.ranked.empty()) throw DataError("mrr: query " + q.query_id + " has no candidates");
    if (q.relevant.empty()) {
      ++skipped;
      continue;
    }
    ++counted;
    const std::size_t depth = cutoff ? std::min(*cutoff, q.ranked.size()) : q.ranked.size();
    for (std::size_t r = 0; r < depth; ++r) {
      if (q.relevant.count(q.ranked[r])) {
        total += 1.0 / static_cast<double>(r + 1);
        break;
      }
    }
  }
  if (skipped > 0) {
    log_warning("mrr: skipped " + std::to_string(skipped) + " queries without relevance labels");
  }
  if (counted == 0) throw DataError("mrr: no query has a relevant document");
  return total / static_cast<double>(counted);
}

PerformanceMatrix::PerformanceMatrix(std::size_t tasks) : tasks_(tasks), values_(tasks * tasks) {
  if (tasks == 0) throw DomainError("performance matrix needs T >= 1");
}

std::size_t PerformanceMatrix::index(std::size_t t, std::size_t s) const {
  if (t >= tasks_ || s >= tasks_) {
    throw ShapeError("performance matrix index (" + std::to_string(t) + ", " + std::to_string(s) +
                     ") outside " + std::to_string(tasks_) + "x" + std::to_string(tasks_));
  }
  return t * tasks_ + s;
}

void PerformanceMatrix::set(std::size_t t, std::size_t s, double value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw DomainError("performance value " + std::to_string(value) + " outside [0, 1]");
  }
  values_[index(t, s)] = value;
}

bool PerformanceMatrix::has(std::size_t t, std::size_t s) const {
  return values_[index(t, s)].has_value();
}

double PerformanceMatrix::at(std::size_t t, std::size_t s) const {
  const auto& v = values_[index(t, s)];
  if (!v) throw StateError("performance matrix entry (" + std::to_string(t + 1) + ", " +
                           std::to_string(s + 1) + ") is unset");
  return *v;
}

bool PerformanceMatrix::complete() const {
  return std::all_of(values_.begin(), values_.end(), [](const auto& v) { return v.has_value(); });
}

void PerformanceMatrix::write_csv(std::ostream& out) const {
  out << "t\\s";
  for (std::size_t s = 1; s <= tasks_; ++s) out << ',' << s;
  out << '\n';
  char buf[32];
  for (std::size_t t = 0; t < tasks_; ++t) {
    out << t + 1;
    for (std::size_t s = 0; s < tasks_; ++s) {
      out << ',';
      if (const auto& v = values_[t * tasks_ + s]) {
        std::snprintf(buf, sizeof buf, "%.6f", *v);
        out << buf;
      }
    }
    out << '\n';
  }
}

PerformanceMatrix PerformanceMatrix::read_csv(std::istream& in) {
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw DataError("P matrix CSV: missing header");
  auto header = split(line);
  if (header.size() < 2 || header[0] != "t\\s") throw DataError("P matrix CSV: bad header");
  const std::size_t tasks = header.size() - 1;
  PerformanceMatrix p(tasks);
  for (std::size_t t = 0; t < tasks; ++t) {
    if (!std::getline(in, line)) throw DataError("P matrix CSV: missing row " + std::to_string(t + 1));
    auto cells = split(line);
    if (cells.size() != tasks + 1 || cells[0] != std::to_string(t + 1)) {
      throw DataError("P matrix CSV: malformed row " + std::to_string(t + 1));
    }
    for (std::size_t s = 0; s < tasks; ++s) {
      if (cells[s + 1].empty()) continue;
      try {
        std::size_t used = 0;
        double v = std::stod(cells[s + 1], &used);
        if (used != cells[s + 1].size()) throw std::invalid_argument("trailing");
        p.set(t, s, v);
      } catch (const std::logic_error&) {
        throw DataError("P matrix CSV: bad value '" + cells[s + 1] + "' in row " +
                        std::to_string(t + 1));
      }
    }
  }
  return p;
}

namespace {

void require_complete(const PerformanceMatrix& p, const char* what) {
  if (!p.complete()) throw StateError(std::string(what) + ": performance matrix is incomplete");
}

void require_two(const PerformanceMatrix& p, const char* what) {
  if (p.tasks() < 2) throw DomainError(std::string(what) + ": requires T >= 2");
}

}  // namespace

double p_final(const PerformanceMatrix& p) {
  require_complete(p, "p_final");
  const std::size_t t = p.tasks();
  double sum = 0.0;
  for (std::size_t s = 0; s < t; ++s) sum += p.at(t - 1, s);
  return sum / static_cast<double>(t);
}

double bwt(const PerformanceMatrix& p) {
  require_two(p, "bwt");
  require_complete(p, "bwt");
  const std::size_t n = p.tasks();
  double sum = 0.0;
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t s = 0; s < t; ++s) sum += p.at(t, s) - p.at(s, s);
  }
  return 2.0 / static_cast<double>(n * (n - 1)) * sum;
}

double fwt(const PerformanceMatrix& p) {
  require_two(p, "fwt");
  require_complete(p, "fwt");
  const std::size_t n = p.tasks();
  double sum = 0.0;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    for (std::size_t s = t + 1; s < n; ++s) sum += p.at(t, s);
  }
  return 2.0 / static_cast<double>(n * (n - 1)) * sum;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson: length mismatch");
  if (x.size() < 2) throw DomainError("pearson: at least two points required");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace contir::metrics
