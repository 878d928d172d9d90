#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace contir::metrics {

struct ScoredCandidate {
  std::string doc_id;
  double score = 0.0;
};

/// Candidates of one query ordered by descending score, ties by ascending
/// doc id, plus the relevant doc ids.
struct QueryRun {
  std::string query_id;
  std::vector<std::string> ranked;
  std::set<std::string> relevant;
};

using RankedRun = std::vector<QueryRun>;

/// Sorts candidates into a QueryRun. Throws DataError when empty.
QueryRun rank_candidates(std::string query_id, std::vector<ScoredCandidate> candidates,
                         std::set<std::string> relevant);

/// Mean reciprocal rank of the first relevant candidate. Queries with an
/// empty relevance set are skipped with a warning; a query without a
/// relevant candidate (within `cutoff`, when given) contributes 0.
double mrr(const RankedRun& run, std::optional<std::size_t> cutoff = std::nullopt);

/// T x T matrix of P(t, s): performance on test set s after training on
/// task t. Indices are 0-based; unset entries are empty.
class PerformanceMatrix {
 public:
  explicit PerformanceMatrix(std::size_t tasks);

  std::size_t tasks() const noexcept { return tasks_; }
  /// Throws DomainError outside [0, 1].
  void set(std::size_t t, std::size_t s, double value);
  bool has(std::size_t t, std::size_t s) const;
  /// Throws StateError when unset.
  double at(std::size_t t, std::size_t s) const;
  bool complete() const;

  /// Header `t\s,1..T`, then one row per t with 6 decimals.
  void write_csv(std::ostream& out) const;
  static PerformanceMatrix read_csv(std::istream& in);

  friend bool operator==(const PerformanceMatrix&, const PerformanceMatrix&) = default;

 private:
  std::size_t index(std::size_t t, std::size_t s) const;
  std::size_t tasks_;
  std::vector<std::optional<double>> values_;
};

/// Mean of the last row.
double p_final(const PerformanceMatrix& p);
/// 2/(T(T-1)) * sum_{t>s} (P(t,s) - P(s,s)). Requires T >= 2.
double bwt(const PerformanceMatrix& p);
/// 2/(T(T-1)) * sum_{s>t} P(t,s). Requires T >= 2.
double fwt(const PerformanceMatrix& p);

/// Sample correlation coefficient. Throws DomainError on zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace contir::metrics
