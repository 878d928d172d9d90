#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace contir::exp {

/// One completed run directory.
struct RunRecord {
  std::string name;  // path relative to the run root
  std::map<std::string, std::string> labels;  // run.* manifest lines, prefix dropped
  std::optional<double> p_final;
  std::optional<double> bwt;
  std::optional<double> fwt;
  std::optional<double> first_task_final;  // P(T, 1)

  std::string label(const std::string& key) const;
};

/// Directories below `root` whose manifest says status=complete, sorted by
/// name. Nothing under `root` is modified.
std::vector<RunRecord> scan_runs(const std::filesystem::path& root);

struct Summary {
  double mean = 0.0;
  std::optional<double> se;  // sample sd / sqrt(n); unset for n = 1
  std::size_t n = 0;
};

/// Throws DomainError on an empty input.
Summary summarize(std::span<const double> values);

struct ReportFiles {
  std::size_t runs = 0;
  std::vector<std::filesystem::path> written;
};

/// per_seed.csv, table_{p_final,bwt,fwt}.csv, tables.md and, when sweep runs
/// exist, sweep_topic.csv, sweep_volume.csv and sweep_pearson.csv. Throws
/// DataError when no completed run is found.
ReportFiles write_report(const std::filesystem::path& root, const std::filesystem::path& out);

}  // namespace contir::exp
