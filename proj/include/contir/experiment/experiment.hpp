#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "contir/autodiff/tensor.hpp"
#include "contir/data/dataset.hpp"
#include "contir/data/kmeans.hpp"
#include "contir/experiment/config.hpp"
#include "contir/runner/runner.hpp"

namespace contir::exp {

/// Which dataset a job trains on. Unset fields mean "as configured".
struct DatasetSpec {
  std::optional<double> alpha;
  std::optional<double> volume;  // multiplies the last task's training queries
  std::optional<std::pair<std::size_t, std::size_t>> topics;  // 1-based pair
  std::uint64_t seed = 0;  // synthetic generator seed

  std::string key() const;
};

struct PreparedData {
  data::ContinualDataset dataset;
  data::TopicDistanceMatrix distances;  // empty when unknown
};

/// Generates, ingests or splits the dataset for `spec`. Throws DataError or
/// ConfigError.
PreparedData prepare_data(const ExperimentConfig& config, const DatasetSpec& spec);

/// Tasks a and b (1-based) renumbered as tasks 1 and 2.
data::ContinualDataset topic_pair(const data::ContinualDataset& dataset, std::size_t a, std::size_t b);

struct Job {
  std::string name;  // sub-directory of the output root
  std::string kind;  // grid | topic | volume
  rank::HeadType head = rank::HeadType::knrm;
  strat::StrategyTag strategy = strat::StrategyTag::none;
  std::uint64_t seed = 0;
  runner::RunConfig config;
  DatasetSpec data;
  std::string axis;  // alpha | pair | volume, empty for grid jobs
  std::string axis_value;
};

/// Every run the config asks for, in a fixed order: grid, then alpha, pair
/// and volume sweeps; within each, head, strategy, axis value, seed.
/// Validates the config first.
std::vector<Job> plan_jobs(const ExperimentConfig& config);

/// Worker cap from CONTIR_THREADS, else the hardware concurrency (>= 1).
/// Throws ConfigError on a malformed value.
std::size_t worker_threads();

struct RunOutcome {
  std::string name;
  bool ok = false;
  std::string error;
};

struct ExperimentOptions {
  std::size_t threads = 1;
  bool dry_run = false;
};

/// Runs every job into `root / job.name`. A failing job is recorded (and
/// its manifest marked failed) while the others continue. Outcomes are in
/// plan order.
std::vector<RunOutcome> run_experiment(const ExperimentConfig& config, const std::filesystem::path& root,
                                       const ExperimentOptions& options);

/// Task files and topic_distances.csv for the configured source (synthetic
/// or corpus) in `out`. Returns the number of tasks written.
std::size_t write_taskgen(const ExperimentConfig& config, const std::filesystem::path& out);

}  // namespace contir::exp
