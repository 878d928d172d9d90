#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "contir/autodiff/optimizer.hpp"
#include "contir/data/dataset.hpp"
#include "contir/metrics/metrics.hpp"
#include "contir/rankers/ranker.hpp"
#include "contir/strategies/config.hpp"
#include "contir/strategies/memory.hpp"
#include "contir/strategies/regularization.hpp"

namespace contir::runner {

struct RunConfig {
  rank::RankerConfig ranker;
  strat::StrategyConfig strategy;
  ad::SgdConfig optimizer{0.1, 0.9};
  std::size_t epochs = 3;
  std::size_t batch_size = 16;
  std::size_t negatives = 1;  // negatives drawn per positive
  double margin = 1.0;
  std::uint64_t seed = 0;
  std::size_t eval_threads = 1;

  /// Throws ConfigError.
  void validate() const;
  /// Every resolved setting as key=value pairs, in a fixed order.
  std::vector<std::pair<std::string, std::string>> describe() const;
};

/// Everything the agent carries from task to task.
struct AgentState {
  rank::Ranker ranker;
  strat::StrategyState strategy;
  strat::MemoryBuffer<data::Sample> memory;
  ad::OptimizerState optimizer;
  const data::Vocabulary* vocab = nullptr;
  std::size_t task = 0;  // tasks finished so far
  std::uint64_t seed = 0;
  std::size_t epochs_run = 0;
  std::size_t steps = 0;

  AgentState(const RunConfig& config, const data::Vocabulary& vocabulary,
             const ad::Tensor* embedding = nullptr);
};

/// Token ids and masks for one row, at the ranker's lengths.
rank::TokenizedPair encode_sample(const data::Sample& row, const data::Vocabulary& vocab,
                                  const rank::RankerConfig& config);

/// W_t: the task's training rows, merged with replay memory for nr.
std::vector<data::Sample> training_set(AgentState& agent, const data::TaskData& task,
                                       const RunConfig& config);

struct TrainStats {
  std::size_t batches = 0;
  std::size_t skipped_positives = 0;
  std::size_t projections = 0;  // gem steps that needed a projection
  double last_loss = 0.0;
};

/// Trains the agent's ranker on `rows` (already merged for nr) as task
/// `agent.task + 1`. Throws NumericError on a non-finite loss and DataError
/// when `rows` yields no training triple.
TrainStats train_task(AgentState& agent, std::span<const data::Sample> rows,
                      const RunConfig& config);

/// Strategy hooks after a task: importance, anchor, memory. `rows` is S_t.
void end_task(AgentState& agent, std::span<const data::Sample> rows, const RunConfig& config);

/// Scores one query's candidates, in the given order.
using ScoreFn = std::function<std::vector<double>(std::span<const data::Sample>)>;

/// MRR over the test rows grouped by query. Throws DataError when empty.
double evaluate_task(std::span<const data::Sample> test, const ScoreFn& score);

/// Score function backed by the agent's current ranker.
ScoreFn ranker_scores(const AgentState& agent);

struct RunManifest {
  std::vector<std::pair<std::string, std::string>> labels;  // written as run.<key>
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::string> dataset_fingerprints;
  std::vector<double> task_seconds;
  std::string version;
  std::string status = "pending";
  std::string error;

  void write(const std::filesystem::path& path) const;
};

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  std::vector<std::pair<std::string, std::string>> labels;
  const ad::Tensor* embedding = nullptr;
  std::optional<ScoreFn> score_override;
  std::function<void(std::size_t task, const AgentState&)> on_task_end;
  bool dry_run = false;  // write the manifest, then stop
};

struct RunResult {
  metrics::PerformanceMatrix performance{1};
  std::optional<double> p_final;
  std::optional<double> bwt;
  std::optional<double> fwt;
  RunManifest manifest;
  ad::ParameterSet parameters;
};

/// The full task loop. With an output directory the manifest is written
/// first, P_matrix.csv after every task, and metrics.txt at the end; on
/// failure the partial matrix and a failed manifest are left behind and the
/// error is rethrown.
RunResult run_continual(const RunConfig& config, const data::ContinualDataset& dataset,
                        const RunOptions& options = {});

std::string version_tag();

}  // namespace contir::runner
