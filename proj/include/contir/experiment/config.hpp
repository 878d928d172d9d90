#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "contir/data/synthetic.hpp"
#include "contir/data/topics.hpp"
#include "contir/rankers/config.hpp"
#include "contir/runner/runner.hpp"
#include "contir/strategies/config.hpp"

namespace contir::exp {

enum class DataSource { synthetic, ingest, corpus };

/// Everything an experiment needs, resolved from key = value text.
struct ExperimentConfig {
  DataSource source = DataSource::synthetic;
  std::filesystem::path dataset_path;                 // ingest: directory of task files
  std::optional<std::filesystem::path> embeddings;    // ranker init, optional
  data::SyntheticConfig synthetic;
  bool synthetic_seed_per_run = false;                // synthetic.seed = run
  std::filesystem::path corpus_path;                  // corpus: one TSV of rows
  std::filesystem::path corpus_embeddings;            // corpus: vectors for clustering
  data::CorpusSplitConfig corpus;

  std::vector<rank::HeadType> heads{rank::HeadType::knrm};
  std::vector<strat::StrategyTag> strategies{strat::StrategyTag::none};
  std::map<strat::StrategyTag, double> lambda_by_tag;
  runner::RunConfig base;  // ranker, strategy and training settings shared by all runs
  std::vector<std::uint64_t> seeds{0};
  std::optional<std::filesystem::path> output_dir;

  bool grid = true;
  std::vector<double> sweep_alphas;
  std::vector<double> sweep_volumes;
  std::vector<std::pair<std::size_t, std::size_t>> sweep_topic_pairs;  // 1-based
  bool sweep_all_topic_pairs = false;

  /// Throws ConfigError.
  void validate() const;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, repeated
/// keys and malformed values throw ConfigError naming source and line.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Documented keys with their defaults, in display order.
std::vector<std::pair<std::string, std::string>> config_keys();

}  // namespace contir::exp
