#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "contir/data/dataset.hpp"
#include "contir/data/kmeans.hpp"

namespace contir::data {

/// Multi-topic generator. Each topic has `concepts` concepts of
/// topic_vocab / concepts private tokens. A query draws query_length tokens
/// from one concept; its relevant doc carries tokens of the generic block
/// the topic associates with that concept, negatives carry blocks of other
/// concepts, and all docs are padded with topic tokens other than the query's.
/// The first round(alpha * concepts) concepts (tokens and association) are
/// shared by all topics; the rest are private with a per-topic association.
struct SyntheticConfig {
  std::size_t tasks = 3;
  std::size_t topic_vocab = 60;
  std::size_t concepts = 10;
  double alpha = 0.0;
  std::vector<std::size_t> train_queries{500};  // per task; the last entry repeats
  std::size_t test_queries = 100;
  std::size_t train_docs_per_query = 5;   // 1 relevant + negatives
  std::size_t test_docs_per_query = 20;
  std::size_t query_length = 3;
  std::size_t doc_length = 12;
  std::size_t generic_block = 4;
  std::size_t generic_per_doc = 4;
  std::uint64_t seed = 0;

  std::size_t train_queries_for(std::size_t task_index) const;
  /// Throws ConfigError.
  void validate() const;
};

struct SyntheticData {
  ContinualDataset dataset;
  TopicDistanceMatrix distances;  // over mean one-hot query-token vectors
};

SyntheticData generate_synthetic(const SyntheticConfig& config);

}  // namespace contir::data
