#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "contir/autodiff/tensor.hpp"
#include "contir/data/dataset.hpp"
#include "contir/data/kmeans.hpp"

namespace contir::data {

struct CorpusSplitConfig {
  std::size_t topics = 2;
  double test_fraction = 0.2;
  std::size_t max_iter = 100;
  std::size_t restarts = 10;
  std::uint64_t seed = 0;
};

struct CorpusSplit {
  ContinualDataset dataset;
  TopicDistanceMatrix distances;
  KMeansResult clustering;
  std::vector<std::string> query_ids;  // row order of the clustered points
};

/// Mean embedding of the query's tokens.
std::vector<double> query_vector(const std::string& text, const Vocabulary& vocab,
                                 const ad::Tensor& embedding);

/// Clusters queries by mean token embedding and turns each cluster into a
/// task, ordered by the first appearance of its queries in the corpus.
/// Within a cluster a seeded random test_fraction of the queries that have
/// both relevant and non-relevant candidates (at least one, and never all
/// queries) forms the test split.
CorpusSplit split_corpus(const std::vector<Sample>& corpus, const Vocabulary& vocab,
                         const ad::Tensor& embedding, const CorpusSplitConfig& config);

}  // namespace contir::data
