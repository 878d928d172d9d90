#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "contir/data/vocabulary.hpp"

namespace contir::data {

/// One query-document row with its relevance label. `task` is the 1-based
/// task the row came from, kept so rows stay attributable after replay
/// merges.
struct Sample {
  std::string query_id;
  std::string query_text;
  std::string doc_id;
  std::string doc_text;
  double relevance = 0.0;
  std::size_t task = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct TaskData {
  std::size_t id = 0;  // 1-based
  std::string topic;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

struct ContinualDataset {
  std::vector<TaskData> tasks;
  Vocabulary vocab;

  std::size_t size() const noexcept { return tasks.size(); }
};

/// Relevance in [0, 1]; (query_id, doc_id) unique per split; every test
/// query has at least one relevant (> 0) and one non-relevant candidate.
/// Throws DataError naming the offending query.
void validate_task(const TaskData& task);

/// Vocabulary over all query and doc texts, in order of first appearance
/// (task order, train before test).
Vocabulary build_vocabulary(const std::vector<TaskData>& tasks);

/// 64-bit FNV-1a over the serialized rows of every task, as 16 hex digits.
std::string fingerprint(const ContinualDataset& dataset);

}  // namespace contir::data
