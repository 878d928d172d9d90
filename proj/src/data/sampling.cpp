#include "contir/data/sampling.hpp"

#include <map>
#include <string>
#include <utility>

#include "contir/error.hpp"
#include "contir/random.hpp"

namespace contir::data {

std::size_t PairwiseEpoch::triples() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.size();
  return n;
}

PairwiseEpoch sample_pairwise(std::span<const Sample> rows, std::size_t negatives,
                              std::size_t batch_size, std::uint64_t seed) {
  if (negatives == 0) throw DomainError("sample_pairwise: negatives per positive must be >= 1");
  if (batch_size == 0) throw DomainError("sample_pairwise: batch size must be >= 1");
  using Key = std::pair<std::size_t, std::string>;  // (task, query id)
  std::map<Key, std::vector<std::size_t>> by_query;
  std::map<std::size_t, std::vector<std::size_t>> zero_by_task;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    by_query[{rows[i].task, rows[i].query_id}].push_back(i);
    if (rows[i].relevance == 0.0) zero_by_task[rows[i].task].push_back(i);
  }

  Rng rng(seed);
  PairwiseEpoch epoch;
  std::vector<Triple> triples;
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Sample& pos = rows[i];
    if (!(pos.relevance > 0.0)) continue;
    candidates.clear();
    for (std::size_t j : by_query[{pos.task, pos.query_id}]) {
      if (rows[j].relevance < pos.relevance) candidates.push_back(j);
    }
    if (candidates.empty()) {
      for (std::size_t j : zero_by_task[pos.task]) {
        if (rows[j].query_id != pos.query_id) candidates.push_back(j);
      }
    }
    if (candidates.empty()) {
      ++epoch.skipped;
      continue;
    }
    for (std::size_t k = 0; k < negatives; ++k) {
      triples.push_back({i, candidates[rng.below(candidates.size())]});
    }
  }
  rng.shuffle(triples);
  for (std::size_t start = 0; start < triples.size(); start += batch_size) {
    const std::size_t end = std::min(triples.size(), start + batch_size);
    epoch.batches.emplace_back(triples.begin() + static_cast<std::ptrdiff_t>(start),
                               triples.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return epoch;
}

}  // namespace contir::data
