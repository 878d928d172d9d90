#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "contir/data/dataset.hpp"

namespace contir::data {

/// Row indices of a training triple; the query is rows[pos]'s query.
struct Triple {
  std::size_t pos = 0;
  std::size_t neg = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct PairwiseEpoch {
  std::vector<std::vector<Triple>> batches;
  std::size_t skipped = 0;  // positives without any usable negative

  std::size_t triples() const;
};

/// One epoch of pairwise batches. Every row with relevance > 0 is a positive
/// and appears `negatives` times; each negative is drawn uniformly from the
/// same query's rows with lower relevance, or, when there are none, from
/// zero-relevance rows of other queries of the same task. Triples are
/// shuffled by `seed` and cut into batches of `batch_size` (last may be
/// short).
PairwiseEpoch sample_pairwise(std::span<const Sample> rows, std::size_t negatives,
                              std::size_t batch_size, std::uint64_t seed);

}  // namespace contir::data
