#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "contir/autodiff/ops.hpp"
#include "contir/autodiff/parameters.hpp"
#include "contir/rankers/config.hpp"

namespace contir::rank {

inline constexpr std::int64_t kPadId = 0;
inline constexpr std::int64_t kUnknownId = 1;

/// Fixed-length token ids with masks. A pad id is always masked; at least one
/// position on each side is unmasked.
struct TokenizedPair {
  std::vector<std::int64_t> query;
  std::vector<std::int64_t> doc;
  std::vector<std::uint8_t> query_mask;
  std::vector<std::uint8_t> doc_mask;

  /// Throws DataError on a broken invariant.
  void validate() const;
};

/// Truncates or pads both sides to the configured lengths. Masks mark the
/// non-pad ids. Throws DataError if either side has no real token.
TokenizedPair encode_pair(std::span<const std::int64_t> query, std::span<const std::int64_t> doc,
                          std::size_t query_length, std::size_t doc_length);

/// Stacked batch of pairs in tensor form.
struct PairBatch {
  ad::IndexTensor query;   // [B, Lq]
  ad::IndexTensor doc;     // [B, Ld]
  ad::Tensor query_mask;   // [B, Lq]
  ad::Tensor doc_mask;     // [B, Ld]

  std::size_t size() const { return query.shape.empty() ? 0 : query.shape[0]; }
};

/// Throws ShapeError when pair lengths disagree with the config.
PairBatch make_batch(std::span<const TokenizedPair> pairs, const RankerConfig& config);

struct ScoredBatch {
  std::vector<double> scores;
};

/// idf(w) = log(1 + N / (1 + df(w))) over the given documents.
std::vector<double> compute_idf(std::span<const std::vector<std::int64_t>> docs,
                                std::size_t vocab_size);

/// Fresh parameters for a head: embedding rows uniform in
/// +-config.embedding_init (pad row zero), dense weights Glorot-uniform,
/// biases zero.
ad::ParameterSet init_parameters(const RankerConfig& config, std::size_t vocab_size,
                                 std::uint64_t seed);

/// Same, with the embedding table taken from `embedding` ([V, n]).
ad::ParameterSet init_parameters(const RankerConfig& config, const ad::Tensor& embedding,
                                 std::uint64_t seed);

/// Differentiable forward pass. `idf` is required by duet only. Returns [B].
ad::Var forward(ad::Tape& tape, const ad::Bindings& params, const PairBatch& batch,
                const RankerConfig& config, std::span<const double> idf = {});

/// Inference without gradient recording. Read-only on its inputs.
ScoredBatch score_batch(std::span<const TokenizedPair> pairs, const ad::ParameterSet& params,
                        const RankerConfig& config, std::span<const double> idf = {});

/// Local-path input of duet: [B, Lq * Ld], entry (i, j) is tf(w) * idf(w)
/// when query token i equals doc token j (both unmasked), else 0.
ad::Tensor duet_local_matrix(const PairBatch& batch, std::span<const double> idf);

/// DRMM relevance MLP applied to a histogram [B, Lq, b]; returns [B, Lq].
ad::Var drmm_relevance(ad::Var histogram, const ad::Bindings& params);

/// A configured model: head parameters plus the duet idf table.
class Ranker {
 public:
  Ranker(RankerConfig config, std::size_t vocab_size, std::uint64_t seed);
  Ranker(RankerConfig config, const ad::Tensor& embedding, std::uint64_t seed);

  const RankerConfig& config() const noexcept { return config_; }
  std::size_t vocab_size() const;
  ad::ParameterSet& parameters() noexcept { return params_; }
  const ad::ParameterSet& parameters() const noexcept { return params_; }
  const std::vector<double>& idf() const noexcept { return idf_; }
  void set_idf(std::vector<double> idf);
  void fit_idf(std::span<const std::vector<std::int64_t>> docs);

  ad::Var forward(ad::Tape& tape, const ad::Bindings& params, const PairBatch& batch) const;
  ScoredBatch score_batch(std::span<const TokenizedPair> pairs) const;

 private:
  RankerConfig config_;
  ad::ParameterSet params_;
  std::vector<double> idf_;
};

}  // namespace contir::rank
