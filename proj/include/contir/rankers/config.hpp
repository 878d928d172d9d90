#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace contir::rank {

enum class HeadType { drmm, knrm, duet, pooled_dot, maxsim };

/// Throws ConfigError on an unknown tag.
HeadType parse_head(std::string_view tag);
std::string_view head_name(HeadType head);

struct KernelSet {
  std::vector<double> mu;
  std::vector<double> sigma;
};

/// Exact-match kernel (mu 1, sigma 1e-3) followed by count-1 soft kernels
/// at 0.9, 0.7, ... with sigma 0.1.
KernelSet standard_kernels(std::size_t count = 11);

struct RankerConfig {
  HeadType head = HeadType::knrm;
  std::size_t embedding_dim = 300;
  std::size_t query_length = 20;
  std::size_t doc_length = 128;
  std::size_t histogram_bins = 30;
  std::size_t hidden_units = 5;   // drmm relevance MLP
  std::size_t conv_window = 3;    // duet
  std::size_t conv_chunks = 4;    // duet, c
  KernelSet kernels = standard_kernels();
  bool kernel_log = true;
  double embedding_init = 0.25;   // half-width of the random embedding init

  /// Throws ConfigError.
  void validate() const;
};

}  // namespace contir::rank
