#include "contir/rankers/config.hpp"

#include <string>

#include "contir/error.hpp"

namespace contir::rank {

namespace {

constexpr std::string_view kHeadNames[] = {"drmm", "knrm", "duet", "pooled_dot", "maxsim"};

}  // namespace

HeadType parse_head(std::string_view tag) {
  for (std::size_t i = 0; i < std::size(kHeadNames); ++i) {
    if (kHeadNames[i] == tag) return static_cast<HeadType>(i);
  }
  throw ConfigError("unknown ranker head '" + std::string(tag) +
                    "' (expected drmm, knrm, duet, pooled_dot or maxsim)");
}

std::string_view head_name(HeadType head) { return kHeadNames[static_cast<std::size_t>(head)]; }

KernelSet standard_kernels(std::size_t count) {
  if (count == 0) throw ConfigError("kernel count must be >= 1");
  KernelSet k;
  k.mu.push_back(1.0);
  k.sigma.push_back(1e-3);
  for (std::size_t i = 0; i + 1 < count; ++i) {
    k.mu.push_back(0.9 - 0.2 * static_cast<double>(i));
    k.sigma.push_back(0.1);
  }
  return k;
}

void RankerConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("ranker: " + msg); };
  if (embedding_dim == 0) fail("embedding_dim must be >= 1");
  if (query_length == 0 || doc_length == 0) fail("query_length and doc_length must be >= 1");
  if (!(embedding_init > 0.0)) fail("embedding_init must be > 0");
  switch (head) {
    case HeadType::drmm:
      if (histogram_bins < 2) fail("histogram_bins must be >= 2");
      if (hidden_units == 0) fail("hidden_units must be >= 1");
      break;
    case HeadType::knrm:
      if (kernels.mu.empty()) fail("at least one kernel is required");
      if (kernels.mu.size() != kernels.sigma.size()) fail("kernel mu/sigma counts differ");
      for (std::size_t j = 0; j < kernels.mu.size(); ++j) {
        if (!(kernels.sigma[j] > 0.0)) fail("kernel sigma must be > 0");
        if (!(kernels.mu[j] >= -1.0 && kernels.mu[j] <= 1.0)) fail("kernel mu must lie in [-1, 1]");
      }
      break;
    case HeadType::duet:
      if (conv_window == 0) fail("conv_window must be >= 1");
      if (query_length < conv_window || doc_length < conv_window) {
        fail("query_length and doc_length must be >= conv_window");
      }
      if (conv_chunks == 0 || doc_length - conv_window + 1 < conv_chunks) {
        fail("conv_chunks must be in [1, doc_length - conv_window + 1]");
      }
      break;
    case HeadType::pooled_dot:
    case HeadType::maxsim:
      break;
  }
}

}  // namespace contir::rank
