#pragma once

#include <cstddef>

#include "contir/autodiff/ops.hpp"
#include "contir/rankers/config.hpp"

namespace contir::rank {

/// Log-count histogram of cosines [..., Lq, Ld] into `bins` equal buckets on
/// [-1, 1] (last bucket right-closed), counting only doc positions with
/// doc_mask [..., Ld] != 0. Returns [..., Lq, bins] holding log(1 + count).
ad::Tensor matching_histogram(const ad::Tensor& cosines, const ad::Tensor& doc_mask,
                              std::size_t bins);

/// Kernel pooling of an interaction tensor [B, Lq, Ld] -> [B, k]:
/// phi_j = sum_i mq_i * f(sum_d md_d * exp(-(M_id - mu_j)^2 / (2 sigma_j^2)))
/// with f = log1p when `log1p` is set, identity otherwise.
ad::Var kernel_pooling(ad::Var interaction, const ad::Tensor& query_mask,
                       const ad::Tensor& doc_mask, const KernelSet& kernels, bool log1p = true);

/// mean(max(0, -y * (pos - neg) + margin)) over equal-length score vectors.
ad::Var margin_ranking_loss(ad::Var pos, ad::Var neg, double margin = 1.0, double y = 1.0);

}  // namespace contir::rank
