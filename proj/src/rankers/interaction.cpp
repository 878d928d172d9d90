#include "contir/rankers/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "contir/error.hpp"

namespace contir::rank {

using ad::Shape;
using ad::Tensor;
using ad::Var;

Tensor matching_histogram(const Tensor& cosines, const Tensor& doc_mask, std::size_t bins) {
  if (bins < 2) throw DomainError("matching_histogram: bins must be >= 2");
  const Shape& s = cosines.shape();
  if (s.size() < 2) throw ShapeError("matching_histogram: cosines must be [..., Lq, Ld]");
  const std::size_t lq = s[s.size() - 2];
  const std::size_t ld = s.back();
  Shape mask_shape(s.begin(), s.end() - 2);
  mask_shape.push_back(ld);
  if (doc_mask.shape() != mask_shape) {
    throw ShapeError("matching_histogram: doc mask " + ad::shape_string(doc_mask.shape()) +
                     " does not match " + ad::shape_string(mask_shape));
  }
  const std::size_t groups = lq * ld == 0 ? 0 : cosines.size() / (lq * ld);
  Shape out_shape(s.begin(), s.end() - 1);
  out_shape.push_back(bins);
  Tensor out(out_shape);
  const double width = static_cast<double>(bins) / 2.0;
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t i = 0; i < lq; ++i) {
      double* row = out.data() + (g * lq + i) * bins;
      const double* c = cosines.data() + (g * lq + i) * ld;
      for (std::size_t d = 0; d < ld; ++d) {
        if (doc_mask[g * ld + d] == 0.0) continue;
        const double v = std::clamp(c[d], -1.0, 1.0);
        auto bin = static_cast<std::size_t>(std::floor((v + 1.0) * width));
        row[std::min(bin, bins - 1)] += 1.0;
      }
      for (std::size_t j = 0; j < bins; ++j) row[j] = std::log1p(row[j]);
    }
  }
  return out;
}

Var kernel_pooling(Var interaction, const Tensor& query_mask, const Tensor& doc_mask,
                   const KernelSet& kernels, bool log1p) {
  const Shape& s = interaction.shape();
  if (s.size() != 3) throw ShapeError("kernel_pooling: interaction must be [B, Lq, Ld]");
  const std::size_t batch = s[0], lq = s[1], ld = s[2];
  if (query_mask.shape() != Shape{batch, lq} || doc_mask.shape() != Shape{batch, ld}) {
    throw ShapeError("kernel_pooling: masks " + ad::shape_string(query_mask.shape()) + ", " +
                     ad::shape_string(doc_mask.shape()) + " do not match " +
                     ad::shape_string(s));
  }
  const std::size_t k = kernels.mu.size();
  if (k == 0 || kernels.sigma.size() != k) {
    throw ShapeError("kernel_pooling: need matching, non-empty mu and sigma");
  }
  for (double sg : kernels.sigma) {
    if (!(sg > 0.0)) throw DomainError("kernel_pooling: sigma must be > 0");
  }
  const Tensor& m = interaction.value();
  std::vector<double> soft(batch * lq * k, 0.0);  // K_j(i) before the log
  Tensor out(Shape{batch, k});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < lq; ++i) {
      double* ki = soft.data() + (b * lq + i) * k;
      const double* mi = m.data() + (b * lq + i) * ld;
      for (std::size_t d = 0; d < ld; ++d) {
        if (doc_mask[b * ld + d] == 0.0) continue;
        for (std::size_t j = 0; j < k; ++j) {
          const double z = mi[d] - kernels.mu[j];
          ki[j] += std::exp(-z * z / (2.0 * kernels.sigma[j] * kernels.sigma[j]));
        }
      }
      if (query_mask[b * lq + i] == 0.0) continue;
      for (std::size_t j = 0; j < k; ++j) out[b * k + j] += log1p ? std::log1p(ki[j]) : ki[j];
    }
  }
  return interaction.tape().record(
      std::move(out), {interaction},
      [=, soft = std::move(soft)](const ad::BackwardContext& ctx) {
        Tensor* gm = ctx.input_grad(0);
        if (!gm) return;
        const Tensor& g = ctx.grad();
        const Tensor& m = ctx.input(0);
        std::vector<double> coeff(k);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t i = 0; i < lq; ++i) {
            if (query_mask[b * lq + i] == 0.0) continue;
            const double* ki = soft.data() + (b * lq + i) * k;
            for (std::size_t j = 0; j < k; ++j) {
              coeff[j] = g[b * k + j] * (log1p ? 1.0 / (1.0 + ki[j]) : 1.0);
            }
            const double* mi = m.data() + (b * lq + i) * ld;
            double* gi = gm->data() + (b * lq + i) * ld;
            for (std::size_t d = 0; d < ld; ++d) {
              if (doc_mask[b * ld + d] == 0.0) continue;
              double acc = 0.0;
              for (std::size_t j = 0; j < k; ++j) {
                const double s2 = kernels.sigma[j] * kernels.sigma[j];
                const double z = mi[d] - kernels.mu[j];
                acc += coeff[j] * std::exp(-z * z / (2.0 * s2)) * (-z / s2);
              }
              gi[d] += acc;
            }
          }
        }
      },
      "kernel_pooling");
}

Var margin_ranking_loss(Var pos, Var neg, double margin, double y) {
  if (pos.shape().size() != 1 || pos.shape() != neg.shape()) {
    throw ShapeError("margin_ranking_loss: score vectors " + ad::shape_string(pos.shape()) +
                     " and " + ad::shape_string(neg.shape()) + " must be equal-length vectors");
  }
  if (pos.shape()[0] == 0) throw ShapeError("margin_ranking_loss: empty batch");
  if (!(margin >= 0.0)) throw DomainError("margin_ranking_loss: margin must be >= 0");
  return ad::mean_all(ad::relu(ad::shift(ad::scale(pos - neg, -y), margin)));
}

}  // namespace contir::rank
