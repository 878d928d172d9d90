#include "contir/rankers/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "contir/error.hpp"
#include "contir/random.hpp"
#include "contir/rankers/interaction.hpp"

namespace contir::rank {

using ad::Shape;
using ad::Tensor;
using ad::Tape;
using ad::Var;

namespace {

Var param(const ad::Bindings& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw StateError("ranker: missing parameter '" + name + "'");
  return it->second;
}

Var linear(Var x, const ad::Bindings& params, const std::string& prefix) {
  return ad::matmul(x, param(params, prefix + ".w")) + param(params, prefix + ".b");
}

struct DenseSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in;
  std::size_t fan_out;
};

std::vector<DenseSpec> dense_layout(const RankerConfig& c) {
  const std::size_t n = c.embedding_dim;
  switch (c.head) {
    case HeadType::drmm:
      return {{"drmm.hidden.w", {c.histogram_bins, c.hidden_units}, c.histogram_bins, c.hidden_units},
              {"drmm.out.w", {c.hidden_units, 1}, c.hidden_units, 1},
              {"drmm.gate.w", {n, 1}, n, 1}};
    case HeadType::knrm: {
      const std::size_t k = c.kernels.mu.size();
      return {{"knrm.w", {k, 1}, k, 1}};
    }
    case HeadType::duet: {
      const std::size_t flat = c.query_length * c.doc_length;
      const std::size_t span = c.conv_window * n;
      return {{"duet.local.hidden.w", {flat, n}, flat, n},
              {"duet.local.out.w", {n, 1}, n, 1},
              {"duet.conv_q.w", {n, c.conv_window, n}, span, span},
              {"duet.conv_d.w", {n, c.conv_window, n}, span, span},
              {"duet.dist.w", {c.conv_chunks, 1}, c.conv_chunks, 1}};
    }
    case HeadType::pooled_dot:
    case HeadType::maxsim:
      return {};
  }
  return {};
}

ad::ParameterSet build_parameters(const RankerConfig& config, Tensor embedding,
                                  std::uint64_t seed) {
  config.validate();
  ad::ParameterSet params;
  params.add("embedding", std::move(embedding));
  Rng rng(derive_seed(seed, 2));
  for (const DenseSpec& spec : dense_layout(config)) {
    const double limit = std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
    Tensor w(spec.shape);
    for (double& v : w.values()) v = rng.uniform(-limit, limit);
    params.add(spec.name, std::move(w));
    const std::string base = spec.name.substr(0, spec.name.size() - 2);
    const std::size_t bias = spec.shape.size() == 3 ? spec.shape[0] : spec.shape.back();
    params.add(base + ".b", Tensor(Shape{bias}));
  }
  return params;
}

// Query/doc masks as [B, L, 1] so they broadcast over embedding channels.
Tensor channel_mask(const Tensor& mask) {
  return mask.reshaped({mask.dim(0), mask.dim(1), 1});
}

Var score_knrm(const ad::Bindings& params, Var eq, Var ed, const PairBatch& batch,
               const RankerConfig& config) {
  Var m = ad::cosine_matrix(eq, ed);
  Var phi = kernel_pooling(m, batch.query_mask, batch.doc_mask, config.kernels, config.kernel_log);
  return ad::sigmoid(linear(phi, params, "knrm"));
}

Var score_drmm(const ad::Bindings& params, Var eq, Var ed, const PairBatch& batch,
               const RankerConfig& config) {
  Tape& tape = eq.tape();
  const std::size_t b = batch.size();
  const std::size_t lq = config.query_length;
  Var cosines = ad::cosine_matrix(eq, ed);
  Var hist = tape.constant(matching_histogram(cosines.value(), batch.doc_mask, config.histogram_bins));
  Var rel = drmm_relevance(hist, params);
  Var gate = ad::reshape(ad::tanh(linear(eq, params, "drmm.gate")), {b, lq});
  return ad::sum(rel * gate * tape.constant(batch.query_mask), 1);
}

Var masked_mean(Var e, const Tensor& mask) {
  const std::size_t b = mask.dim(0), l = mask.dim(1);
  Tensor inv(Shape{b, 1});
  for (std::size_t s = 0; s < b; ++s) {
    double count = 0.0;
    for (std::size_t i = 0; i < l; ++i) count += mask[s * l + i];
    inv[s] = 1.0 / count;
  }
  return ad::sum(e, 1) * e.tape().constant(std::move(inv));
}

Var score_pooled_dot(Var eq, Var ed, const PairBatch& batch) {
  return ad::sum(masked_mean(eq, batch.query_mask) * masked_mean(ed, batch.doc_mask), 1);
}

Var score_maxsim(Var eq, Var ed, const PairBatch& batch) {
  Tape& tape = eq.tape();
  const std::size_t b = batch.size();
  Var m = ad::cosine_matrix(eq, ed);
  Tensor dmask = batch.doc_mask.reshaped({b, 1, batch.doc_mask.dim(1)});
  Var best = ad::max(ad::masked_fill(m, dmask, -2.0), 2);
  return ad::sum(best * tape.constant(batch.query_mask), 1);
}

// Mask of valid conv positions: a window counts when its first token is real.
Tensor window_mask(const Tensor& mask, std::size_t positions) {
  const std::size_t b = mask.dim(0), l = mask.dim(1);
  Tensor out(Shape{b, positions, 1});
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t p = 0; p < positions; ++p) out[s * positions + p] = mask[s * l + p];
  }
  return out;
}

Var score_duet(Tape& tape, const ad::Bindings& params, Var eq, Var ed, const PairBatch& batch,
               const RankerConfig& config, std::span<const double> idf) {
  const std::size_t b = batch.size();
  const std::size_t n = config.embedding_dim;
  const std::size_t c = config.conv_chunks;

  Var local = tape.constant(duet_local_matrix(batch, idf));
  Var hidden = ad::tanh(linear(local, params, "duet.local.hidden"));
  Var local_score = linear(hidden, params, "duet.local.out");

  Var cq = ad::tanh(ad::conv1d(eq, param(params, "duet.conv_q.w"), param(params, "duet.conv_q.b")));
  const std::size_t pq = cq.shape()[1];
  Var mq = ad::max(ad::masked_fill(cq, window_mask(batch.query_mask, pq), -1.0), 1);

  Var cd = ad::tanh(ad::conv1d(ed, param(params, "duet.conv_d.w"), param(params, "duet.conv_d.b")));
  const std::size_t pd = cd.shape()[1];
  cd = ad::masked_fill(cd, window_mask(batch.doc_mask, pd), 0.0);
  std::vector<Var> chunks;
  for (std::size_t k = 0; k < c; ++k) {
    const std::size_t lo = k * pd / c;
    const std::size_t hi = (k + 1) * pd / c;
    chunks.push_back(ad::reshape(ad::max(ad::slice(cd, 1, lo, hi), 1), {b, 1, n}));
  }
  Var md = ad::concat(chunks, 1);
  Var inter = ad::reshape(ad::matmul(ad::reshape(mq, {b, 1, n}), ad::transpose(md)), {b, c});
  return local_score + linear(inter, params, "duet.dist");
}

}  // namespace

void TokenizedPair::validate() const {
  auto side = [](const std::vector<std::int64_t>& ids, const std::vector<std::uint8_t>& mask,
                 const char* which) {
    if (ids.size() != mask.size()) {
      throw DataError(std::string(which) + ": mask length differs from token length");
    }
    bool any = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0) throw DataError(std::string(which) + ": negative token id");
      if (mask[i] > 1) throw DataError(std::string(which) + ": mask must be 0 or 1");
      if (ids[i] == kPadId && mask[i] != 0) {
        throw DataError(std::string(which) + ": padding position is unmasked");
      }
      any = any || mask[i] != 0;
    }
    if (!any) throw DataError(std::string(which) + ": no unmasked token");
  };
  side(query, query_mask, "query");
  side(doc, doc_mask, "doc");
}

TokenizedPair encode_pair(std::span<const std::int64_t> query, std::span<const std::int64_t> doc,
                          std::size_t query_length, std::size_t doc_length) {
  auto fit = [](std::span<const std::int64_t> ids, std::size_t length,
                std::vector<std::int64_t>& out, std::vector<std::uint8_t>& mask) {
    out.assign(length, kPadId);
    mask.assign(length, 0);
    std::copy_n(ids.begin(), std::min(length, ids.size()), out.begin());
    for (std::size_t i = 0; i < length; ++i) mask[i] = out[i] != kPadId;
  };
  TokenizedPair p;
  fit(query, query_length, p.query, p.query_mask);
  fit(doc, doc_length, p.doc, p.doc_mask);
  p.validate();
  return p;
}

PairBatch make_batch(std::span<const TokenizedPair> pairs, const RankerConfig& config) {
  if (pairs.empty()) throw ShapeError("make_batch: empty batch");
  const std::size_t b = pairs.size(), lq = config.query_length, ld = config.doc_length;
  PairBatch batch;
  batch.query = {{b, lq}, {}};
  batch.doc = {{b, ld}, {}};
  batch.query.ids.reserve(b * lq);
  batch.doc.ids.reserve(b * ld);
  batch.query_mask = Tensor(Shape{b, lq});
  batch.doc_mask = Tensor(Shape{b, ld});
  for (std::size_t s = 0; s < b; ++s) {
    const TokenizedPair& p = pairs[s];
    if (p.query.size() != lq || p.doc.size() != ld) {
      throw ShapeError("make_batch: pair lengths " + std::to_string(p.query.size()) + "/" +
                       std::to_string(p.doc.size()) + " differ from configured " +
                       std::to_string(lq) + "/" + std::to_string(ld));
    }
    p.validate();
    batch.query.ids.insert(batch.query.ids.end(), p.query.begin(), p.query.end());
    batch.doc.ids.insert(batch.doc.ids.end(), p.doc.begin(), p.doc.end());
    for (std::size_t i = 0; i < lq; ++i) batch.query_mask[s * lq + i] = p.query_mask[i];
    for (std::size_t i = 0; i < ld; ++i) batch.doc_mask[s * ld + i] = p.doc_mask[i];
  }
  return batch;
}

std::vector<double> compute_idf(std::span<const std::vector<std::int64_t>> docs,
                                std::size_t vocab_size) {
  std::vector<double> df(vocab_size, 0.0);
  for (const auto& doc : docs) {
    std::set<std::int64_t> seen(doc.begin(), doc.end());
    for (std::int64_t id : seen) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
        throw DataError("compute_idf: token id " + std::to_string(id) + " outside vocabulary");
      }
      df[static_cast<std::size_t>(id)] += 1.0;
    }
  }
  const double n = static_cast<double>(docs.size());
  std::vector<double> idf(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) idf[i] = std::log(1.0 + n / (1.0 + df[i]));
  return idf;
}

Tensor duet_local_matrix(const PairBatch& batch, std::span<const double> idf) {
  if (idf.empty()) throw StateError("duet: idf table not fitted");
  const std::size_t b = batch.size();
  const std::size_t lq = batch.query.shape[1], ld = batch.doc.shape[1];
  Tensor out(Shape{b, lq * ld});
  for (std::size_t s = 0; s < b; ++s) {
    std::map<std::int64_t, double> tf;
    for (std::size_t j = 0; j < ld; ++j) {
      if (batch.doc_mask[s * ld + j] != 0.0) tf[batch.doc.ids[s * ld + j]] += 1.0;
    }
    for (std::size_t i = 0; i < lq; ++i) {
      if (batch.query_mask[s * lq + i] == 0.0) continue;
      const std::int64_t w = batch.query.ids[s * lq + i];
      auto it = tf.find(w);
      if (it == tf.end()) continue;
      if (static_cast<std::size_t>(w) >= idf.size()) {
        throw ShapeError("duet: token id " + std::to_string(w) + " outside idf table");
      }
      const double weight = it->second * idf[static_cast<std::size_t>(w)];
      for (std::size_t j = 0; j < ld; ++j) {
        if (batch.doc_mask[s * ld + j] != 0.0 && batch.doc.ids[s * ld + j] == w) {
          out[s * lq * ld + i * ld + j] = weight;
        }
      }
    }
  }
  return out;
}

Var drmm_relevance(Var histogram, const ad::Bindings& params) {
  const Shape& s = histogram.shape();
  if (s.size() != 3) throw ShapeError("drmm_relevance: histogram must be [B, Lq, bins]");
  Var h = ad::tanh(linear(histogram, params, "drmm.hidden"));
  return ad::reshape(ad::tanh(linear(h, params, "drmm.out")), {s[0], s[1]});
}

ad::ParameterSet init_parameters(const RankerConfig& config, std::size_t vocab_size,
                                 std::uint64_t seed) {
  if (vocab_size < 2) throw ConfigError("ranker: vocabulary needs at least pad and unknown rows");
  config.validate();
  Tensor table(Shape{vocab_size, config.embedding_dim});
  Rng rng(derive_seed(seed, 1));
  for (std::size_t i = config.embedding_dim; i < table.size(); ++i) {
    table[i] = rng.uniform(-config.embedding_init, config.embedding_init);
  }
  return build_parameters(config, std::move(table), seed);
}

ad::ParameterSet init_parameters(const RankerConfig& config, const Tensor& embedding,
                                 std::uint64_t seed) {
  if (embedding.rank() != 2 || embedding.dim(1) != config.embedding_dim || embedding.dim(0) < 2) {
    throw ShapeError("ranker: embedding table " + ad::shape_string(embedding.shape()) +
                     " does not match dimension " + std::to_string(config.embedding_dim));
  }
  Tensor table = embedding;
  std::fill_n(table.data(), config.embedding_dim, 0.0);
  return build_parameters(config, std::move(table), seed);
}

Var forward(ad::Tape& tape, const ad::Bindings& params, const PairBatch& batch,
            const RankerConfig& config, std::span<const double> idf) {
  const std::size_t b = batch.size();
  if (b == 0) throw ShapeError("ranker: empty batch");
  if (batch.query.shape != Shape{b, config.query_length} ||
      batch.doc.shape != Shape{b, config.doc_length}) {
    throw ShapeError("ranker: batch lengths differ from config");
  }
  Var table = param(params, "embedding");
  Var eq = ad::embedding(table, batch.query) * tape.constant(channel_mask(batch.query_mask));
  Var ed = ad::embedding(table, batch.doc) * tape.constant(channel_mask(batch.doc_mask));
  Var score;
  switch (config.head) {
    case HeadType::drmm: score = score_drmm(params, eq, ed, batch, config); break;
    case HeadType::knrm: score = score_knrm(params, eq, ed, batch, config); break;
    case HeadType::duet: score = score_duet(tape, params, eq, ed, batch, config, idf); break;
    case HeadType::pooled_dot: score = score_pooled_dot(eq, ed, batch); break;
    case HeadType::maxsim: score = score_maxsim(eq, ed, batch); break;
  }
  return ad::reshape(score, {b});
}

ScoredBatch score_batch(std::span<const TokenizedPair> pairs, const ad::ParameterSet& params,
                        const RankerConfig& config, std::span<const double> idf) {
  PairBatch batch = make_batch(pairs, config);
  ad::Tape tape(false);
  ad::Bindings bound = ad::bind_parameters(tape, params);
  Var s = forward(tape, bound, batch, config, idf);
  const Tensor& v = s.value();
  return {std::vector<double>(v.values().begin(), v.values().end())};
}

Ranker::Ranker(RankerConfig config, std::size_t vocab_size, std::uint64_t seed)
    : config_(std::move(config)), params_(init_parameters(config_, vocab_size, seed)) {}

Ranker::Ranker(RankerConfig config, const Tensor& embedding, std::uint64_t seed)
    : config_(std::move(config)), params_(init_parameters(config_, embedding, seed)) {}

std::size_t Ranker::vocab_size() const { return params_.at("embedding").dim(0); }

void Ranker::set_idf(std::vector<double> idf) {
  if (idf.size() != vocab_size()) {
    throw ShapeError("ranker: idf table has " + std::to_string(idf.size()) + " entries, vocabulary " +
                     std::to_string(vocab_size()));
  }
  idf_ = std::move(idf);
}

void Ranker::fit_idf(std::span<const std::vector<std::int64_t>> docs) {
  idf_ = compute_idf(docs, vocab_size());
}

Var Ranker::forward(ad::Tape& tape, const ad::Bindings& params, const PairBatch& batch) const {
  return rank::forward(tape, params, batch, config_, idf_);
}

ScoredBatch Ranker::score_batch(std::span<const TokenizedPair> pairs) const {
  return rank::score_batch(pairs, params_, config_, idf_);
}

}  // namespace contir::rank
