#include "contir/runner/runner.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "contir/data/sampling.hpp"
#include "contir/error.hpp"
#include "contir/log.hpp"
#include "contir/random.hpp"
#include "contir/rankers/interaction.hpp"
#include "contir/strategies/gem.hpp"

namespace contir::runner {

using ad::GradientMap;
using ad::ParameterSet;
using ad::Tape;
using ad::Var;
using data::Sample;
using data::Triple;
using strat::StrategyTag;

namespace {

// seed streams
constexpr std::uint64_t kEpochStream = 11;
constexpr std::uint64_t kMergeStream = 12;
constexpr std::uint64_t kMemoryStream = 13;
constexpr std::uint64_t kFisherStream = 14;
constexpr std::uint64_t kMasStream = 15;
constexpr std::uint64_t kGemStream = 16;

std::string fmt(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(std::size_t v) { return std::to_string(v); }

// Token ids of every row, encoded once.
struct EncodedRows {
  std::vector<std::vector<std::int64_t>> query;
  std::vector<std::vector<std::int64_t>> doc;
};

EncodedRows encode_rows(std::span<const Sample> rows, const data::Vocabulary& vocab) {
  EncodedRows e;
  e.query.reserve(rows.size());
  e.doc.reserve(rows.size());
  for (const Sample& r : rows) {
    e.query.push_back(vocab.encode(r.query_text));
    e.doc.push_back(vocab.encode(r.doc_text));
  }
  return e;
}

struct TripleBatch {
  rank::PairBatch pos;
  rank::PairBatch neg;
};

TripleBatch make_triple_batch(std::span<const Triple> triples, const EncodedRows& rows,
                              const rank::RankerConfig& cfg) {
  std::vector<rank::TokenizedPair> pos, neg;
  pos.reserve(triples.size());
  neg.reserve(triples.size());
  for (const Triple& t : triples) {
    pos.push_back(rank::encode_pair(rows.query[t.pos], rows.doc[t.pos], cfg.query_length,
                                    cfg.doc_length));
    neg.push_back(rank::encode_pair(rows.query[t.pos], rows.doc[t.neg], cfg.query_length,
                                    cfg.doc_length));
  }
  return {rank::make_batch(pos, cfg), rank::make_batch(neg, cfg)};
}

// Unregularized pairwise loss and its gradient.
GradientMap pair_gradient(const rank::Ranker& ranker, const TripleBatch& b, double margin,
                          double* loss = nullptr) {
  Tape tape(true);
  ad::Bindings theta = ad::bind_parameters(tape, ranker.parameters());
  Var l = rank::margin_ranking_loss(ranker.forward(tape, theta, b.pos),
                                    ranker.forward(tape, theta, b.neg), margin);
  if (loss) *loss = l.value().item();
  return tape.backward(l);
}

// Gradient of mean((R(q, pos) - R(q, neg))^2).
GradientMap output_gradient(const rank::Ranker& ranker, const TripleBatch& b) {
  Tape tape(true);
  ad::Bindings theta = ad::bind_parameters(tape, ranker.parameters());
  Var d = ad::subtract(ranker.forward(tape, theta, b.pos), ranker.forward(tape, theta, b.neg));
  return tape.backward(ad::mean_all(ad::multiply(d, d)));
}

void add_into(GradientMap& into, const GradientMap& g) {
  auto a = into.begin();
  for (auto b = g.begin(); b != g.end(); ++a, ++b) {
    auto dst = a->second.values();
    auto src = b->second.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void zero_pad_row(GradientMap& g) {
  if (!g.contains("embedding")) return;
  ad::Tensor& e = g.at("embedding");
  std::fill(e.data(), e.data() + e.dim(1), 0.0);
}

// All triples of one pass over `rows`, in one list.
std::vector<Triple> all_triples(std::span<const Sample> rows, std::size_t negatives,
                                std::uint64_t seed, std::size_t* skipped = nullptr) {
  data::PairwiseEpoch e = data::sample_pairwise(rows, negatives, std::max<std::size_t>(rows.size() * negatives, 1), seed);
  if (skipped) *skipped = e.skipped;
  std::vector<Triple> out;
  for (auto& b : e.batches) out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

void RunConfig::validate() const {
  ranker.validate();
  strategy.validate();
  optimizer.validate();
  if (batch_size == 0) throw ConfigError("run: batch_size must be >= 1");
  if (negatives == 0) throw ConfigError("run: negatives must be >= 1");
  if (!(margin >= 0.0) || !std::isfinite(margin)) throw ConfigError("run: margin must be finite and >= 0");
  if (eval_threads == 0) throw ConfigError("run: eval_threads must be >= 1");
}

std::vector<std::pair<std::string, std::string>> RunConfig::describe() const {
  return {
      {"ranker.head", std::string(rank::head_name(ranker.head))},
      {"ranker.embedding_dim", fmt(ranker.embedding_dim)},
      {"ranker.query_length", fmt(ranker.query_length)},
      {"ranker.doc_length", fmt(ranker.doc_length)},
      {"ranker.histogram_bins", fmt(ranker.histogram_bins)},
      {"ranker.hidden_units", fmt(ranker.hidden_units)},
      {"ranker.conv_window", fmt(ranker.conv_window)},
      {"ranker.conv_chunks", fmt(ranker.conv_chunks)},
      {"ranker.kernels", fmt(ranker.kernels.mu.size())},
      {"ranker.kernel_log", ranker.kernel_log ? "true" : "false"},
      {"ranker.embedding_init", fmt(ranker.embedding_init)},
      {"strategy", std::string(strat::strategy_name(strategy.tag))},
      {"strategy.lambda", fmt(strategy.effective_lambda())},
      {"strategy.fisher_samples", fmt(strategy.fisher_samples)},
      {"strategy.si_damping", fmt(strategy.si_damping)},
      {"strategy.memory_capacity", fmt(strategy.memory_capacity)},
      {"strategy.gem_ridge", fmt(strategy.gem_ridge)},
      {"optimizer.lr", fmt(optimizer.learning_rate)},
      {"optimizer.momentum", fmt(optimizer.momentum)},
      {"epochs", fmt(epochs)},
      {"batch_size", fmt(batch_size)},
      {"negatives", fmt(negatives)},
      {"margin", fmt(margin)},
      {"seed", std::to_string(seed)},
      {"eval_threads", fmt(eval_threads)},
  };
}

AgentState::AgentState(const RunConfig& config, const data::Vocabulary& vocabulary,
                       const ad::Tensor* embedding)
    : ranker(embedding ? rank::Ranker(config.ranker, *embedding, config.seed)
                       : rank::Ranker(config.ranker, vocabulary.size(), config.seed)),
      memory(config.strategy.memory_capacity),
      optimizer(config.optimizer),
      vocab(&vocabulary),
      seed(config.seed) {
  if (embedding && embedding->dim(0) != vocabulary.size()) {
    throw ShapeError("agent: embedding table has " + std::to_string(embedding->dim(0)) +
                     " rows, vocabulary " + std::to_string(vocabulary.size()));
  }
}

rank::TokenizedPair encode_sample(const Sample& row, const data::Vocabulary& vocab,
                                  const rank::RankerConfig& config) {
  std::vector<std::int64_t> q = vocab.encode(row.query_text);
  std::vector<std::int64_t> d = vocab.encode(row.doc_text);
  return rank::encode_pair(q, d, config.query_length, config.doc_length);
}

std::vector<Sample> training_set(AgentState& agent, const data::TaskData& task,
                                 const RunConfig& config) {
  if (config.strategy.tag != StrategyTag::nr || agent.memory.tasks() == 0) return task.train;
  Rng rng(derive_seed(agent.seed, kMergeStream, task.id));
  return strat::nr_merge<Sample>(task.train, agent.memory, rng);
}

TrainStats train_task(AgentState& agent, std::span<const Sample> rows, const RunConfig& config) {
  if (rows.empty()) throw DataError("train: task " + std::to_string(agent.task + 1) + " has no training rows");
  const std::size_t task_no = agent.task + 1;
  const rank::RankerConfig& rcfg = agent.ranker.config();
  const StrategyTag tag = config.strategy.tag;
  const double lambda = config.strategy.effective_lambda();
  const bool penalize = strat::uses_penalty(tag) && lambda != 0.0 && !agent.strategy.omega.empty();
  const bool constrain = tag == StrategyTag::gem && agent.memory.tasks() > 0;

  EncodedRows enc = encode_rows(rows, *agent.vocab);
  if (rcfg.head == rank::HeadType::duet) agent.ranker.fit_idf(enc.doc);

  // per-slice reference batches for gem, fixed for the whole task
  std::vector<TripleBatch> refs;
  std::vector<EncodedRows> ref_rows;
  if (constrain) {
    for (std::size_t s = 0; s < agent.memory.tasks(); ++s) {
      auto slice = agent.memory.slice(s);
      std::vector<Triple> t = all_triples(slice, config.negatives, derive_seed(agent.seed, kGemStream, task_no * 1000 + s));
      if (t.empty()) throw DataError("gem: memory slice " + std::to_string(s + 1) + " yields no training pair");
      ref_rows.push_back(encode_rows(slice, *agent.vocab));
      refs.push_back(make_triple_batch(t, ref_rows.back(), rcfg));
    }
  }

  if (tag == StrategyTag::si) strat::si_begin_task(agent.strategy.path, agent.ranker.parameters());

  TrainStats stats;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    data::PairwiseEpoch ep = data::sample_pairwise(rows, config.negatives, config.batch_size,
                                                   derive_seed(agent.seed, kEpochStream, task_no * 1000 + epoch));
    stats.skipped_positives = ep.skipped;
    if (ep.batches.empty()) {
      throw DataError("train: task " + std::to_string(task_no) + " yields no training pair");
    }
    for (std::size_t bi = 0; bi < ep.batches.size(); ++bi) {
      ParameterSet& theta = agent.ranker.parameters();
      TripleBatch batch = make_triple_batch(ep.batches[bi], enc, rcfg);
      GradientMap grad;
      try {
        grad = pair_gradient(agent.ranker, batch, config.margin, &stats.last_loss);
        if (!std::isfinite(stats.last_loss)) throw NumericError("loss is not finite");
        zero_pad_row(grad);
        GradientMap total = grad;
        if (penalize) {
          Tape tape(true);
          ad::Bindings b = ad::bind_parameters(tape, theta);
          Var pen = strat::penalty_term(tape, b, agent.strategy.anchor, agent.strategy.omega, lambda);
          stats.last_loss += pen.value().item();
          add_into(total, tape.backward(pen));
          zero_pad_row(total);
        }
        if (constrain) {
          std::size_t next = 0;
          strat::Matrix rows_g = strat::gem_reference_gradients<Sample>(
              agent.memory, [&](std::span<const Sample>) {
                GradientMap r = pair_gradient(agent.ranker, refs[next++], config.margin);
                zero_pad_row(r);
                return r;
              });
          strat::Projection p = strat::gem_project(total.flatten(), rows_g, config.strategy.gem_ridge);
          if (p.fallback) {
            log_warning("gem: QP did not converge at task " + std::to_string(task_no) +
                        ", using the raw gradient");
          }
          if (p.projected) {
            ++stats.projections;
            total.unflatten(p.gradient);
          }
        }
        ad::optimizer_step(theta, total, agent.optimizer);
      } catch (const NumericError& e) {
        throw NumericError("task " + std::to_string(task_no) + " epoch " + std::to_string(epoch + 1) +
                           " batch " + std::to_string(bi + 1) + ": " + e.what());
      }
      if (tag == StrategyTag::si) strat::si_accumulate(agent.strategy.path, grad, theta);
      ++stats.batches;
      ++agent.steps;
    }
    ++agent.epochs_run;
  }
  return stats;
}

void end_task(AgentState& agent, std::span<const Sample> rows, const RunConfig& config) {
  const std::size_t task_no = agent.task + 1;
  const rank::RankerConfig& rcfg = agent.ranker.config();
  const ParameterSet& theta = agent.ranker.parameters();
  strat::StrategyState& st = agent.strategy;

  switch (config.strategy.tag) {
    case StrategyTag::l2:
      st.omega = strat::l2_importance(theta);
      break;
    case StrategyTag::ewc:
    case StrategyTag::ewcol: {
      EncodedRows enc = encode_rows(rows, *agent.vocab);
      std::vector<Triple> triples =
          all_triples(rows, config.negatives, derive_seed(agent.seed, kFisherStream, task_no));
      if (triples.empty()) throw DataError("fisher: task " + std::to_string(task_no) + " yields no training pair");
      Rng rng(derive_seed(agent.seed, kFisherStream, task_no + 1000000));
      st.omega = strat::fisher_importance(
          triples.size(), config.strategy.fisher_samples, rng,
          [&](std::size_t i) {
            GradientMap g = pair_gradient(agent.ranker, make_triple_batch(std::span(&triples[i], 1), enc, rcfg),
                                          config.margin);
            zero_pad_row(g);
            return g;
          },
          config.strategy.tag == StrategyTag::ewcol, st.omega);
      break;
    }
    case StrategyTag::si:
      st.omega = strat::si_consolidate(st.path.omega, theta, st.path.start, config.strategy.si_damping, st.omega);
      break;
    case StrategyTag::mas: {
      EncodedRows enc = encode_rows(rows, *agent.vocab);
      data::PairwiseEpoch ep = data::sample_pairwise(rows, config.negatives, config.batch_size,
                                                     derive_seed(agent.seed, kMasStream, task_no));
      if (ep.batches.empty()) throw DataError("mas: task " + std::to_string(task_no) + " yields no training pair");
      st.omega = strat::mas_importance(
          ep.batches.size(),
          [&](std::size_t k) {
            GradientMap g = output_gradient(agent.ranker, make_triple_batch(ep.batches[k], enc, rcfg));
            zero_pad_row(g);
            return g;
          },
          st.omega);
      break;
    }
    case StrategyTag::nr:
    case StrategyTag::gem: {
      Rng rng(derive_seed(agent.seed, kMemoryStream, task_no));
      agent.memory.add_task(rows, rng);
      break;
    }
    case StrategyTag::none:
      break;
  }
  if (strat::uses_penalty(config.strategy.tag)) st.anchor = theta;
  ++agent.task;
}

double evaluate_task(std::span<const Sample> test, const ScoreFn& score) {
  if (test.empty()) throw DataError("evaluate: empty test set");
  std::vector<std::string> order;
  std::map<std::string, std::vector<Sample>> groups;
  for (const Sample& r : test) {
    auto [it, fresh] = groups.try_emplace(r.query_id);
    if (fresh) order.push_back(r.query_id);
    it->second.push_back(r);
  }
  metrics::RankedRun run;
  run.reserve(order.size());
  for (const std::string& q : order) {
    const std::vector<Sample>& rows = groups[q];
    std::vector<double> s = score(rows);
    if (s.size() != rows.size()) {
      throw ShapeError("evaluate: score function returned " + std::to_string(s.size()) + " scores for " +
                       std::to_string(rows.size()) + " candidates");
    }
    std::vector<metrics::ScoredCandidate> cands;
    std::set<std::string> relevant;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      cands.push_back({rows[i].doc_id, s[i]});
      if (rows[i].relevance > 0.0) relevant.insert(rows[i].doc_id);
    }
    run.push_back(metrics::rank_candidates(q, std::move(cands), std::move(relevant)));
  }
  return metrics::mrr(run);
}

ScoreFn ranker_scores(const AgentState& agent) {
  return [&agent](std::span<const Sample> rows) {
    std::vector<rank::TokenizedPair> pairs;
    pairs.reserve(rows.size());
    for (const Sample& r : rows) pairs.push_back(encode_sample(r, *agent.vocab, agent.ranker.config()));
    return agent.ranker.score_batch(pairs).scores;
  };
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "version=" << version << '\n';
  out << "status=" << status << '\n';
  if (!error.empty()) {
    std::string e = error;
    std::replace(e.begin(), e.end(), '\n', ' ');
    out << "error=" << e << '\n';
  }
  for (const auto& [k, v] : labels) out << "run." << k << '=' << v << '\n';
  for (const auto& [k, v] : config) out << "config." << k << '=' << v << '\n';
  for (std::size_t i = 0; i < dataset_fingerprints.size(); ++i) {
    out << (i == 0 ? std::string("dataset.fingerprint") : "dataset.task_" + std::to_string(i) + ".fingerprint")
        << '=' << dataset_fingerprints[i] << '\n';
  }
  for (std::size_t t = 0; t < task_seconds.size(); ++t) {
    out << "task_" << t + 1 << ".seconds=" << fmt(task_seconds[t]) << '\n';
  }
}

std::string version_tag() {
#ifdef CONTIR_VERSION
  return CONTIR_VERSION;
#else
  return "dev";
#endif
}

namespace {

void write_matrix(const std::filesystem::path& dir, const metrics::PerformanceMatrix& p) {
  std::ofstream out(dir / "P_matrix.csv");
  if (!out) throw DataError("cannot write " + (dir / "P_matrix.csv").string());
  p.write_csv(out);
}

void write_metrics(const std::filesystem::path& dir, const RunResult& r) {
  std::ofstream out(dir / "metrics.txt");
  if (!out) throw DataError("cannot write " + (dir / "metrics.txt").string());
  if (r.p_final) out << "p_final=" << fmt(*r.p_final) << '\n';
  if (r.bwt) out << "bwt=" << fmt(*r.bwt) << '\n';
  if (r.fwt) out << "fwt=" << fmt(*r.fwt) << '\n';
  for (std::size_t t = 0; t < r.manifest.task_seconds.size(); ++t) {
    out << "task_" << t + 1 << ".seconds=" << fmt(r.manifest.task_seconds[t]) << '\n';
  }
}

}  // namespace

RunResult run_continual(const RunConfig& config, const data::ContinualDataset& dataset,
                        const RunOptions& options) {
  config.validate();
  const std::size_t T = dataset.size();
  if (T == 0) throw DataError("run: dataset has no tasks");

  RunResult result;
  result.performance = metrics::PerformanceMatrix(T);
  RunManifest& m = result.manifest;
  m.config = config.describe();
  m.labels = options.labels;
  m.version = version_tag();
  m.dataset_fingerprints.push_back(data::fingerprint(dataset));
  for (const data::TaskData& t : dataset.tasks) {
    data::ContinualDataset one;
    one.tasks.push_back(t);
    m.dataset_fingerprints.push_back(data::fingerprint(one));
  }

  std::optional<std::filesystem::path> dir = options.out_dir;
  std::ofstream log_file;
  std::optional<ScopedLogSink> sink;
  if (dir) {
    std::filesystem::create_directories(*dir);
    m.status = options.dry_run ? "dry-run" : "running";
    m.write(*dir / "manifest");
    if (options.dry_run) return result;
    log_file.open(*dir / "log.txt");
    sink.emplace([&log_file](LogLevel level, std::string_view msg) {
      log_file << '[' << level_name(level) << "] " << msg << '\n';
      log_file.flush();
    });
  } else if (options.dry_run) {
    return result;
  }

  try {
    AgentState agent(config, dataset.vocab, options.embedding);
    ScoreFn score = options.score_override ? *options.score_override : ranker_scores(agent);
    for (std::size_t t = 0; t < T; ++t) {
      const data::TaskData& task = dataset.tasks[t];
      const auto start = std::chrono::steady_clock::now();
      std::vector<Sample> rows = training_set(agent, task, config);
      log_info("task " + std::to_string(t + 1) + ": training on " + std::to_string(rows.size()) + " rows");
      TrainStats ts = train_task(agent, rows, config);
      log_info("task " + std::to_string(t + 1) + ": " + std::to_string(ts.batches) + " batches, last loss " +
               fmt(ts.last_loss) + (ts.skipped_positives ? ", skipped positives " + std::to_string(ts.skipped_positives) : "") +
               (ts.projections ? ", gem projections " + std::to_string(ts.projections) : ""));
      end_task(agent, task.train, config);

      std::vector<double> row(T);
      std::vector<std::exception_ptr> errors(T);
      const std::size_t workers = std::min(config.eval_threads, T);
      auto eval = [&](std::size_t w) {
        for (std::size_t s = w; s < T; s += workers) {
          try {
            row[s] = evaluate_task(dataset.tasks[s].test, score);
          } catch (...) {
            errors[s] = std::current_exception();
          }
        }
      };
      if (workers <= 1) {
        eval(0);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(eval, w);
        for (auto& th : pool) th.join();
      }
      for (std::size_t s = 0; s < T; ++s) {
        if (errors[s]) std::rethrow_exception(errors[s]);
        result.performance.set(t, s, row[s]);
      }
      m.task_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      if (dir) write_matrix(*dir, result.performance);
      if (options.on_task_end) options.on_task_end(t, agent);
    }
    result.parameters = agent.ranker.parameters();
    result.p_final = metrics::p_final(result.performance);
    if (T >= 2) {
      result.bwt = metrics::bwt(result.performance);
      result.fwt = metrics::fwt(result.performance);
    }
  } catch (const std::exception& e) {
    log_error(e.what());
    if (dir) {
      m.status = "failed";
      m.error = e.what();
      write_matrix(*dir, result.performance);
      m.write(*dir / "manifest");
    }
    throw;
  }

  if (dir) {
    m.status = "complete";
    write_metrics(*dir, result);
    m.write(*dir / "manifest");
  }
  return result;
}

}  // namespace contir::runner
