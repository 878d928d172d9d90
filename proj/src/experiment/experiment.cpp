#include "contir/experiment/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "contir/data/task_io.hpp"
#include "contir/data/synthetic.hpp"
#include "contir/data/topics.hpp"
#include "contir/error.hpp"
#include "contir/log.hpp"

namespace contir::exp {

namespace fs = std::filesystem;

namespace {

std::string num(double x) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ec == std::errc{} ? p : buf);
}

data::TopicDistanceMatrix pair_distances(const data::TopicDistanceMatrix& m, std::size_t a, std::size_t b) {
  data::TopicDistanceMatrix out;
  if (m.distance.empty()) return out;
  if (a > m.distance.size() || b > m.distance.size()) {
    throw DataError("topic distances cover " + std::to_string(m.distance.size()) + " topics, pair names " +
                    std::to_string(a) + ":" + std::to_string(b));
  }
  if (!m.centroids.empty()) out.centroids = {m.centroids[a - 1], m.centroids[b - 1]};
  const double d = m.distance[a - 1][b - 1];
  out.distance = {{0.0, d}, {d, 0.0}};
  return out;
}

PreparedData base_data(const ExperimentConfig& config, const DatasetSpec& spec) {
  PreparedData out;
  switch (config.source) {
    case DataSource::synthetic: {
      data::SyntheticConfig s = config.synthetic;
      s.seed = spec.seed;
      if (spec.alpha) s.alpha = *spec.alpha;
      if (spec.volume) {
        std::vector<std::size_t> q;
        for (std::size_t t = 0; t < s.tasks; ++t) q.push_back(s.train_queries_for(t));
        q.back() = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(q.back()) * *spec.volume)));
        s.train_queries = q;
      }
      data::SyntheticData d = data::generate_synthetic(s);
      out.dataset = std::move(d.dataset);
      out.distances = std::move(d.distances);
      break;
    }
    case DataSource::ingest: {
      out.dataset = data::ingest_tasks(config.dataset_path);
      const fs::path csv = config.dataset_path / "topic_distances.csv";
      if (fs::exists(csv)) {
        std::ifstream in(csv);
        out.distances.distance = data::read_distance_csv(in);
      }
      break;
    }
    case DataSource::corpus: {
      std::ifstream in(config.corpus_path);
      if (!in) throw DataError("cannot open corpus " + config.corpus_path.string());
      data::TaskData all;
      all.train = data::read_samples(in, config.corpus_path.string(), 0);
      data::Vocabulary vocab = data::build_vocabulary({all});
      ad::Tensor emb = data::load_embeddings(config.corpus_embeddings, vocab, config.corpus.seed);
      data::CorpusSplit split = data::split_corpus(all.train, vocab, emb, config.corpus);
      out.dataset = std::move(split.dataset);
      out.distances = std::move(split.distances);
      break;
    }
  }
  return out;
}

std::optional<fs::path> ranker_embeddings(const ExperimentConfig& config) {
  if (config.embeddings) return config.embeddings;
  if (config.source == DataSource::corpus) return config.corpus_embeddings;
  return std::nullopt;
}

class DataCache {
 public:
  explicit DataCache(const ExperimentConfig& config) : config_(config) {}

  std::shared_ptr<const PreparedData> get(const DatasetSpec& spec) {
    std::shared_future<std::shared_ptr<const PreparedData>> f;
    std::promise<std::shared_ptr<const PreparedData>> p;
    bool build = false;
    {
      std::lock_guard lock(mu_);
      auto it = entries_.find(spec.key());
      if (it == entries_.end()) {
        f = p.get_future().share();
        entries_.emplace(spec.key(), f);
        build = true;
      } else {
        f = it->second;
      }
    }
    if (build) {
      try {
        p.set_value(std::make_shared<const PreparedData>(prepare_data(config_, spec)));
      } catch (...) {
        p.set_exception(std::current_exception());
      }
    }
    return f.get();
  }

 private:
  const ExperimentConfig& config_;
  std::mutex mu_;
  std::map<std::string, std::shared_future<std::shared_ptr<const PreparedData>>> entries_;
};

std::vector<std::pair<std::string, std::string>> job_labels(const Job& job) {
  return {{"name", job.name},
          {"kind", job.kind},
          {"head", std::string(rank::head_name(job.head))},
          {"strategy", std::string(strat::strategy_name(job.strategy))},
          {"seed", std::to_string(job.seed)},
          {"axis", job.axis},
          {"axis_value", job.axis_value}};
}

}  // namespace

std::string DatasetSpec::key() const {
  std::string k = "seed=" + std::to_string(seed);
  if (alpha) k += ";alpha=" + num(*alpha);
  if (volume) k += ";volume=" + num(*volume);
  if (topics) k += ";pair=" + std::to_string(topics->first) + ":" + std::to_string(topics->second);
  return k;
}

data::ContinualDataset topic_pair(const data::ContinualDataset& dataset, std::size_t a, std::size_t b) {
  if (a == 0 || b == 0 || a > dataset.size() || b > dataset.size() || a == b) {
    throw ConfigError("topic pair " + std::to_string(a) + ":" + std::to_string(b) + " is not valid for " +
                      std::to_string(dataset.size()) + " tasks");
  }
  data::ContinualDataset out;
  for (std::size_t src : {a, b}) {
    data::TaskData t = dataset.tasks[src - 1];
    t.id = out.tasks.size() + 1;
    for (auto* rows : {&t.train, &t.test}) {
      for (data::Sample& s : *rows) s.task = t.id;
    }
    out.tasks.push_back(std::move(t));
  }
  out.vocab = data::build_vocabulary(out.tasks);
  return out;
}

PreparedData prepare_data(const ExperimentConfig& config, const DatasetSpec& spec) {
  DatasetSpec base = spec;
  base.topics.reset();
  PreparedData full = base_data(config, base);
  if (!spec.topics) return full;
  PreparedData out;
  out.dataset = topic_pair(full.dataset, spec.topics->first, spec.topics->second);
  out.distances = pair_distances(full.distances, spec.topics->first, spec.topics->second);
  if (out.distances.distance.empty()) {
    throw DataError("topic pair sweep needs topic distances (topic_distances.csv next to the task files)");
  }
  return out;
}

std::vector<Job> plan_jobs(const ExperimentConfig& config) {
  config.validate();
  std::vector<Job> jobs;
  auto add = [&](const std::string& kind, const std::string& axis, const std::string& value, const std::string& tag,
                 const DatasetSpec& spec) {
    for (rank::HeadType head : config.heads) {
      for (strat::StrategyTag tag_s : config.strategies) {
        for (std::uint64_t seed : config.seeds) {
          Job j;
          j.kind = kind;
          j.head = head;
          j.strategy = tag_s;
          j.seed = seed;
          j.axis = axis;
          j.axis_value = value;
          j.config = config.base;
          j.config.ranker.head = head;
          j.config.strategy.tag = tag_s;
          if (auto it = config.lambda_by_tag.find(tag_s); it != config.lambda_by_tag.end()) {
            j.config.strategy.lambda = it->second;
          }
          j.config.seed = seed;
          j.data = spec;
          j.data.seed = config.synthetic_seed_per_run ? seed : config.synthetic.seed;
          std::string stem = std::string(rank::head_name(head)) + "-" + std::string(strat::strategy_name(tag_s));
          if (!tag.empty()) stem += "-" + tag;
          j.name = (kind == "grid" ? std::string() : kind + "/") + stem + "-s" + std::to_string(seed);
          j.config.validate();
          jobs.push_back(std::move(j));
        }
      }
    }
  };
  if (config.grid) add("grid", "", "", "", {});
  for (double a : config.sweep_alphas) {
    DatasetSpec s;
    s.alpha = a;
    add("topic", "alpha", num(a), "a" + num(a), s);
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs = config.sweep_topic_pairs;
  if (config.sweep_all_topic_pairs) {
    std::size_t T = 0;
    if (config.source == DataSource::synthetic) {
      T = config.synthetic.tasks;
    } else if (config.source == DataSource::corpus) {
      T = config.corpus.topics;
    } else {
      while (fs::exists(data::task_file(config.dataset_path, T + 1, true))) ++T;
    }
    for (std::size_t a = 1; a <= T; ++a) {
      for (std::size_t b = a + 1; b <= T; ++b) pairs.emplace_back(a, b);
    }
  }
  for (auto [a, b] : pairs) {
    DatasetSpec s;
    s.topics = std::make_pair(a, b);
    const std::string v = std::to_string(a) + "_" + std::to_string(b);
    add("topic", "pair", v, "p" + v, s);
  }
  for (double m : config.sweep_volumes) {
    DatasetSpec s;
    s.volume = m;
    add("volume", "volume", num(m), "x" + num(m), s);
  }
  std::map<std::string, int> seen;
  for (const Job& j : jobs) {
    if (++seen[j.name] > 1) throw ConfigError("run " + j.name + " is listed twice");
  }
  return jobs;
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("CONTIR_THREADS"); env && *env) {
    std::size_t n = 0;
    const std::string_view s(env);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec != std::errc{} || p != s.data() + s.size() || n == 0) {
      throw ConfigError("CONTIR_THREADS must be a positive integer, got '" + std::string(s) + "'");
    }
    return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<RunOutcome> run_experiment(const ExperimentConfig& config, const fs::path& root,
                                       const ExperimentOptions& options) {
  const std::vector<Job> jobs = plan_jobs(config);
  const std::size_t cap = std::max<std::size_t>(1, options.threads);
  std::vector<RunOutcome> outcomes(jobs.size());
  DataCache cache(config);
  const std::optional<fs::path> emb_path = ranker_embeddings(config);

  auto execute = [&](std::size_t i) {
    const Job& job = jobs[i];
    RunOutcome& out = outcomes[i];
    out.name = job.name;
    const fs::path dir = root / job.name;
    runner::RunOptions ro;
    ro.out_dir = dir;
    ro.dry_run = options.dry_run;
    ro.labels = job_labels(job);
    runner::RunConfig rc = job.config;
    rc.eval_threads = std::min(rc.eval_threads, cap);
    std::shared_ptr<const PreparedData> data;
    std::optional<ad::Tensor> emb;
    try {
      data = cache.get(job.data);
      const auto& d = data->distances.distance;
      if (!d.empty() && d.size() >= data->dataset.size() && data->dataset.size() >= 2) {
        ro.labels.emplace_back("distance", num(d[0][data->dataset.size() - 1]));
      }
      if (emb_path) emb = data::load_embeddings(*emb_path, data->dataset.vocab, job.seed);
    } catch (const std::exception& e) {
      out.error = e.what();
      runner::RunManifest m;
      m.labels = ro.labels;
      m.config = rc.describe();
      m.version = runner::version_tag();
      m.status = "failed";
      m.error = out.error;
      fs::create_directories(dir);
      m.write(dir / "manifest");
      return;
    }
    ro.embedding = emb ? &*emb : nullptr;
    try {
      runner::run_continual(rc, data->dataset, ro);
      out.ok = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      execute(i);
      if (!outcomes[i].ok) log_error("run " + jobs[i].name + " failed: " + outcomes[i].error);
    }
  };
  const std::size_t workers = std::min(cap, jobs.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  return outcomes;
}

std::size_t write_taskgen(const ExperimentConfig& config, const fs::path& out) {
  if (config.source == DataSource::ingest) throw ConfigError("taskgen needs dataset.source synthetic or corpus");
  config.validate();
  DatasetSpec spec;
  spec.seed = config.synthetic.seed;
  PreparedData d = prepare_data(config, spec);
  fs::create_directories(out);
  data::write_tasks(out, d.dataset.tasks);
  const fs::path csv = out / "topic_distances.csv";
  std::ofstream f(csv, std::ios::binary);
  if (!f) throw DataError("cannot write " + csv.string());
  data::write_distance_csv(f, d.distances);
  return d.dataset.size();
}

}  // namespace contir::exp
