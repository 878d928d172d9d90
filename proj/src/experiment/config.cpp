#include "contir/experiment/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "contir/error.hpp"

namespace contir::exp {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& v) {
  double x = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(x)) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  return x;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_uint(v)); }

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& v, F convert) {
  std::vector<T> out;
  for (const std::string& item : split_list(v)) out.push_back(convert(item));
  if (out.empty()) throw ConfigError("expected a non-empty list");
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

struct Key {
  const char* name;
  const char* fallback;  // default, as shown in the docs
  Setter set;
};

const std::vector<Key>& keys() {
  using C = ExperimentConfig;
  static const std::vector<Key> k = {
      {"dataset.source", "synthetic",
       [](C& c, const std::string& v) {
         if (v == "synthetic") c.source = DataSource::synthetic;
         else if (v == "ingest") c.source = DataSource::ingest;
         else if (v == "corpus") c.source = DataSource::corpus;
         else throw ConfigError("expected synthetic, ingest or corpus, got '" + v + "'");
       }},
      {"dataset.path", "", [](C& c, const std::string& v) { c.dataset_path = v; }},
      {"dataset.embeddings", "", [](C& c, const std::string& v) { c.embeddings = v; }},
      {"synthetic.tasks", "3", [](C& c, const std::string& v) { c.synthetic.tasks = to_size(v); }},
      {"synthetic.alpha", "0", [](C& c, const std::string& v) { c.synthetic.alpha = to_double(v); }},
      {"synthetic.topic_vocab", "60", [](C& c, const std::string& v) { c.synthetic.topic_vocab = to_size(v); }},
      {"synthetic.concepts", "10", [](C& c, const std::string& v) { c.synthetic.concepts = to_size(v); }},
      {"synthetic.train_queries", "500",
       [](C& c, const std::string& v) { c.synthetic.train_queries = to_list<std::size_t>(v, to_size); }},
      {"synthetic.test_queries", "100", [](C& c, const std::string& v) { c.synthetic.test_queries = to_size(v); }},
      {"synthetic.train_docs_per_query", "5",
       [](C& c, const std::string& v) { c.synthetic.train_docs_per_query = to_size(v); }},
      {"synthetic.test_docs_per_query", "20",
       [](C& c, const std::string& v) { c.synthetic.test_docs_per_query = to_size(v); }},
      {"synthetic.query_length", "3", [](C& c, const std::string& v) { c.synthetic.query_length = to_size(v); }},
      {"synthetic.doc_length", "12", [](C& c, const std::string& v) { c.synthetic.doc_length = to_size(v); }},
      {"synthetic.generic_block", "4", [](C& c, const std::string& v) { c.synthetic.generic_block = to_size(v); }},
      {"synthetic.generic_per_doc", "4",
       [](C& c, const std::string& v) { c.synthetic.generic_per_doc = to_size(v); }},
      {"synthetic.seed", "0",
       [](C& c, const std::string& v) {
         c.synthetic_seed_per_run = v == "run";
         if (!c.synthetic_seed_per_run) c.synthetic.seed = to_uint(v);
       }},
      {"corpus.path", "", [](C& c, const std::string& v) { c.corpus_path = v; }},
      {"corpus.embeddings", "", [](C& c, const std::string& v) { c.corpus_embeddings = v; }},
      {"corpus.topics", "2", [](C& c, const std::string& v) { c.corpus.topics = to_size(v); }},
      {"corpus.test_fraction", "0.2", [](C& c, const std::string& v) { c.corpus.test_fraction = to_double(v); }},
      {"corpus.max_iter", "100", [](C& c, const std::string& v) { c.corpus.max_iter = to_size(v); }},
      {"corpus.restarts", "10", [](C& c, const std::string& v) { c.corpus.restarts = to_size(v); }},
      {"corpus.seed", "0", [](C& c, const std::string& v) { c.corpus.seed = to_uint(v); }},
      {"ranker.heads", "knrm",
       [](C& c, const std::string& v) {
         c.heads = to_list<rank::HeadType>(v, [](const std::string& s) { return rank::parse_head(s); });
       }},
      {"ranker.embedding_dim", "300", [](C& c, const std::string& v) { c.base.ranker.embedding_dim = to_size(v); }},
      {"ranker.query_length", "20", [](C& c, const std::string& v) { c.base.ranker.query_length = to_size(v); }},
      {"ranker.doc_length", "128", [](C& c, const std::string& v) { c.base.ranker.doc_length = to_size(v); }},
      {"ranker.histogram_bins", "30", [](C& c, const std::string& v) { c.base.ranker.histogram_bins = to_size(v); }},
      {"ranker.hidden_units", "5", [](C& c, const std::string& v) { c.base.ranker.hidden_units = to_size(v); }},
      {"ranker.conv_window", "3", [](C& c, const std::string& v) { c.base.ranker.conv_window = to_size(v); }},
      {"ranker.conv_chunks", "4", [](C& c, const std::string& v) { c.base.ranker.conv_chunks = to_size(v); }},
      {"ranker.kernels", "11",
       [](C& c, const std::string& v) { c.base.ranker.kernels = rank::standard_kernels(to_size(v)); }},
      {"ranker.kernel_log", "true", [](C& c, const std::string& v) { c.base.ranker.kernel_log = to_bool(v); }},
      {"ranker.embedding_init", "0.25",
       [](C& c, const std::string& v) { c.base.ranker.embedding_init = to_double(v); }},
      {"strategy.tags", "none",
       [](C& c, const std::string& v) {
         c.strategies =
             to_list<strat::StrategyTag>(v, [](const std::string& s) { return strat::parse_strategy(s); });
       }},
      {"strategy.lambda", "per strategy", [](C& c, const std::string& v) { c.base.strategy.lambda = to_double(v); }},
      {"strategy.<tag>.lambda", "", nullptr},
      {"strategy.fisher_samples", "1024",
       [](C& c, const std::string& v) { c.base.strategy.fisher_samples = to_size(v); }},
      {"strategy.si_damping", "0.001", [](C& c, const std::string& v) { c.base.strategy.si_damping = to_double(v); }},
      {"strategy.memory_capacity", "0",
       [](C& c, const std::string& v) { c.base.strategy.memory_capacity = to_size(v); }},
      {"strategy.gem_ridge", "0.001", [](C& c, const std::string& v) { c.base.strategy.gem_ridge = to_double(v); }},
      {"optimizer.lr", "0.1", [](C& c, const std::string& v) { c.base.optimizer.learning_rate = to_double(v); }},
      {"optimizer.momentum", "0.9", [](C& c, const std::string& v) { c.base.optimizer.momentum = to_double(v); }},
      {"train.epochs", "3", [](C& c, const std::string& v) { c.base.epochs = to_size(v); }},
      {"train.batch_size", "16", [](C& c, const std::string& v) { c.base.batch_size = to_size(v); }},
      {"train.negatives", "1", [](C& c, const std::string& v) { c.base.negatives = to_size(v); }},
      {"train.margin", "1", [](C& c, const std::string& v) { c.base.margin = to_double(v); }},
      {"train.eval_threads", "1", [](C& c, const std::string& v) { c.base.eval_threads = to_size(v); }},
      {"seeds", "0", [](C& c, const std::string& v) { c.seeds = to_list<std::uint64_t>(v, to_uint); }},
      {"output.dir", "", [](C& c, const std::string& v) { c.output_dir = v; }},
      {"run.grid", "true", [](C& c, const std::string& v) { c.grid = to_bool(v); }},
      {"sweep.alphas", "", [](C& c, const std::string& v) { c.sweep_alphas = to_list<double>(v, to_double); }},
      {"sweep.volumes", "", [](C& c, const std::string& v) { c.sweep_volumes = to_list<double>(v, to_double); }},
      {"sweep.topic_pairs", "",
       [](C& c, const std::string& v) {
         if (v == "all") {
           c.sweep_all_topic_pairs = true;
           return;
         }
         for (const std::string& item : split_list(v)) {
           const auto colon = item.find(':');
           if (colon == std::string::npos) throw ConfigError("expected a:b topic pairs, got '" + item + "'");
           c.sweep_topic_pairs.emplace_back(to_size(trim(item.substr(0, colon))), to_size(trim(item.substr(colon + 1))));
         }
       }},
  };
  return k;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (source == DataSource::ingest && dataset_path.empty()) throw ConfigError("dataset.path is required for ingest");
  if (source == DataSource::ingest && !std::filesystem::is_directory(dataset_path)) {
    throw ConfigError("dataset.path '" + dataset_path.string() + "' is not a directory");
  }
  if (source == DataSource::corpus && (corpus_path.empty() || corpus_embeddings.empty())) {
    throw ConfigError("corpus mode needs corpus.path and corpus.embeddings");
  }
  if (embeddings && !std::filesystem::is_regular_file(*embeddings)) {
    throw ConfigError("dataset.embeddings '" + embeddings->string() + "' is not a file");
  }
  if (source == DataSource::synthetic) synthetic.validate();
  if (corpus.topics == 0 || corpus.restarts == 0 || corpus.max_iter == 0) {
    throw ConfigError("corpus.topics, corpus.restarts and corpus.max_iter must be >= 1");
  }
  if (!(corpus.test_fraction > 0.0 && corpus.test_fraction < 1.0)) {
    throw ConfigError("corpus.test_fraction must lie in (0, 1)");
  }
  if (heads.empty() || strategies.empty() || seeds.empty()) {
    throw ConfigError("ranker.heads, strategy.tags and seeds must be non-empty");
  }
  for (strat::StrategyTag tag : strategies) {
    runner::RunConfig c = base;
    c.strategy.tag = tag;
    if (auto it = lambda_by_tag.find(tag); it != lambda_by_tag.end()) c.strategy.lambda = it->second;
    for (rank::HeadType head : heads) {
      c.ranker.head = head;
      c.validate();
    }
  }
  if (!grid && sweep_alphas.empty() && sweep_volumes.empty() && sweep_topic_pairs.empty() && !sweep_all_topic_pairs) {
    throw ConfigError("nothing to run: run.grid is false and no sweep is configured");
  }
  for (double a : sweep_alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("sweep.alphas must lie in [0, 1]");
  }
  if (!sweep_alphas.empty() && source != DataSource::synthetic) {
    throw ConfigError("sweep.alphas needs dataset.source = synthetic");
  }
  for (double m : sweep_volumes) {
    if (!(m > 0.0)) throw ConfigError("sweep.volumes must be > 0");
  }
  if (!sweep_volumes.empty() && source != DataSource::synthetic) {
    throw ConfigError("sweep.volumes needs dataset.source = synthetic");
  }
  for (auto [a, b] : sweep_topic_pairs) {
    if (a == 0 || b == 0 || a == b) throw ConfigError("sweep.topic_pairs must name two different 1-based topics");
    if (source == DataSource::synthetic && (a > synthetic.tasks || b > synthetic.tasks)) {
      throw ConfigError("sweep.topic_pairs names a topic beyond synthetic.tasks");
    }
  }
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig c;
  std::set<std::string> seen;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(number) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      // strategy.<tag>.lambda
      if (key.rfind("strategy.", 0) == 0 && key.size() > 16 && key.substr(key.size() - 7) == ".lambda") {
        const std::string tag = key.substr(9, key.size() - 16);
        c.lambda_by_tag[strat::parse_strategy(tag)] = to_double(value);
        continue;
      }
      bool known = false;
      for (const Key& k : keys()) {
        if (k.set && key == k.name) {
          k.set(c, value);
          known = true;
          break;
        }
      }
      if (!known) throw ConfigError("unknown key '" + key + "'");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      throw ConfigError(msg.rfind(source + ":", 0) == 0 ? msg : where + key + ": " + msg);
    }
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  return parse_config(in, path.string());
}

std::vector<std::pair<std::string, std::string>> config_keys() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Key& k : keys()) out.emplace_back(k.name, k.fallback);
  return out;
}

}  // namespace contir::exp
