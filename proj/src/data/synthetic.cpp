#include "contir/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "contir/error.hpp"
#include "contir/random.hpp"

namespace contir::data {

namespace {

using Tokens = std::vector<std::string>;

std::string join(const Tokens& t) {
  std::string s;
  for (const auto& x : t) {
    if (!s.empty()) s += ' ';
    s += x;
  }
  return s;
}

struct Topic {
  std::vector<Tokens> concepts;
  std::vector<std::size_t> assoc;  // concept -> generic block
  Tokens pool;
};

class Generator {
 public:
  Generator(const SyntheticConfig& c, Rng& rng) : c_(c), rng_(rng) {}

  std::vector<Sample> make(std::size_t task, const Topic& topic, const std::vector<Tokens>& generic,
                           std::size_t queries, std::size_t docs, const std::string& prefix) {
    const std::size_t k = topic.concepts.size();
    std::vector<Sample> rows;
    for (std::size_t qi = 0; qi < queries; ++qi) {
      const std::size_t c = rng_.below(k);
      Tokens q;
      for (std::size_t i : rng_.sample_indices(topic.concepts[c].size(), c_.query_length)) {
        q.push_back(topic.concepts[c][i]);
      }
      Tokens others;
      for (const auto& t : topic.pool) {
        if (std::find(q.begin(), q.end(), t) == q.end()) others.push_back(t);
      }
      auto doc = [&](std::size_t idea) {
        Tokens d;
        const Tokens& block = generic[topic.assoc[idea]];
        for (std::size_t i = 0; i < c_.generic_per_doc; ++i) d.push_back(block[rng_.below(block.size())]);
        while (d.size() < c_.doc_length) d.push_back(others[rng_.below(others.size())]);
        rng_.shuffle(d);
        return d;
      };
      std::vector<std::pair<Tokens, double>> group;
      group.emplace_back(doc(c), 1.0);
      for (std::size_t j = 1; j < docs; ++j) {
        std::size_t cc = rng_.below(k - 1);
        cc += cc >= c ? 1 : 0;
        group.emplace_back(doc(cc), 0.0);
      }
      rng_.shuffle(group);
      const std::string qid = prefix + std::to_string(qi);
      const std::string qtext = join(q);
      for (std::size_t j = 0; j < group.size(); ++j) {
        rows.push_back({qid, qtext, qid + "d" + std::to_string(j), join(group[j].first),
                        group[j].second, task});
      }
    }
    return rows;
  }

 private:
  const SyntheticConfig& c_;
  Rng& rng_;
};

}  // namespace

std::size_t SyntheticConfig::train_queries_for(std::size_t task_index) const {
  return task_index < train_queries.size() ? train_queries[task_index] : train_queries.back();
}

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("synthetic: " + m); };
  if (tasks == 0) fail("tasks must be >= 1");
  if (concepts < 2) fail("concepts must be >= 2");
  if (topic_vocab == 0 || topic_vocab % concepts != 0) fail("topic_vocab must be a positive multiple of concepts");
  if (topic_vocab / concepts < query_length) {
    fail("topic vocabulary too small: a concept has " + std::to_string(topic_vocab / concepts) +
         " tokens but queries need " + std::to_string(query_length));
  }
  if (query_length == 0 || doc_length == 0) fail("query_length and doc_length must be >= 1");
  if (generic_block == 0) fail("generic_block must be >= 1");
  if (generic_per_doc > doc_length) fail("generic_per_doc exceeds doc_length");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (train_queries.empty()) fail("train_queries must be given");
  for (std::size_t n : train_queries) {
    if (n == 0) fail("train query counts must be >= 1");
  }
  if (test_queries == 0) fail("test_queries must be >= 1");
  if (train_docs_per_query < 2 || test_docs_per_query < 2) fail("docs per query must be >= 2");
}

SyntheticData generate_synthetic(const SyntheticConfig& c) {
  c.validate();
  Rng rng(c.seed);
  const std::size_t k = c.concepts;
  const std::size_t csize = c.topic_vocab / k;
  const auto shared = static_cast<std::size_t>(std::lround(c.alpha * static_cast<double>(k)));

  std::vector<Tokens> generic(k);
  for (std::size_t b = 0; b < k; ++b) {
    for (std::size_t j = 0; j < c.generic_block; ++j) {
      generic[b].push_back("g" + std::to_string(b) + "x" + std::to_string(j));
    }
  }

  std::vector<Topic> topics(c.tasks);
  for (std::size_t t = 0; t < c.tasks; ++t) {
    Topic& topic = topics[t];
    for (std::size_t cc = 0; cc < k; ++cc) {
      Tokens idea;
      for (std::size_t j = 0; j < csize; ++j) {
        idea.push_back(cc < shared ? "s" + std::to_string(cc) + "x" + std::to_string(j)
                                      : "t" + std::to_string(t + 1) + "c" + std::to_string(cc) +
                                            "x" + std::to_string(j));
      }
      topic.pool.insert(topic.pool.end(), idea.begin(), idea.end());
      topic.concepts.push_back(std::move(idea));
    }
    topic.assoc.resize(k);
    std::iota(topic.assoc.begin(), topic.assoc.end(), 0);
    std::span<std::size_t> rest(topic.assoc.data() + shared, k - shared);
    rng.shuffle(rest);
  }

  SyntheticData out;
  Generator gen(c, rng);
  for (std::size_t t = 0; t < c.tasks; ++t) {
    TaskData task;
    task.id = t + 1;
    task.topic = "topic_" + std::to_string(t + 1);
    const std::string tag = "t" + std::to_string(t + 1);
    task.train = gen.make(t + 1, topics[t], generic, c.train_queries_for(t),
                          c.train_docs_per_query, tag + "q");
    task.test = gen.make(t + 1, topics[t], generic, c.test_queries, c.test_docs_per_query,
                         tag + "e");
    out.dataset.tasks.push_back(std::move(task));
  }
  out.dataset.vocab = build_vocabulary(out.dataset.tasks);

  // Expected mean one-hot query vector of a topic: uniform over its pool.
  std::map<std::string, std::size_t> index;
  for (const Topic& topic : topics) {
    for (const auto& tok : topic.pool) index.emplace(tok, index.size());
  }
  Points centroids;
  for (const Topic& topic : topics) {
    std::vector<double> v(index.size(), 0.0);
    for (const auto& tok : topic.pool) v[index[tok]] = 1.0 / static_cast<double>(topic.pool.size());
    centroids.push_back(std::move(v));
  }
  out.distances = topic_distance_matrix(centroids);
  return out;
}

}  // namespace contir::data
