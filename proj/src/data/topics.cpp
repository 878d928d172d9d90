#include "contir/data/topics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "contir/error.hpp"
#include "contir/random.hpp"

namespace contir::data {

std::vector<double> query_vector(const std::string& text, const Vocabulary& vocab,
                                 const ad::Tensor& embedding) {
  if (embedding.rank() != 2 || embedding.dim(0) != vocab.size()) {
    throw ShapeError("query_vector: embedding rows do not match the vocabulary");
  }
  const std::size_t dim = embedding.dim(1);
  std::vector<double> v(dim, 0.0);
  const auto ids = vocab.encode(text);
  for (std::int64_t id : ids) {
    const double* row = embedding.data() + static_cast<std::size_t>(id) * dim;
    for (std::size_t j = 0; j < dim; ++j) v[j] += row[j];
  }
  for (double& x : v) x /= static_cast<double>(ids.size());
  return v;
}

CorpusSplit split_corpus(const std::vector<Sample>& corpus, const Vocabulary& vocab,
                         const ad::Tensor& embedding, const CorpusSplitConfig& config) {
  if (!(config.test_fraction > 0.0 && config.test_fraction < 1.0)) {
    throw ConfigError("corpus split: test_fraction must lie in (0, 1)");
  }
  CorpusSplit out;
  std::map<std::string, std::size_t> qindex;
  std::vector<std::vector<std::size_t>> rows_of;
  Points points;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto [it, fresh] = qindex.emplace(corpus[i].query_id, out.query_ids.size());
    if (fresh) {
      out.query_ids.push_back(corpus[i].query_id);
      rows_of.emplace_back();
      points.push_back(query_vector(corpus[i].query_text, vocab, embedding));
    }
    rows_of[it->second].push_back(i);
  }
  if (points.size() < config.topics) {
    throw DataError("corpus split: " + std::to_string(points.size()) + " queries for " +
                    std::to_string(config.topics) + " topics");
  }
  out.clustering = kmeans_best_of(points, config.topics, config.max_iter, config.seed, config.restarts);

  // cluster -> task order by first appearance
  std::vector<std::size_t> task_of(config.topics, config.topics);
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t q = 0; q < points.size(); ++q) {
    const std::size_t c = out.clustering.assignments[q];
    if (task_of[c] == config.topics) {
      task_of[c] = members.size();
      members.emplace_back();
    }
    members[task_of[c]].push_back(q);
  }
  if (members.size() < config.topics) {
    throw DataError("corpus split: k-means produced an empty cluster");
  }

  Rng rng(derive_seed(config.seed, 0x73706c));
  Points centroids;
  for (std::size_t t = 0; t < members.size(); ++t) {
    std::size_t cluster = 0;
    while (task_of[cluster] != t) ++cluster;
    centroids.push_back(out.clustering.centroids[cluster]);

    std::vector<std::size_t> eligible;
    for (std::size_t q : members[t]) {
      bool rel = false, nonrel = false;
      for (std::size_t i : rows_of[q]) (corpus[i].relevance > 0.0 ? rel : nonrel) = true;
      if (rel && nonrel) eligible.push_back(q);
    }
    if (eligible.empty() || members[t].size() < 2) {
      throw DataError("corpus split: topic " + std::to_string(t + 1) +
                      " lacks a query usable for both training and testing");
    }
    rng.shuffle(eligible);
    auto n_test = static_cast<std::size_t>(
        std::lround(config.test_fraction * static_cast<double>(members[t].size())));
    n_test = std::clamp<std::size_t>(n_test, 1, std::min(eligible.size(), members[t].size() - 1));
    std::set<std::size_t> test(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(n_test));

    TaskData task;
    task.id = t + 1;
    task.topic = "cluster_" + std::to_string(cluster);
    for (std::size_t q : members[t]) {
      for (std::size_t i : rows_of[q]) {
        Sample s = corpus[i];
        s.task = t + 1;
        (test.count(q) ? task.test : task.train).push_back(std::move(s));
      }
    }
    validate_task(task);
    out.dataset.tasks.push_back(std::move(task));
  }
  out.dataset.vocab = build_vocabulary(out.dataset.tasks);
  out.distances = topic_distance_matrix(centroids);
  return out;
}

}  // namespace contir::data
