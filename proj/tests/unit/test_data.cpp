#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <unistd.h>

#include "contir/data/dataset.hpp"
#include "contir/data/kmeans.hpp"
#include "contir/data/sampling.hpp"
#include "contir/data/synthetic.hpp"
#include "contir/data/task_io.hpp"
#include "contir/data/topics.hpp"
#include "contir/error.hpp"
#include "contir/random.hpp"

using namespace contir;
using namespace contir::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("contir_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

TaskData tiny_task(std::size_t id) {
  TaskData t;
  t.id = id;
  t.topic = "task_" + std::to_string(id);
  const std::string p = "t" + std::to_string(id);
  t.train = {{p + "a", "red apple", p + "d1", "apple pie recipe", 1.0, id},
             {p + "a", "red apple", p + "d2", "car engine", 0.0, id},
             {p + "b", "fast car", p + "d3", "engine tuning", 0.5, id}};
  t.test = {{p + "c", "green pear", p + "d4", "pear tart", 1.0, id},
            {p + "c", "green pear", p + "d5", "bicycle", 0.0, id}};
  return t;
}

double brute_two_partition(const Points& pts) {
  const std::size_t m = pts.size();
  double best = INFINITY;
  for (std::size_t mask = 1; mask + 1 < (1u << m); ++mask) {
    double total = 0.0;
    for (int side = 0; side < 2; ++side) {
      std::vector<double> c(pts[0].size(), 0.0);
      std::size_t n = 0;
      for (std::size_t i = 0; i < m; ++i) {
        if (((mask >> i) & 1u) == static_cast<unsigned>(side)) {
          for (std::size_t j = 0; j < c.size(); ++j) c[j] += pts[i][j];
          ++n;
        }
      }
      for (double& x : c) x /= static_cast<double>(n);
      for (std::size_t i = 0; i < m; ++i) {
        if (((mask >> i) & 1u) == static_cast<unsigned>(side)) {
          for (std::size_t j = 0; j < c.size(); ++j) total += (pts[i][j] - c[j]) * (pts[i][j] - c[j]);
        }
      }
    }
    best = std::min(best, total);
  }
  return best;
}

}  // namespace

TEST_CASE("tokenizer and vocabulary") {
  CHECK(tokenize("Hello, World!  x2-Y") == std::vector<std::string>{"hello", "world", "x2", "y"});
  CHECK(tokenize("  ,; ").empty());
  CHECK(tokenize("caf\xc3\xa9 bar") == std::vector<std::string>{"caf\xc3\xa9", "bar"});

  Vocabulary v;
  CHECK(v.size() == 2);
  CHECK(v.id("<pad>") == 0);
  CHECK(v.add("apple") == 2);
  CHECK(v.add("apple") == 2);
  CHECK(v.encode("Apple pie") == std::vector<std::int64_t>{2, 1});
  CHECK(v.encode("...") == std::vector<std::int64_t>{1});
  CHECK(v.token(2) == "apple");
  CHECK_THROWS_AS(v.token(9), DataError);
}

TEST_CASE("load_embeddings") {
  TempDir dir;
  Vocabulary v;
  v.add("apple");
  v.add("pear");
  v.add("plum");
  spit(dir.path / "vec.txt", "3 2\napple 0.5 -1.25\nkiwi 1 1\npear 2e-1 3\n");
  ad::Tensor e = load_embeddings(dir.path / "vec.txt", v, 7);
  REQUIRE(e.shape() == ad::Shape{5, 2});
  CHECK(e[0] == 0.0);
  CHECK(e[1] == 0.0);
  CHECK(e[2 * 2] == 0.5);
  CHECK(e[2 * 2 + 1] == -1.25);
  CHECK(e[3 * 2] == 0.2);
  for (std::size_t row : {1, 4}) {
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(std::abs(e[row * 2 + j]) <= 0.25);
      CHECK(e[row * 2 + j] != 0.0);
    }
  }
  CHECK(load_embeddings(dir.path / "vec.txt", v, 7) == e);
  CHECK_FALSE(load_embeddings(dir.path / "vec.txt", v, 8) == e);

  spit(dir.path / "bad.txt", "apple 1 2\npear 1 2 3\n");
  CHECK_THROWS_AS(load_embeddings(dir.path / "bad.txt", v, 1), DataError);
  CHECK_THROWS_AS(load_embeddings(dir.path / "none.txt", v, 1), DataError);
}

TEST_CASE("task files round trip and validate") {
  TempDir dir;
  std::vector<TaskData> tasks{tiny_task(1), tiny_task(2)};
  write_tasks(dir.path, tasks);
  ContinualDataset ds = ingest_tasks(dir.path);
  REQUIRE(ds.size() == 2);
  CHECK(ds.tasks[0].train.size() == 3);
  CHECK(ds.tasks[1].test.size() == 2);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(ds.tasks[t].train == tasks[t].train);
    CHECK(ds.tasks[t].test == tasks[t].test);
  }
  CHECK(ds.vocab.contains("apple"));
  CHECK(fingerprint(ds) == fingerprint(ds));

  ContinualDataset changed = ds;
  changed.tasks[1].train[0].relevance = 0.75;
  CHECK(fingerprint(changed) != fingerprint(ds));
}

TEST_CASE("ingest reports malformed input") {
  TempDir dir;
  write_tasks(dir.path, {tiny_task(1)});
  const fs::path train = task_file(dir.path, 1, true);
  const std::string good = slurp(train);

  spit(train, good + "q\tx\td\n");
  try {
    ingest_tasks(dir.path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":5:") != std::string::npos);
  }
  spit(train, good + "q\tx\td\ty\tmaybe\n");
  CHECK_THROWS_WITH_AS(ingest_tasks(dir.path), doctest::Contains("non-numeric"), DataError);

  spit(train, good);
  spit(task_file(dir.path, 1, false),
       std::string(kTaskHeader) + "\nt1c\tq\td4\tdoc\t0\nt1c\tq\td5\tdoc\t0\n");
  CHECK_THROWS_WITH_AS(ingest_tasks(dir.path), doctest::Contains("t1c"), DataError);

  fs::remove(task_file(dir.path, 1, false));
  CHECK_THROWS_AS(ingest_tasks(dir.path), DataError);
  CHECK_THROWS_AS(ingest_tasks(dir.path / "missing"), DataError);
}

TEST_CASE("sample_pairwise") {
  std::vector<Sample> rows;
  for (int q = 0; q < 100; ++q) {
    const std::string id = "q" + std::to_string(q);
    rows.push_back({id, "x", id + "p", "p", 1.0, 1});
    rows.push_back({id, "x", id + "n", "n", 0.0, 1});
  }
  PairwiseEpoch e = sample_pairwise(rows, 1, 32, 5);
  REQUIRE(e.batches.size() == 4);
  CHECK(e.batches[0].size() == 32);
  CHECK(e.batches[3].size() == 4);
  std::map<std::size_t, int> seen;
  for (const auto& b : e.batches) {
    for (const Triple& t : b) {
      CHECK(rows[t.pos].relevance > rows[t.neg].relevance);
      CHECK(rows[t.pos].query_id == rows[t.neg].query_id);
      ++seen[t.pos];
    }
  }
  CHECK(seen.size() == 100);
  CHECK(std::all_of(seen.begin(), seen.end(), [](auto& kv) { return kv.second == 1; }));
  CHECK(sample_pairwise(rows, 1, 32, 5).batches == e.batches);
  CHECK_FALSE(sample_pairwise(rows, 1, 32, 6).batches == e.batches);

  PairwiseEpoch three = sample_pairwise(rows, 3, 50, 1);
  CHECK(three.triples() == 300);

  // graded labels and the cross-query fallback
  std::vector<Sample> graded{{"a", "x", "a1", "d", 1.0, 1},
                             {"a", "x", "a2", "d", 0.5, 1},
                             {"b", "x", "b1", "d", 1.0, 1},
                             {"c", "x", "c1", "d", 0.0, 1},
                             {"z", "x", "z1", "d", 1.0, 2}};
  PairwiseEpoch g = sample_pairwise(graded, 2, 10, 3);
  CHECK(g.skipped == 1);  // task 2 has no negative at all
  for (const Triple& t : g.batches[0]) {
    CHECK(graded[t.pos].relevance > graded[t.neg].relevance);
    if (graded[t.pos].query_id == "b") CHECK(graded[t.neg].doc_id == "c1");
  }
  CHECK(g.triples() == 6);
}

TEST_CASE("kmeans worked examples") {
  Points pts{{0, 0}, {0, 1}, {10, 0}, {10, 1}};
  KMeansResult r = kmeans_best_of(pts, 2, 100, 1);
  CHECK(r.inertia == doctest::Approx(1.0).epsilon(1e-12));
  std::set<std::vector<double>> cents(r.centroids.begin(), r.centroids.end());
  CHECK(cents == std::set<std::vector<double>>{{0, 0.5}, {10, 0.5}});
  CHECK(r.assignments[0] == r.assignments[1]);
  CHECK(r.assignments[2] == r.assignments[3]);
  CHECK(r.assignments[0] != r.assignments[2]);

  CHECK(kmeans_best_of(pts, 4, 100, 1).inertia == 0.0);

  Points twice = pts;
  twice.insert(twice.end(), pts.begin(), pts.end());
  KMeansResult d = kmeans_best_of(twice, 2, 100, 1);
  CHECK(d.inertia == doctest::Approx(2.0).epsilon(1e-12));
  std::set<std::vector<double>> dc(d.centroids.begin(), d.centroids.end());
  CHECK(dc == cents);

  CHECK_THROWS_AS(kmeans(pts, 5, 10, 1), DomainError);
  CHECK_THROWS_AS(kmeans(pts, 2, 0, 1), DomainError);
}

TEST_CASE("kmeans inertia never increases and best-of-10 finds the 2-partition optimum") {
  Rng rng(3);
  int hits = 0;
  const int instances = 50;
  for (int inst = 0; inst < instances; ++inst) {
    const std::size_t m = 3 + rng.below(6);
    Points pts(m, std::vector<double>(2));
    for (auto& p : pts) {
      for (double& x : p) x = rng.uniform(-5, 5);
    }
    const double opt = brute_two_partition(pts);
    for (std::uint64_t s = 0; s < 10; ++s) {
      KMeansResult r = kmeans(pts, 2, 100, derive_seed(inst, s));
      for (std::size_t i = 1; i < r.inertia_trace.size(); ++i) {
        CHECK(r.inertia_trace[i] <= r.inertia_trace[i - 1] + 1e-12);
      }
      CHECK(r.inertia >= opt - 1e-9);
    }
    const double best = kmeans_best_of(pts, 2, 100, inst).inertia;
    hits += std::abs(best - opt) <= 1e-9 * std::max(1.0, opt);
  }
  CHECK(hits >= instances * 9 / 10);
}

TEST_CASE("topic distance matrix") {
  TopicDistanceMatrix m = topic_distance_matrix({{0, 0.5}, {10, 0.5}, {3, 4.5}});
  CHECK(m.distance[0][1] == 100.0);
  CHECK(m.distance[0][2] == 9.0 + 16.0);
  for (std::size_t a = 0; a < 3; ++a) {
    CHECK(m.distance[a][a] == 0.0);
    for (std::size_t b = 0; b < 3; ++b) CHECK(m.distance[a][b] == m.distance[b][a]);
  }
  std::ostringstream out;
  write_distance_csv(out, m);
  CHECK(out.str().rfind("topic,1,2,3\n1,0,100,25\n", 0) == 0);
  std::istringstream in(out.str());
  CHECK(read_distance_csv(in) == m.distance);
}

TEST_CASE("synthetic generator volumes and structure") {
  SyntheticConfig c;
  c.tasks = 2;
  c.train_queries = {100, 40};
  c.test_queries = 20;
  c.seed = 4;
  SyntheticData s = generate_synthetic(c);
  REQUIRE(s.dataset.size() == 2);
  auto queries = [](const std::vector<Sample>& rows) {
    std::set<std::string> q;
    for (const auto& r : rows) q.insert(r.query_id);
    return q.size();
  };
  CHECK(queries(s.dataset.tasks[0].train) == 100);
  CHECK(queries(s.dataset.tasks[1].train) == 40);
  CHECK(queries(s.dataset.tasks[0].test) == 20);
  CHECK(s.dataset.tasks[0].train.size() == 500);
  CHECK(s.dataset.tasks[1].test.size() == 400);
  for (const auto& t : s.dataset.tasks) {
    CHECK_NOTHROW(validate_task(t));
    for (const auto& row : t.train) {
      CHECK(row.task == t.id);
      for (const auto& tok : tokenize(row.query_text)) {
        auto d = tokenize(row.doc_text);
        CHECK(std::find(d.begin(), d.end(), tok) == d.end());
      }
    }
  }
  // relevant position varies after shuffling
  std::set<std::string> rel_slots;
  for (const auto& row : s.dataset.tasks[0].test) {
    if (row.relevance > 0) rel_slots.insert(row.doc_id.substr(row.doc_id.rfind('d')));
  }
  CHECK(rel_slots.size() > 5);

  c.concepts = 10;
  c.topic_vocab = 20;  // 2 tokens per concept, queries need 3
  CHECK_THROWS_AS(generate_synthetic(c), ConfigError);
}

TEST_CASE("synthetic distances shrink with overlap") {
  std::vector<double> prev;
  for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    SyntheticConfig c;
    c.tasks = 3;
    c.alpha = alpha;
    c.train_queries = {5};
    c.test_queries = 2;
    SyntheticData s = generate_synthetic(c);
    std::vector<double> off;
    for (std::size_t a = 0; a < 3; ++a) {
      CHECK(s.distances.distance[a][a] == 0.0);
      for (std::size_t b = 0; b < 3; ++b) {
        if (a != b) off.push_back(s.distances.distance[a][b]);
      }
    }
    if (alpha == 0.0) {
      for (double d : off) CHECK(d == doctest::Approx(2.0 / 60.0));
    }
    if (alpha == 1.0) {
      for (double d : off) CHECK(d == 0.0);
    }
    for (std::size_t i = 0; i < prev.size(); ++i) CHECK(off[i] <= prev[i]);
    prev = off;
  }
}

TEST_CASE("synthetic output is reproducible byte for byte") {
  SyntheticConfig c;
  c.tasks = 2;
  c.train_queries = {30};
  c.test_queries = 5;
  c.seed = 9;
  TempDir a, b;
  write_tasks(a.path, generate_synthetic(c).dataset.tasks);
  write_tasks(b.path, generate_synthetic(c).dataset.tasks);
  for (std::size_t t = 1; t <= 2; ++t) {
    for (bool train : {true, false}) {
      CHECK(slurp(task_file(a.path, t, train)) == slurp(task_file(b.path, t, train)));
    }
  }
  ContinualDataset back = ingest_tasks(a.path);
  CHECK(fingerprint(back) == fingerprint(generate_synthetic(c).dataset));
  c.seed = 10;
  CHECK(fingerprint(generate_synthetic(c).dataset) != fingerprint(back));
}

TEST_CASE("corpus split clusters queries into topic tasks") {
  // four queries whose mean token vectors are (0,0), (0,1), (10,0), (10,1)
  Vocabulary v;
  for (const char* t : {"aa", "ab", "ba", "bb", "doc", "other"}) v.add(t);
  ad::Tensor e(ad::Shape{v.size(), 2},
               {0, 0, 0, 0, 0, 0, 0, 1, 10, 0, 10, 1, 5, 5, 6, 6});
  std::vector<Sample> corpus;
  const char* texts[] = {"aa", "ab", "ba", "bb"};
  for (int q = 0; q < 4; ++q) {
    const std::string id = "q" + std::to_string(q);
    corpus.push_back({id, texts[q], id + "r", "doc", 1.0, 0});
    corpus.push_back({id, texts[q], id + "n", "other", 0.0, 0});
  }
  CorpusSplitConfig cfg;
  cfg.topics = 2;
  cfg.test_fraction = 0.5;
  CorpusSplit s = split_corpus(corpus, v, e, cfg);
  REQUIRE(s.dataset.size() == 2);
  CHECK(s.clustering.inertia == doctest::Approx(1.0));
  auto ids = [](const TaskData& t) {
    std::set<std::string> q;
    for (const auto* split : {&t.train, &t.test}) {
      for (const auto& r : *split) q.insert(r.query_id);
    }
    return q;
  };
  CHECK(ids(s.dataset.tasks[0]) == std::set<std::string>{"q0", "q1"});
  CHECK(ids(s.dataset.tasks[1]) == std::set<std::string>{"q2", "q3"});
  CHECK(s.dataset.tasks[0].test.size() == 2);
  CHECK(s.distances.distance[0][1] == doctest::Approx(100.0));
}
