#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <unistd.h>

#include "contir/data/synthetic.hpp"
#include "contir/data/task_io.hpp"
#include "contir/error.hpp"
#include "contir/experiment/config.hpp"
#include "contir/experiment/experiment.hpp"
#include "contir/experiment/report.hpp"
#include "contir/log.hpp"
#include "contir/metrics/metrics.hpp"

using namespace contir;
using namespace contir::exp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("contir_exp_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.cfg");
}

const char* kTiny =
    "synthetic.train_queries = 20\n"
    "synthetic.test_queries = 5\n"
    "synthetic.test_docs_per_query = 6\n"
    "ranker.embedding_dim = 6\n"
    "ranker.query_length = 3\n"
    "ranker.doc_length = 12\n"
    "ranker.kernels = 5\n"
    "train.epochs = 1\n";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> read_kv(const fs::path& p) {
  std::map<std::string, std::string> kv;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

// A fake completed run: manifest, metrics.txt and a 2-task P matrix whose
// P(2, 1) is `mrr`.
void fake_run(const fs::path& dir, const std::map<std::string, std::string>& labels, double p_final, double bwt,
              double fwt, double mrr) {
  fs::create_directories(dir);
  std::ofstream m(dir / "manifest");
  m << "version=test\nstatus=complete\n";
  for (const auto& [k, v] : labels) m << "run." << k << '=' << v << '\n';
  std::ofstream x(dir / "metrics.txt");
  x << "p_final=" << p_final << "\nbwt=" << bwt << "\nfwt=" << fwt << '\n';
  metrics::PerformanceMatrix p(2);
  p.set(0, 0, 0.9);
  p.set(0, 1, 0.2);
  p.set(1, 0, mrr);
  p.set(1, 1, 0.8);
  std::ofstream c(dir / "P_matrix.csv");
  p.write_csv(c);
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

struct QuietLog {
  ScopedLogSink sink{[](LogLevel, std::string_view) {}};
};

}  // namespace

TEST_CASE("config defaults match the documented table") {
  const ExperimentConfig c = parse("");
  CHECK(c.source == DataSource::synthetic);
  CHECK(c.heads == std::vector<rank::HeadType>{rank::HeadType::knrm});
  CHECK(c.strategies == std::vector<strat::StrategyTag>{strat::StrategyTag::none});
  CHECK(c.seeds == std::vector<std::uint64_t>{0});
  CHECK(c.base.optimizer.learning_rate == 0.1);
  CHECK(c.base.optimizer.momentum == 0.9);
  CHECK(c.base.epochs == 3);
  CHECK(c.base.batch_size == 16);
  CHECK(c.grid);

  // Writing each documented default back must parse and change nothing.
  for (const auto& [key, value] : config_keys()) {
    if (value.empty() || value == "per strategy") continue;
    CAPTURE(key);
    const ExperimentConfig d = parse(key + " = " + value + "\n");
    CHECK(d.base.describe() == c.base.describe());
    CHECK(d.synthetic.tasks == c.synthetic.tasks);
    CHECK(d.synthetic.train_queries == c.synthetic.train_queries);
    CHECK(d.corpus.topics == c.corpus.topics);
    CHECK(d.heads == c.heads);
    CHECK(d.strategies == c.strategies);
    CHECK(d.seeds == c.seeds);
  }
}

TEST_CASE("config parses lists, comments and per-strategy lambdas") {
  const ExperimentConfig c = parse(
      "# header comment\n"
      "ranker.heads = drmm, knrm,duet   # trailing\n"
      "strategy.tags = ewc, si\n"
      "strategy.ewc.lambda = 250\n"
      "seeds = 3, 4\n"
      "synthetic.seed = run\n"
      "sweep.topic_pairs = 1:2, 2:3\n"
      "sweep.volumes = 0.5, 4\n"
      "run.grid = false\n");
  CHECK(c.heads.size() == 3);
  CHECK(c.heads[2] == rank::HeadType::duet);
  CHECK(c.lambda_by_tag.at(strat::StrategyTag::ewc) == 250.0);
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(c.synthetic_seed_per_run);
  CHECK(c.sweep_topic_pairs.size() == 2);
  CHECK(c.sweep_topic_pairs[1] == std::make_pair<std::size_t, std::size_t>(2, 3));
  CHECK(c.sweep_volumes == std::vector<double>{0.5, 4.0});
  CHECK_FALSE(c.grid);
  CHECK(parse("sweep.topic_pairs = all\n").sweep_all_topic_pairs);
}

TEST_CASE("config errors name the source line") {
  auto message = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("seeds = 1\nbogus.key = 3\n").find("test.cfg:2") != std::string::npos);
  CHECK(message("seeds = 1\nbogus.key = 3\n").find("unknown key") != std::string::npos);
  CHECK(message("seeds = 1\nseeds = 2\n").find("duplicate") != std::string::npos);
  CHECK(message("train.epochs = three\n").find("test.cfg:1") != std::string::npos);
  CHECK(message("no equals sign\n").find("test.cfg:1") != std::string::npos);
  CHECK(message("ranker.heads = bert\n").find("test.cfg:1") != std::string::npos);
  CHECK(message("strategy.foo.lambda = 1\n").find("test.cfg:1") != std::string::npos);
  CHECK(message("run.grid = maybe\n") != "");
  CHECK(message("optimizer.lr = nan\n") != "");
  CHECK_THROWS_AS(load_config("/nonexistent/contir.cfg"), ConfigError);
}

TEST_CASE("validation rejects gem without memory before anything runs") {
  const ExperimentConfig c = parse(std::string(kTiny) + "strategy.tags = none, gem\n");
  CHECK_THROWS_AS(plan_jobs(c), ConfigError);
  const fs::path root = scratch("gem0");
  CHECK_THROWS_AS(run_experiment(c, root, {}), ConfigError);
  CHECK(fs::is_empty(root));

  CHECK_THROWS_AS(plan_jobs(parse("sweep.alphas = 1.5\n")), ConfigError);
  CHECK_THROWS_AS(plan_jobs(parse("sweep.topic_pairs = 1:4\n")), ConfigError);
  CHECK_THROWS_AS(plan_jobs(parse("dataset.source = ingest\n")), ConfigError);
  CHECK_THROWS_AS(plan_jobs(parse("dataset.source = ingest\ndataset.path = /tmp\nsweep.volumes = 2\n")), ConfigError);
  CHECK_THROWS_AS(plan_jobs(parse("run.grid = false\n")), ConfigError);
  CHECK_THROWS_AS(plan_jobs(parse("seeds = 1, 1\n")), ConfigError);
  fs::remove_all(root);
}

TEST_CASE("a 2 x 3 x 2 grid plans and writes 12 run directories") {
  const ExperimentConfig c =
      parse(std::string(kTiny) + "ranker.heads = knrm, drmm\nstrategy.tags = none, l2, nr\n"
                                 "strategy.memory_capacity = 10\nseeds = 1, 2\n");
  const std::vector<Job> jobs = plan_jobs(c);
  REQUIRE(jobs.size() == 12);
  CHECK(jobs.front().name == "knrm-none-s1");
  CHECK(jobs.back().name == "drmm-nr-s2");

  const fs::path root = scratch("grid");
  ExperimentOptions opt;
  opt.dry_run = true;
  const auto outcomes = run_experiment(c, root, opt);
  CHECK(outcomes.size() == 12);
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(root)) {
    ++dirs;
    CHECK(fs::exists(e.path() / "manifest"));
    CHECK_FALSE(fs::exists(e.path() / "P_matrix.csv"));
    CHECK(read_kv(e.path() / "manifest").at("status") == "dry-run");
  }
  CHECK(dirs == 12);
  const auto kv = read_kv(root / "drmm-l2-s2" / "manifest");
  CHECK(kv.at("run.head") == "drmm");
  CHECK(kv.at("run.strategy") == "l2");
  CHECK(kv.at("run.seed") == "2");
  CHECK(kv.at("config.ranker.head") == "drmm");
  CHECK(kv.at("config.seed") == "2");
  CHECK_THROWS_AS(write_report(root, root / "report"), DataError);
  fs::remove_all(root);
}

TEST_CASE("sweeps plan one job per axis value and label the distance") {
  const ExperimentConfig c = parse(std::string(kTiny) +
                                   "synthetic.tasks = 2\nrun.grid = false\nsweep.alphas = 0, 0.5\n"
                                   "sweep.volumes = 0.5, 2\nseeds = 4\n");
  const auto jobs = plan_jobs(c);
  REQUIRE(jobs.size() == 4);
  CHECK(jobs[0].name == "topic/knrm-none-a0-s4");
  CHECK(jobs[1].name == "topic/knrm-none-a0.5-s4");
  CHECK(jobs[2].name == "volume/knrm-none-x0.5-s4");

  const PreparedData half = prepare_data(c, jobs[2].data);
  const PreparedData twice = prepare_data(c, jobs[3].data);
  CHECK(half.dataset.tasks[0].train.size() == twice.dataset.tasks[0].train.size());
  CHECK(twice.dataset.tasks[1].train.size() == 4 * half.dataset.tasks[1].train.size());

  const fs::path root = scratch("sweep");
  QuietLog quiet;
  const auto outcomes = run_experiment(c, root, {});
  for (const auto& o : outcomes) CHECK(o.ok);
  const data::SyntheticConfig s = [&] {
    data::SyntheticConfig x = c.synthetic;
    x.alpha = 0.5;
    return x;
  }();
  const double d = data::generate_synthetic(s).distances.distance[0][1];
  const double label = std::stod(read_kv(root / "topic/knrm-none-a0.5-s4/manifest").at("run.distance"));
  CHECK(label == doctest::Approx(d).epsilon(1e-15));
  fs::remove_all(root);
}

TEST_CASE("topic pairs renumber tasks and rebuild the vocabulary") {
  data::SyntheticConfig s;
  s.tasks = 3;
  s.train_queries = {10};
  s.test_queries = 4;
  const data::ContinualDataset full = data::generate_synthetic(s).dataset;
  const data::ContinualDataset p = topic_pair(full, 3, 1);
  REQUIRE(p.size() == 2);
  CHECK(p.tasks[0].id == 1);
  CHECK(p.tasks[1].id == 2);
  CHECK(p.tasks[0].train.size() == full.tasks[2].train.size());
  for (const auto& r : p.tasks[1].test) CHECK(r.task == 2);
  CHECK(p.vocab.size() < full.vocab.size());
  CHECK_THROWS_AS(topic_pair(full, 2, 2), ConfigError);
  CHECK_THROWS_AS(topic_pair(full, 1, 4), ConfigError);
}

TEST_CASE("a failing run is recorded and the others complete") {
  // Ingested tasks with distances for topics 1 and 2 only: pair 1:3 cannot
  // be labelled and fails, pair 1:2 runs.
  const fs::path data_dir = scratch("ingest");
  data::SyntheticConfig s;
  s.tasks = 3;
  s.train_queries = {20};
  s.test_queries = 5;
  s.test_docs_per_query = 6;
  data::write_tasks(data_dir, data::generate_synthetic(s).dataset.tasks);
  {
    std::ofstream d(data_dir / "topic_distances.csv");
    d << "topic,1,2\n1,0,0.5\n2,0.5,0\n";
  }
  const ExperimentConfig c = parse(std::string(kTiny) + "dataset.source = ingest\ndataset.path = " +
                                   data_dir.string() + "\nrun.grid = false\nsweep.topic_pairs = 1:2, 1:3\n");
  const fs::path root = scratch("partial");
  QuietLog quiet;
  const auto outcomes = run_experiment(c, root, {});
  REQUIRE(outcomes.size() == 2);
  CHECK(outcomes[0].ok);
  CHECK_FALSE(outcomes[1].ok);
  CHECK(outcomes[1].error.find("topic") != std::string::npos);
  CHECK(read_kv(root / "topic/knrm-none-p1_2-s0/manifest").at("status") == "complete");
  CHECK(read_kv(root / "topic/knrm-none-p1_2-s0/manifest").at("run.distance") == "0.5");
  CHECK(read_kv(root / "topic/knrm-none-p1_3-s0/manifest").at("status") == "failed");
  CHECK(scan_runs(root).size() == 1);
  fs::remove_all(root);
  fs::remove_all(data_dir);
}

TEST_CASE("worker threads follow CONTIR_THREADS") {
  ::setenv("CONTIR_THREADS", "3", 1);
  CHECK(worker_threads() == 3);
  ::setenv("CONTIR_THREADS", "0", 1);
  CHECK_THROWS_AS(worker_threads(), ConfigError);
  ::setenv("CONTIR_THREADS", "2x", 1);
  CHECK_THROWS_AS(worker_threads(), ConfigError);
  ::unsetenv("CONTIR_THREADS");
  CHECK(worker_threads() >= 1);
}

TEST_CASE("parallel workers reproduce sequential P matrices") {
  const ExperimentConfig c = parse(std::string(kTiny) + "strategy.tags = none, si\nseeds = 1, 2\n");
  const fs::path a = scratch("seq");
  const fs::path b = scratch("par");
  QuietLog quiet;
  run_experiment(c, a, {1, false});
  run_experiment(c, b, {4, false});
  for (const Job& j : plan_jobs(c)) {
    CAPTURE(j.name);
    CHECK(slurp(a / j.name / "P_matrix.csv") == slurp(b / j.name / "P_matrix.csv"));
    CHECK_FALSE(slurp(a / j.name / "P_matrix.csv").empty());
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("summaries: two seeds 0.4 and 0.6 give mean 0.5 and standard error 0.1") {
  const std::vector<double> two{0.4, 0.6};
  const Summary s = summarize(two);
  CHECK(s.n == 2);
  CHECK(s.mean == doctest::Approx(0.5).epsilon(1e-12));
  REQUIRE(s.se);
  // sd = |0.6 - 0.4| / sqrt(2); se = sd / sqrt(2) = 0.1
  CHECK(*s.se == doctest::Approx(0.1).epsilon(1e-12));
  const std::vector<double> one{0.7};
  CHECK_FALSE(summarize(one).se);
  CHECK_THROWS_AS(summarize(std::vector<double>{}), DomainError);
}

TEST_CASE("report tables, empty se for one seed, and provenance") {
  const fs::path root = scratch("report");
  fake_run(root / "knrm-none-s1", {{"kind", "grid"}, {"head", "knrm"}, {"strategy", "none"}, {"seed", "1"}}, 0.4,
           -0.1, 0.2, 0.5);
  fake_run(root / "knrm-none-s2", {{"kind", "grid"}, {"head", "knrm"}, {"strategy", "none"}, {"seed", "2"}}, 0.6,
           -0.3, 0.2, 0.5);
  fake_run(root / "drmm-si-s1", {{"kind", "grid"}, {"head", "drmm"}, {"strategy", "si"}, {"seed", "1"}}, 0.7, 0.0,
           0.1, 0.5);
  {
    fs::create_directories(root / "knrm-ewc-s1");
    std::ofstream m(root / "knrm-ewc-s1" / "manifest");
    m << "status=failed\nrun.kind=grid\n";
  }
  std::map<fs::path, std::string> before;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) before[e.path()] = slurp(e.path());
  }

  const ReportFiles files = write_report(root, root / "report");
  CHECK(files.runs == 3);
  for (const auto& [p, content] : before) CHECK(slurp(p) == content);

  const auto t = read_csv(root / "report" / "table_p_final.csv");
  REQUIRE(t.size() == 3);
  CHECK(t[0] == std::vector<std::string>{"strategy", "model", "mean", "se", "n", "runs"});
  CHECK(t[1][0] == "none");
  CHECK(t[1][1] == "knrm");
  CHECK(std::stod(t[1][2]) == doctest::Approx(0.5));
  CHECK(std::stod(t[1][3]) == doctest::Approx(0.1));
  CHECK(t[1][4] == "2");
  CHECK(t[1][5] == "knrm-none-s1;knrm-none-s2");
  CHECK(t[2][0] == "si");
  CHECK(t[2][3].empty());
  CHECK(t[2][4] == "1");

  const auto b = read_csv(root / "report" / "table_bwt.csv");
  CHECK(std::stod(b[1][2]) == doctest::Approx(-0.2));
  CHECK(read_csv(root / "report" / "per_seed.csv").size() == 4);
  const std::string md = slurp(root / "report" / "tables.md");
  CHECK(md.find("0.5000 ± 0.1000") != std::string::npos);
  CHECK(md.find("0.7000 |") != std::string::npos);
  CHECK_FALSE(fs::exists(root / "report" / "sweep_pearson.csv"));
  fs::remove_all(root);
}

TEST_CASE("a sweep with MRR strictly decreasing in distance has Pearson -1") {
  const fs::path root = scratch("pearson");
  const std::vector<double> dist{0.0, 0.1, 0.4, 0.9};
  const std::vector<double> vol{0.5, 1, 2, 4};
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const double mrr = 0.9 - 0.5 * dist[i];
    fake_run(root / "topic" / ("a" + std::to_string(i)),
             {{"kind", "topic"}, {"axis", "alpha"}, {"head", "knrm"}, {"strategy", "none"}, {"seed", "0"},
              {"distance", std::to_string(dist[i])}},
             0.5, 0.0, 0.0, mrr);
    fake_run(root / "volume" / ("x" + std::to_string(i)),
             {{"kind", "volume"}, {"axis", "volume"}, {"head", "knrm"}, {"strategy", "none"}, {"seed", "0"},
              {"axis_value", std::to_string(vol[i])}},
             0.5, 0.0, 0.0, 0.5 - 0.1 * static_cast<double>(i));
  }
  write_report(root, root / "out");
  const auto rows = read_csv(root / "out" / "sweep_pearson.csv");
  REQUIRE(rows.size() == 5);
  std::size_t minus_one = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    CHECK(rows[r][5] == (rows[r][4] == "mean" ? "1" : "4"));
    if (rows[r][6] == "-1.000000") ++minus_one;
  }
  CHECK(minus_one == 2);  // topic column; the volume column is not linear
  CHECK(read_csv(root / "out" / "sweep_topic.csv").size() == 5);
  CHECK(read_csv(root / "out" / "sweep_volume.csv").size() == 5);
  CHECK(read_csv(root / "out" / "table_p_final.csv").size() == 1);
  fs::remove_all(root);
}

TEST_CASE("taskgen writes task files and distances, byte-identical on rerun") {
  const ExperimentConfig c = parse("synthetic.tasks = 3\nsynthetic.train_queries = 10\nsynthetic.test_queries = 4\n");
  const fs::path a = scratch("tg_a");
  const fs::path b = scratch("tg_b");
  CHECK(write_taskgen(c, a) == 3);
  write_taskgen(c, b);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
  }
  CHECK(files == 7);
  std::ifstream in(a / "topic_distances.csv");
  const auto d = data::read_distance_csv(in);
  REQUIRE(d.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(d[i][i] == 0.0);
  CHECK(data::ingest_tasks(a).size() == 3);
  CHECK_THROWS_AS(write_taskgen(parse("dataset.source = ingest\ndataset.path = /tmp\n"), a), ConfigError);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("corpus taskgen on the 4-point toy matches the brute-force partition") {
  // mean query vectors (0,0), (0,1), (10,0), (10,1): the best 2-partition
  // splits on the first coordinate with inertia 1
  const fs::path dir = scratch("corpus");
  std::vector<data::Sample> corpus;
  const char* texts[] = {"aa", "ab", "ba", "bb"};
  for (int q = 0; q < 4; ++q) {
    const std::string id = "q" + std::to_string(q);
    corpus.push_back({id, texts[q], id + "r", "doc", 1.0, 0});
    corpus.push_back({id, texts[q], id + "n", "other", 0.0, 0});
  }
  {
    std::ofstream c(dir / "corpus.tsv");
    data::write_samples(c, corpus);
    std::ofstream e(dir / "vectors.txt");
    e << "aa 0 0\nab 0 1\nba 10 0\nbb 10 1\ndoc 5 5\nother 6 6\n";
  }
  const ExperimentConfig c = parse("dataset.source = corpus\ncorpus.path = " + (dir / "corpus.tsv").string() +
                                   "\ncorpus.embeddings = " + (dir / "vectors.txt").string() +
                                   "\ncorpus.topics = 2\ncorpus.test_fraction = 0.5\n");
  CHECK(write_taskgen(c, dir / "tasks") == 2);
  const data::ContinualDataset ds = data::ingest_tasks(dir / "tasks");
  auto queries = [](const data::TaskData& t) {
    std::set<std::string> q;
    for (const auto* split : {&t.train, &t.test}) {
      for (const auto& r : *split) q.insert(r.query_id);
    }
    return q;
  };
  CHECK(queries(ds.tasks[0]) == std::set<std::string>{"q0", "q1"});
  CHECK(queries(ds.tasks[1]) == std::set<std::string>{"q2", "q3"});
  std::ifstream in(dir / "tasks" / "topic_distances.csv");
  CHECK(data::read_distance_csv(in)[0][1] == doctest::Approx(100.0));
  fs::remove_all(dir);
}
