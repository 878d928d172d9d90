// contir: task generation, experiment runs and reports.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "contir/error.hpp"
#include "contir/experiment/config.hpp"
#include "contir/experiment/experiment.hpp"
#include "contir/experiment/report.hpp"

namespace fs = std::filesystem;
using namespace contir;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;

struct Args {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
  std::string root;
};

int taskgen(const Args& a) {
  exp::ExperimentConfig c = exp::load_config(a.config);
  if (a.seed) {
    c.synthetic.seed = *a.seed;
    c.corpus.seed = *a.seed;
  }
  fs::path out = !a.out.empty() ? fs::path(a.out) : c.output_dir.value_or(fs::path());
  if (out.empty()) throw ConfigError("taskgen: no output directory (--out or output.dir)");
  const std::size_t tasks = exp::write_taskgen(c, out);
  std::cout << "wrote " << tasks << " tasks and topic_distances.csv to " << out.string() << '\n';
  return kOk;
}

int run(const Args& a) {
  exp::ExperimentConfig c = exp::load_config(a.config);
  if (a.seed) c.seeds = {*a.seed};
  fs::path out = !a.out.empty() ? fs::path(a.out) : c.output_dir.value_or(fs::path());
  if (out.empty()) throw ConfigError("run: no output directory (--out or output.dir)");
  exp::ExperimentOptions opt;
  opt.threads = exp::worker_threads();
  opt.dry_run = a.dry_run;
  const std::size_t planned = exp::plan_jobs(c).size();
  std::cout << (a.dry_run ? "dry run: " : "running ") << planned << " runs into " << out.string() << " on up to "
            << opt.threads << " threads\n";
  const auto outcomes = exp::run_experiment(c, out, opt);
  std::size_t failed = 0;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++failed;
      std::cerr << "FAILED " << o.name << ": " << o.error << '\n';
    }
  }
  std::cout << outcomes.size() - failed << " of " << outcomes.size() << " runs "
            << (a.dry_run ? "planned" : "completed") << '\n';
  return failed == 0 ? kOk : kFailure;
}

int report(const Args& a) {
  fs::path root = a.root;
  if (root.empty() && !a.config.empty()) root = exp::load_config(a.config).output_dir.value_or(fs::path());
  if (root.empty()) throw ConfigError("report: no run root (positional argument or output.dir in --config)");
  const fs::path out = a.out.empty() ? root / "report" : fs::path(a.out);
  const exp::ReportFiles files = exp::write_report(root, out);
  std::cout << "report over " << files.runs << " completed runs:\n";
  for (const auto& p : files.written) std::cout << "  " << p.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contir: continual learning for neural rankers"};
  app.require_subcommand(1);
  Args a;
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("taskgen", "write task files and topic_distances.csv");
  gen->add_option("--config", a.config, "experiment config")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", a.out, "output directory (default: output.dir)");
  auto* gen_seed = gen->add_option("--seed", seed, "generator and split seed");

  auto* runc = app.add_subcommand("run", "run every configured (head, strategy, seed) combination");
  runc->add_option("--config", a.config, "experiment config")->required()->check(CLI::ExistingFile);
  runc->add_option("--out", a.out, "run root (default: output.dir)");
  auto* run_seed = runc->add_option("--seed", seed, "run only this seed");
  runc->add_flag("--dry-run", a.dry_run, "write manifests without training");

  auto* rep = app.add_subcommand("report", "aggregate completed runs into tables and sweep CSVs");
  rep->add_option("root", a.root, "run root");
  rep->add_option("--config", a.config, "experiment config, for output.dir")->check(CLI::ExistingFile);
  rep->add_option("--out", a.out, "report directory (default: <root>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  if (gen_seed->count() || run_seed->count()) a.seed = seed;

  try {
    if (gen->parsed()) return taskgen(a);
    if (runc->parsed()) return run(a);
    return report(a);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
