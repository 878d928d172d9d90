#include "contir/experiment/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <tuple>

#include "contir/error.hpp"
#include "contir/metrics/metrics.hpp"

namespace contir::exp {

namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> read_kv(const fs::path& path) {
  std::map<std::string, std::string> kv;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::optional<double> number(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end() || it->second.empty()) return std::nullopt;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::string fixed(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string cell(const std::optional<double>& x) { return x ? fixed(*x) : std::string(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::ofstream open_out(const fs::path& path, ReportFiles& files) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  files.written.push_back(path);
  return out;
}

struct Cell {
  Summary summary;
  std::vector<std::string> runs;
};

using Table = std::map<std::pair<std::string, std::string>, Cell>;  // (strategy, model)

Table build_table(const std::vector<const RunRecord*>& runs, std::optional<double> RunRecord::*field) {
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<std::string>>> groups;
  for (const RunRecord* r : runs) {
    if (!(r->*field)) continue;
    auto& g = groups[{r->label("strategy"), r->label("head")}];
    g.first.push_back(*(r->*field));
    g.second.push_back(r->name);
  }
  Table t;
  for (auto& [key, g] : groups) t[key] = Cell{summarize(g.first), g.second};
  return t;
}

void write_table_csv(std::ostream& out, const Table& t) {
  out << "strategy,model,mean,se,n,runs\n";
  for (const auto& [key, c] : t) {
    std::string runs;
    for (const std::string& r : c.runs) runs += (runs.empty() ? "" : ";") + r;
    out << csv_field(key.first) << ',' << csv_field(key.second) << ',' << fixed(c.summary.mean) << ','
        << cell(c.summary.se) << ',' << c.summary.n << ',' << csv_field(runs) << '\n';
  }
}

void write_table_md(std::ostream& out, const std::string& title, const Table& t) {
  std::set<std::string> strategies, models;
  for (const auto& [key, c] : t) {
    strategies.insert(key.first);
    models.insert(key.second);
  }
  out << "## " << title << "\n\n| strategy |";
  for (const std::string& m : models) out << ' ' << m << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < models.size(); ++i) out << "---|";
  out << '\n';
  for (const std::string& s : strategies) {
    out << "| " << s << " |";
    for (const std::string& m : models) {
      auto it = t.find({s, m});
      if (it == t.end()) {
        out << "  |";
        continue;
      }
      const Summary& x = it->second.summary;
      out << ' ' << fixed(x.mean, 4);
      if (x.se) out << " ± " << fixed(*x.se, 4);
      out << " |";
    }
    out << '\n';
  }
  out << '\n';
}

struct SweepPoint {
  const RunRecord* run;
  double x;
};

}  // namespace

std::string RunRecord::label(const std::string& key) const {
  auto it = labels.find(key);
  return it == labels.end() ? std::string() : it->second;
}

std::vector<RunRecord> scan_runs(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("run root " + root.string() + " is not a directory");
  std::vector<RunRecord> runs;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().filename() != "manifest") continue;
    const fs::path dir = entry.path().parent_path();
    const auto manifest = read_kv(entry.path());
    auto status = manifest.find("status");
    if (status == manifest.end() || status->second != "complete") continue;
    RunRecord r;
    r.name = fs::relative(dir, root).generic_string();
    for (const auto& [k, v] : manifest) {
      if (k.rfind("run.", 0) == 0) r.labels[k.substr(4)] = v;
    }
    if (!r.labels.count("head")) r.labels["head"] = manifest.count("config.ranker.head") ? manifest.at("config.ranker.head") : "";
    if (!r.labels.count("strategy")) r.labels["strategy"] = manifest.count("config.strategy") ? manifest.at("config.strategy") : "";
    if (!r.labels.count("seed")) r.labels["seed"] = manifest.count("config.seed") ? manifest.at("config.seed") : "";
    if (!r.labels.count("kind")) r.labels["kind"] = "grid";
    const auto m = read_kv(dir / "metrics.txt");
    r.p_final = number(m, "p_final");
    r.bwt = number(m, "bwt");
    r.fwt = number(m, "fwt");
    std::ifstream pin(dir / "P_matrix.csv");
    if (pin) {
      metrics::PerformanceMatrix p = metrics::PerformanceMatrix::read_csv(pin);
      if (p.has(p.tasks() - 1, 0)) r.first_task_final = p.at(p.tasks() - 1, 0);
    }
    runs.push_back(std::move(r));
  }
  std::sort(runs.begin(), runs.end(), [](const RunRecord& a, const RunRecord& b) { return a.name < b.name; });
  return runs;
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw DomainError("summarize: no values");
  Summary s;
  s.n = values.size();
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.se = sd / std::sqrt(static_cast<double>(s.n));
  }
  return s;
}

ReportFiles write_report(const fs::path& root, const fs::path& out_dir) {
  const std::vector<RunRecord> runs = scan_runs(root);
  if (runs.empty()) throw DataError("no completed runs found under " + root.string());
  fs::create_directories(out_dir);
  ReportFiles files;
  files.runs = runs.size();

  {
    std::ofstream out = open_out(out_dir / "per_seed.csv", files);
    out << "run,kind,head,strategy,seed,axis,axis_value,distance,p_final,bwt,fwt,first_task_final\n";
    for (const RunRecord& r : runs) {
      out << csv_field(r.name) << ',' << r.label("kind") << ',' << r.label("head") << ',' << r.label("strategy") << ','
          << r.label("seed") << ',' << r.label("axis") << ',' << r.label("axis_value") << ',' << r.label("distance")
          << ',' << cell(r.p_final) << ',' << cell(r.bwt) << ',' << cell(r.fwt) << ',' << cell(r.first_task_final)
          << '\n';
    }
  }

  std::vector<const RunRecord*> grid;
  for (const RunRecord& r : runs) {
    if (r.label("kind") == "grid") grid.push_back(&r);
  }
  {
    const std::vector<std::tuple<std::string, std::string, std::optional<double> RunRecord::*>> metrics_list = {
        {"p_final", "Final performance", &RunRecord::p_final},
        {"bwt", "Backward transfer", &RunRecord::bwt},
        {"fwt", "Forward transfer", &RunRecord::fwt}};
    std::ofstream md = open_out(out_dir / "tables.md", files);
    md << "# Results\n\nMean ± standard error over seeds; " << grid.size() << " grid runs.\n\n";
    for (const auto& [key, title, field] : metrics_list) {
      const Table t = build_table(grid, field);
      std::ofstream csv = open_out(out_dir / ("table_" + key + ".csv"), files);
      write_table_csv(csv, t);
      write_table_md(md, title, t);
    }
  }

  // Sweep files: x is the topic distance or the volume multiplier, y is P(T, 1).
  std::map<std::tuple<std::string, std::string, std::string, std::string, std::string>, std::vector<SweepPoint>> series;
  std::vector<SweepPoint> topic, volume;
  for (const RunRecord& r : runs) {
    const std::string kind = r.label("kind");
    if (kind != "topic" && kind != "volume") continue;
    if (!r.first_task_final) continue;
    double x = 0.0;
    try {
      x = std::stod(kind == "topic" ? r.label("distance") : r.label("axis_value"));
    } catch (const std::exception&) {
      continue;
    }
    (kind == "topic" ? topic : volume).push_back({&r, x});
    series[{kind, r.label("axis"), r.label("head"), r.label("strategy"), r.label("seed")}].push_back({&r, x});
  }
  auto write_sweep = [&](const std::string& file, const std::string& xname, const std::vector<SweepPoint>& pts) {
    std::ofstream out = open_out(out_dir / file, files);
    out << "run,axis,head,strategy,seed," << xname << ",mrr\n";
    for (const SweepPoint& p : pts) {
      out << csv_field(p.run->name) << ',' << p.run->label("axis") << ',' << p.run->label("head") << ','
          << p.run->label("strategy") << ',' << p.run->label("seed") << ',' << fixed(p.x, 9) << ','
          << fixed(*p.run->first_task_final) << '\n';
    }
  };
  if (!topic.empty()) write_sweep("sweep_topic.csv", "distance", topic);
  if (!volume.empty()) write_sweep("sweep_volume.csv", "volume", volume);
  if (!series.empty()) {
    std::ofstream out = open_out(out_dir / "sweep_pearson.csv", files);
    out << "kind,axis,head,strategy,seed,points,pearson,runs\n";
    std::map<std::tuple<std::string, std::string, std::string, std::string>, std::vector<double>> by_group;
    std::vector<std::tuple<std::string, std::string, std::string, std::string>> order;
    for (const auto& [key, pts] : series) {
      const auto& [kind, axis, head, strategy, seed] = key;
      std::vector<double> x, y;
      std::string names;
      for (const SweepPoint& p : pts) {
        x.push_back(p.x);
        y.push_back(*p.run->first_task_final);
        names += (names.empty() ? "" : ";") + p.run->name;
      }
      std::optional<double> r;
      if (x.size() >= 2) {
        try {
          r = metrics::pearson(x, y);
        } catch (const DomainError&) {
        }
      }
      const auto group = std::make_tuple(kind, axis, head, strategy);
      if (!by_group.count(group)) order.push_back(group);
      auto& rs = by_group[group];
      if (r) rs.push_back(*r);
      out << kind << ',' << axis << ',' << head << ',' << strategy << ',' << seed << ',' << x.size() << ','
          << cell(r) << ',' << csv_field(names) << '\n';
    }
    for (const auto& group : order) {
      const auto& rs = by_group[group];
      const auto& [kind, axis, head, strategy] = group;
      std::optional<double> mean;
      if (!rs.empty()) mean = summarize(rs).mean;
      out << kind << ',' << axis << ',' << head << ',' << strategy << ",mean," << rs.size() << ',' << cell(mean)
          << ",\n";
    }
  }
  return files;
}

}  // namespace contir::exp
