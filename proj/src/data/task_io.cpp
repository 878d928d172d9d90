#include "contir/data/task_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "contir/error.hpp"

namespace contir::data {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return cols;
}

std::string format_relevance(double v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void check_field(const std::string& f, const char* what, const std::string& qid) {
  if (f.find_first_of("\t\r\n") != std::string::npos) {
    throw DataError(std::string(what) + " of query " + qid + " contains a tab or newline");
  }
}

}  // namespace

std::vector<Sample> read_samples(std::istream& in, const std::string& source, std::size_t task) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTaskHeader) throw DataError(source + ":1: unexpected header '" + line + "'");
  std::vector<Sample> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    const std::string where = source + ":" + std::to_string(lineno);
    if (cols.size() != 5) {
      throw DataError(where + ": expected 5 tab-separated columns, found " +
                      std::to_string(cols.size()));
    }
    Sample s{cols[0], cols[1], cols[2], cols[3], 0.0, task};
    const std::string& rel = cols[4];
    auto r = std::from_chars(rel.data(), rel.data() + rel.size(), s.relevance);
    if (rel.empty() || r.ec != std::errc() || r.ptr != rel.data() + rel.size()) {
      throw DataError(where + ": non-numeric relevance '" + rel + "'");
    }
    if (!(s.relevance >= 0.0 && s.relevance <= 1.0)) {
      throw DataError(where + ": relevance " + rel + " outside [0, 1]");
    }
    if (s.query_id.empty() || s.doc_id.empty()) throw DataError(where + ": empty id");
    rows.push_back(std::move(s));
  }
  return rows;
}

void write_samples(std::ostream& out, const std::vector<Sample>& samples) {
  out << kTaskHeader << '\n';
  for (const Sample& s : samples) {
    check_field(s.query_id, "query id", s.query_id);
    check_field(s.query_text, "query text", s.query_id);
    check_field(s.doc_id, "doc id", s.query_id);
    check_field(s.doc_text, "doc text", s.query_id);
    out << s.query_id << '\t' << s.query_text << '\t' << s.doc_id << '\t' << s.doc_text << '\t'
        << format_relevance(s.relevance) << '\n';
  }
}

fs::path task_file(const fs::path& root, std::size_t t, bool train) {
  return root / ("task_" + std::to_string(t) + (train ? ".train.tsv" : ".test.tsv"));
}

ContinualDataset ingest_tasks(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("task directory " + root.string() + " not found");
  ContinualDataset ds;
  for (std::size_t t = 1;; ++t) {
    const fs::path train = task_file(root, t, true);
    const fs::path test = task_file(root, t, false);
    if (!fs::exists(train)) {
      if (t == 1) throw DataError("missing " + train.string());
      if (fs::exists(test)) throw DataError("missing " + train.string());
      break;
    }
    if (!fs::exists(test)) throw DataError("missing " + test.string());
    TaskData task;
    task.id = t;
    task.topic = "task_" + std::to_string(t);
    std::ifstream ftrain(train), ftest(test);
    if (!ftrain || !ftest) throw DataError("cannot read task " + std::to_string(t) + " files");
    task.train = read_samples(ftrain, train.string(), t);
    task.test = read_samples(ftest, test.string(), t);
    validate_task(task);
    ds.tasks.push_back(std::move(task));
  }
  ds.vocab = build_vocabulary(ds.tasks);
  return ds;
}

void write_tasks(const fs::path& root, const std::vector<TaskData>& tasks) {
  fs::create_directories(root);
  for (const TaskData& t : tasks) {
    for (bool train : {true, false}) {
      const fs::path p = task_file(root, t.id, train);
      std::ofstream out(p, std::ios::binary);
      if (!out) throw DataError("cannot write " + p.string());
      write_samples(out, train ? t.train : t.test);
      if (!out) throw DataError("write failed for " + p.string());
    }
  }
}

}  // namespace contir::data
