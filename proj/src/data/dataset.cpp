#include "contir/data/dataset.hpp"

#include <cstdio>
#include <map>
#include <set>
#include <utility>

#include "contir/error.hpp"

namespace contir::data {

namespace {

void check_split(const std::vector<Sample>& rows, const std::string& where, bool test) {
  std::set<std::pair<std::string, std::string>> seen;
  std::map<std::string, std::pair<bool, bool>> labels;  // query -> (has relevant, has non-relevant)
  std::vector<std::string> order;
  for (const Sample& s : rows) {
    if (!(s.relevance >= 0.0 && s.relevance <= 1.0)) {
      throw DataError(where + ": relevance " + std::to_string(s.relevance) + " of query " +
                      s.query_id + " outside [0, 1]");
    }
    if (!seen.emplace(s.query_id, s.doc_id).second) {
      throw DataError(where + ": duplicate pair (" + s.query_id + ", " + s.doc_id + ")");
    }
    auto [it, fresh] = labels.try_emplace(s.query_id, false, false);
    if (fresh) order.push_back(s.query_id);
    (s.relevance > 0.0 ? it->second.first : it->second.second) = true;
  }
  if (!test) return;
  for (const auto& q : order) {
    const auto& [rel, nonrel] = labels[q];
    if (!rel) throw DataError(where + ": test query " + q + " has no relevant document");
    if (!nonrel) throw DataError(where + ": test query " + q + " has no non-relevant document");
  }
}

void fnv(std::uint64_t& h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  h ^= 0xff;  // field separator
  h *= 0x100000001b3ULL;
}

}  // namespace

void validate_task(const TaskData& task) {
  const std::string name = "task " + std::to_string(task.id);
  if (task.train.empty()) throw DataError(name + ": empty training set");
  if (task.test.empty()) throw DataError(name + ": empty test set");
  check_split(task.train, name + " train", false);
  check_split(task.test, name + " test", true);
}

Vocabulary build_vocabulary(const std::vector<TaskData>& tasks) {
  Vocabulary v;
  auto add = [&](const std::vector<Sample>& rows) {
    for (const Sample& s : rows) {
      for (const auto& t : tokenize(s.query_text)) v.add(t);
      for (const auto& t : tokenize(s.doc_text)) v.add(t);
    }
  };
  for (const TaskData& t : tasks) {
    add(t.train);
    add(t.test);
  }
  return v;
}

std::string fingerprint(const ContinualDataset& dataset) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[32];
  for (const TaskData& t : dataset.tasks) {
    fnv(h, "task " + std::to_string(t.id));
    for (const auto* split : {&t.train, &t.test}) {
      fnv(h, "split");
      for (const Sample& s : *split) {
        fnv(h, s.query_id);
        fnv(h, s.query_text);
        fnv(h, s.doc_id);
        fnv(h, s.doc_text);
        std::snprintf(buf, sizeof buf, "%.17g", s.relevance);
        fnv(h, buf);
      }
    }
  }
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace contir::data
