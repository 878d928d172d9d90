#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "contir/data/dataset.hpp"

namespace contir::data {

inline constexpr const char* kTaskHeader = "query_id\tquery_text\tdoc_id\tdoc_text\trelevance";

/// Parses one task TSV. `source` names the input in error messages, which
/// carry 1-based line numbers.
std::vector<Sample> read_samples(std::istream& in, const std::string& source, std::size_t task);
void write_samples(std::ostream& out, const std::vector<Sample>& samples);

/// task_<t>.train.tsv / task_<t>.test.tsv
std::filesystem::path task_file(const std::filesystem::path& root, std::size_t t, bool train);

/// Loads task_1, task_2, ... until the next train file is missing, validates
/// every task and builds the shared vocabulary.
ContinualDataset ingest_tasks(const std::filesystem::path& root);

void write_tasks(const std::filesystem::path& root, const std::vector<TaskData>& tasks);

}  // namespace contir::data
