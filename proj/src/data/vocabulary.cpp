#include "contir/data/vocabulary.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "contir/error.hpp"
#include "contir/random.hpp"

namespace contir::data {

namespace {

bool token_char(unsigned char c) { return c >= 0x80 || std::isalnum(c); }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (token_char(c)) {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() {
  tokens_ = {"<pad>", "<unk>"};
  ids_ = {{"<pad>", kPad}, {"<unk>", kUnknown}};
}

std::int64_t Vocabulary::add(std::string_view token) {
  auto [it, inserted] = ids_.emplace(std::string(token), static_cast<std::int64_t>(tokens_.size()));
  if (inserted) tokens_.emplace_back(token);
  return it->second;
}

std::int64_t Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnknown : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.count(std::string(token)) != 0;
}

const std::string& Vocabulary::token(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int64_t> Vocabulary::encode(std::string_view text) const {
  std::vector<std::int64_t> ids;
  for (const auto& t : tokenize(text)) ids.push_back(id(t));
  if (ids.empty()) ids.push_back(kUnknown);
  return ids;
}

ad::Tensor load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                           std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  std::vector<std::vector<double>> rows(vocab.size());
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::vector<std::string> fields;
    for (std::string f; ss >> f;) fields.push_back(f);
    if (fields.empty()) continue;
    if (lineno == 1 && fields.size() == 2) {
      bool ints = true;
      for (const auto& f : fields) {
        long long v = 0;
        auto r = std::from_chars(f.data(), f.data() + f.size(), v);
        ints = ints && r.ec == std::errc() && r.ptr == f.data() + f.size();
      }
      if (ints) continue;
    }
    const std::size_t n = fields.size() - 1;
    if (n == 0) throw DataError(path.string() + ":" + std::to_string(lineno) + ": no vector values");
    if (dim == 0) dim = n;
    if (n != dim) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": dimension " +
                      std::to_string(n) + " differs from " + std::to_string(dim));
    }
    std::vector<double> vec(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& f = fields[i + 1];
      auto r = std::from_chars(f.data(), f.data() + f.size(), vec[i]);
      if (r.ec != std::errc() || r.ptr != f.data() + f.size()) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + f + "'");
      }
    }
    if (!vocab.contains(fields[0])) continue;
    const auto id = static_cast<std::size_t>(vocab.id(fields[0]));
    if (id == static_cast<std::size_t>(Vocabulary::kPad)) continue;
    if (rows[id].empty()) rows[id] = std::move(vec);
  }
  if (dim == 0) throw DataError("embedding file " + path.string() + " holds no vectors");
  ad::Tensor table(ad::Shape{vocab.size(), dim});
  Rng rng(derive_seed(seed, 0x656d62));
  for (std::size_t r = 1; r < vocab.size(); ++r) {
    double* dst = table.data() + r * dim;
    if (!rows[r].empty()) {
      std::copy(rows[r].begin(), rows[r].end(), dst);
    } else {
      for (std::size_t j = 0; j < dim; ++j) dst[j] = rng.uniform(-0.25, 0.25);
    }
  }
  return table;
}

}  // namespace contir::data
