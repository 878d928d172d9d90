#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "contir/autodiff/tensor.hpp"

namespace contir::data {

/// Lowercases ASCII letters and splits on runs of ASCII characters that are
/// not letters or digits. Bytes >= 0x80 stay inside tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Token <-> id map. Id 0 is padding, id 1 the unknown token.
class Vocabulary {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kUnknown = 1;

  Vocabulary();

  std::int64_t add(std::string_view token);
  /// Unknown tokens map to kUnknown.
  std::int64_t id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(std::int64_t id) const;
  std::size_t size() const noexcept { return tokens_.size(); }

  /// Tokenizes and looks up; text without tokens becomes {kUnknown}.
  std::vector<std::int64_t> encode(std::string_view text) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int64_t> ids_;
};

/// Reads a word-vector text file (token followed by n reals per line; an
/// optional leading "count dim" line is skipped). Rows of vocabulary tokens
/// found in the file are copied exactly; every other row except padding is
/// uniform in [-0.25, 0.25] drawn from `seed`; the pad row is zero.
/// Returns [|V|, n]. Throws DataError on inconsistent dimensions.
ad::Tensor load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                           std::uint64_t seed);

}  // namespace contir::data
