#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "clt/common.hpp"
#include "clt/instance.hpp"
#include "clt/rng.hpp"

namespace clt {

// Lowercases ASCII, splits punctuation characters into standalone tokens,
// then splits on whitespace. Bytes >= 0x80 are kept inside tokens so UTF-8
// sequences survive intact. Whitespace-only input yields an empty list.
std::vector<std::string> tokenize(const std::string& raw);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  // Tokens seen at least min_count times across all corpora get ids in
  // descending-frequency order, ties broken lexicographically. Everything
  // else maps to UNK.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpora,
                          int min_count = 2);

  int lookup(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(lookup(t));
    return out;
  }

  const std::string& token(int id) const { return tokens_.at(std::size_t(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }

  // One token per line, line index == id. Round-trips exactly.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> tokens_;
};

struct Segmenter {
  enum class Mode { sentence_punct, fixed_chunk };
  Mode mode = Mode::sentence_punct;
  int chunk_size = 20;
  int max_segments = 60;
};

// Sentence-punctuation mode splits after {. ! ? ;}; pieces longer than
// 2*chunk_size are re-split into chunk_size chunks; with no punctuation at
// all it falls back to fixed chunks. Overflow beyond max_segments merges into
// the last segment, so flattening always reproduces the input.
std::vector<std::vector<std::string>> segment(const std::vector<std::string>& tokens,
                                              const Segmenter& seg);

struct PseudoLongConfig {
  int k_min = 3;
  int k_max = 10;
  std::uint64_t seed = 0;
};

// Concatenates k (uniform in [k_min, k_max]) short texts sampled from the
// pool, without replacement when the pool is large enough. The Bag keeps the
// shorts as its segments and their labels as segment labels; it carries no
// document label.
Bag make_pseudo_long(const std::vector<Instance>& pool, const PseudoLongConfig& cfg,
                     Rng& rng);

}  // namespace clt
