#include "clt/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace clt {

namespace {

bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

bool is_sentence_end(const std::string& tok) {
  return tok == "." || tok == "!" || tok == "?" || tok == ";";
}

}  // namespace

std::vector<std::string> tokenize(const std::string& raw) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : raw) {
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (is_ascii_punct(c)) {
      flush();
      out.emplace_back(1, char(c));
    } else {
      cur.push_back(c < 0x80 ? char(std::tolower(c)) : char(c));
    }
  }
  flush();
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpora,
                             int min_count) {
  std::unordered_map<std::string, long long> freq;
  for (const auto& corpus : corpora)
    for (const auto& tok : corpus) ++freq[tok];

  std::vector<std::pair<std::string, long long>> kept;
  for (const auto& [tok, n] : freq) {
    if (n < min_count) continue;
    if (tok == kPadToken || tok == kUnkToken) continue;
    kept.emplace_back(tok, n);
  }
  if (kept.empty())
    throw DataError("build_vocab: no token reaches min_count " +
                    std::to_string(min_count) + "; vocabulary would be empty");
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  Vocabulary v;
  v.tokens_ = {kPadToken, kUnkToken};
  v.ids_ = {{kPadToken, kPad}, {kUnkToken, kUnk}};
  for (auto& [tok, n] : kept) {
    v.ids_.emplace(tok, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(std::move(tok));
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("Vocabulary::save: cannot open " + path);
  for (const auto& tok : tokens_) out << tok << '\n';
  if (!out) throw DataError("Vocabulary::save: write failed for " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("Vocabulary::load: cannot open " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.ids_.emplace(line, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(line);
  }
  if (v.tokens_.size() < 2 || v.tokens_[0] != kPadToken || v.tokens_[1] != kUnkToken)
    throw DataError("Vocabulary::load: " + path + " is not a vocabulary file");
  return v;
}

std::vector<std::vector<std::string>> segment(const std::vector<std::string>& tokens,
                                              const Segmenter& seg) {
  if (tokens.empty()) throw ContractViolation("segment: empty token list");
  if (seg.chunk_size < 1 || seg.max_segments < 1)
    throw ContractViolation("segment: chunk_size and max_segments must be positive");

  std::vector<std::vector<std::string>> pieces;
  const bool has_punct =
      std::any_of(tokens.begin(), tokens.end(),
                  [](const std::string& t) { return is_sentence_end(t); });

  if (seg.mode == Segmenter::Mode::sentence_punct && has_punct) {
    std::vector<std::string> cur;
    for (const auto& tok : tokens) {
      cur.push_back(tok);
      if (is_sentence_end(tok)) {
        pieces.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) pieces.push_back(std::move(cur));
  } else {
    pieces.push_back(tokens);
  }

  // Oversized pieces (or the whole input when chunking) fall back to fixed
  // chunks of chunk_size tokens.
  const std::size_t limit = seg.mode == Segmenter::Mode::fixed_chunk || !has_punct
                                ? std::size_t(seg.chunk_size)
                                : std::size_t(2 * seg.chunk_size);
  std::vector<std::vector<std::string>> segs;
  for (auto& piece : pieces) {
    if (piece.size() <= limit) {
      segs.push_back(std::move(piece));
      continue;
    }
    for (std::size_t i = 0; i < piece.size(); i += std::size_t(seg.chunk_size)) {
      const auto end = std::min(i + std::size_t(seg.chunk_size), piece.size());
      segs.emplace_back(piece.begin() + long(i), piece.begin() + long(end));
    }
  }

  if (segs.size() > std::size_t(seg.max_segments)) {
    auto& last = segs[std::size_t(seg.max_segments) - 1];
    for (std::size_t i = std::size_t(seg.max_segments); i < segs.size(); ++i)
      last.insert(last.end(), segs[i].begin(), segs[i].end());
    segs.resize(std::size_t(seg.max_segments));
  }
  return segs;
}

Bag make_pseudo_long(const std::vector<Instance>& pool, const PseudoLongConfig& cfg,
                     Rng& rng) {
  if (pool.empty()) throw ContractViolation("make_pseudo_long: empty pool");
  if (cfg.k_min < 1 || cfg.k_min > cfg.k_max)
    throw ContractViolation("make_pseudo_long: need 1 <= k_min <= k_max");

  const int k = rng.uniform_int(cfg.k_min, cfg.k_max);
  const int n = static_cast<int>(pool.size());
  std::vector<int> picks;
  if (n >= k) {
    picks = rng.sample_without_replacement(n, k);
  } else {
    picks.reserve(std::size_t(k));
    for (int i = 0; i < k; ++i) picks.push_back(rng.uniform_int(0, n - 1));
  }

  Bag bag;
  for (int idx : picks) {
    bag.segments.push_back(pool[std::size_t(idx)].ids);
    bag.segment_labels.push_back(pool[std::size_t(idx)].label);
  }
  return bag;
}

}  // namespace clt
