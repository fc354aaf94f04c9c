#pragma once

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_set>

#include "clt/common.hpp"
#include "clt/rng.hpp"
#include "clt/tensor.hpp"
#include "clt/text.hpp"

namespace clt {

template <typename Scalar>
struct EmbeddingLoad {
  Tensor<Scalar> table;  // [V x dim]
  double coverage = 0.0;
  int found = 0;
};

// Every row drawn uniform(-0.25, 0.25) from a seed derived per row, so the
// result does not depend on iteration order. PAD row stays zero.
template <typename Scalar>
Tensor<Scalar> random_embeddings(int vocab_size, int dim, std::uint64_t seed) {
  Tensor<Scalar> table({vocab_size, dim});
  for (int r = 0; r < vocab_size; ++r) {
    if (r == Vocabulary::kPad) continue;
    Rng rng(derive_seed(seed, "embed.init", std::uint64_t(r)));
    for (int c = 0; c < dim; ++c)
      table.at(r, c) = static_cast<Scalar>(rng.uniform(-0.25, 0.25));
  }
  return table;
}

// Text format: `token v1 ... v<dim>` per line. In-vocabulary rows are copied;
// misses (and UNK) keep their seeded random initialization; PAD stays zero.
template <typename Scalar>
EmbeddingLoad<Scalar> load_embeddings(const std::string& path, const Vocabulary& vocab,
                                      int dim, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw DataError("load_embeddings: cannot open " + path);

  EmbeddingLoad<Scalar> out;
  out.table = random_embeddings<Scalar>(vocab.size(), dim, seed);

  std::unordered_set<int> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    const int id = vocab.lookup(token);
    bool wanted = id != Vocabulary::kUnk && id != Vocabulary::kPad;
    if (wanted && !seen.insert(id).second) {
      std::cerr << "load_embeddings: duplicate token '" << token << "' at " << path
                << ":" << line_no << ", keeping the first occurrence\n";
      wanted = false;
    }
    int count = 0;
    double v = 0;
    while (ss >> v) {
      if (wanted && count < dim) out.table.at(id, count) = static_cast<Scalar>(v);
      ++count;
    }
    if (!ss.eof())
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed number");
    if (count != dim)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(dim) + " values, found " + std::to_string(count));
  }
  out.found = static_cast<int>(seen.size());
  const int countable = vocab.size() - 2;  // PAD and UNK never count
  out.coverage = countable > 0 ? double(out.found) / double(countable) : 0.0;
  return out;
}

}  // namespace clt
