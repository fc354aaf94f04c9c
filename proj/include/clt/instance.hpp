#pragma once

#include <vector>

#include "clt/common.hpp"

namespace clt {

constexpr int kNoLabel = -1;

// A single text already mapped to vocabulary ids.
struct Instance {
  std::vector<int> ids;
  int label = kNoLabel;

  int length() const { return static_cast<int>(ids.size()); }
};

// A segmented document. Real long documents carry a document label; pseudo
// longs built from short texts carry per-segment labels instead.
struct Bag {
  std::vector<std::vector<int>> segments;
  int label = kNoLabel;
  std::vector<int> segment_labels;  // kNoLabel where unknown

  bool has_label() const { return label != kNoLabel; }

  int total_length() const {
    int n = 0;
    for (const auto& s : segments) n += static_cast<int>(s.size());
    return n;
  }

  std::vector<int> concat_ids() const {
    std::vector<int> out;
    out.reserve(std::size_t(total_length()));
    for (const auto& s : segments) out.insert(out.end(), s.begin(), s.end());
    return out;
  }
};

}  // namespace clt
