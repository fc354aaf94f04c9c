#pragma once
// The in-channel / out-channel evaluation protocol. The out-channel model
// trains on the source channel's k-fold train splits and is scored on the
// target channel's test folds; the in-channel baseline is a CNN trained on
// the target channel itself. Transfer loss and ratio compare the two.
//
// Every random stream is derived from the root seed plus a content hash of
// the corpus it concerns, so two runs over identical corpora train identical
// models regardless of which channel the corpus arrived through.

#include <functional>
#include <string>
#include <vector>

#include "clt/corpus.hpp"
#include "clt/evaluation.hpp"
#include "clt/models.hpp"
#include "clt/training.hpp"

namespace clt {

struct ProtocolConfig {
  ModelKind kind = ModelKind::cnn;
  Direction direction = Direction::long_to_short;
  int k_folds = 5;
  ModelConfig model;
  TrainConfig train;  // train.seed is the root seed for the whole protocol
  std::vector<double> lambda_grid = {0.01, 0.1, 1.0};
  Segmenter segmenter;
  int min_count = 2;
  std::string embeddings_path;  // empty: seeded random initialization
  std::vector<int> bucket_edges;  // empty: deciles of the evaluated set
};

// Per-fold in-channel CNN results, reusable across out-channel models
// evaluated on the same target corpus and config.
struct IcBaseline {
  std::vector<double> accuracy;
  std::vector<double> rmse_vals;  // empty for C=2
};

using ProtocolLogger =
    std::function<void(int fold, const std::string& role, double lambda,
                       const EpochStats&)>;

std::uint64_t corpus_hash(const Corpus& corpus);

IcBaseline compute_ic_baseline(const Corpus& shorts, const Corpus& longs,
                               const ProtocolConfig& cfg,
                               const ProtocolLogger& logger = nullptr);

MetricsReport run_transfer_protocol(const Corpus& shorts, const Corpus& longs,
                                    const ProtocolConfig& cfg,
                                    const IcBaseline* precomputed_ic = nullptr,
                                    const ProtocolLogger& logger = nullptr);

}  // namespace clt
