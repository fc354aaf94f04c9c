#pragma once

#include <string>
#include <vector>

#include "clt/common.hpp"

namespace clt {

double accuracy(const std::vector<int>& preds, const std::vector<int>& golds);

// Both sides on the original 1..5 score scale. Fine-grained corpora only.
double rmse(const std::vector<int>& pred_scores, const std::vector<int>& gold_scores,
            int num_classes);

// In percentage points: 100 * (e_oc - e_ic). Negative means the out-channel
// classifier beat the in-channel one.
double transfer_loss(double e_oc, double e_ic);

// Mean over datasets of e / e_baseline.
double transfer_ratio(const std::vector<double>& errors,
                      const std::vector<double>& baseline_errors);

struct LengthBucket {
  int min_len = 0;
  int max_len = 0;
  int count = 0;
  double accuracy = 0.0;
};

// Decile cut points over the observed lengths (deduplicated, so short-range
// sets yield fewer buckets).
std::vector<int> decile_edges(std::vector<int> lengths);

// Accuracy per token-length bucket. `edges` holds inclusive upper bounds for
// all buckets but the last, which absorbs the rest; empty edges mean deciles
// of the evaluated set.
std::vector<LengthBucket> per_length_report(const std::vector<int>& lengths,
                                            const std::vector<int>& preds,
                                            const std::vector<int>& golds,
                                            std::vector<int> edges = {});

struct FoldMetrics {
  int fold = 0;
  double oc_accuracy = 0.0;
  double ic_accuracy = 0.0;
  double oc_rmse = -1.0;  // negative when not applicable (C=2)
  double ic_rmse = -1.0;
  double transfer_loss = 0.0;
};

struct MetricsReport {
  std::string model;
  std::string direction;
  std::string source_corpus;
  std::string target_corpus;
  int num_classes = 2;
  int folds_k = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  std::vector<FoldMetrics> folds;
  double mean_oc_accuracy = 0.0;
  double mean_ic_accuracy = 0.0;
  double mean_oc_rmse = -1.0;
  double mean_ic_rmse = -1.0;
  double transfer_loss = 0.0;
  bool has_transfer_ratio = false;
  double transfer_ratio = 0.0;
  std::vector<LengthBucket> per_length;
};

// Stable key order, no timestamps: two runs with the same inputs serialize
// byte-identically.
std::string report_to_json(const MetricsReport& r);

// Plain-text render of the per-fold table plus the summary line.
std::string render_report(const MetricsReport& r);

// Ablation summary across mechanism variants (All / JT / PR / SP).
struct AblationRow {
  std::string variant;
  double accuracy = 0.0;
  double delta_vs_all = 0.0;
};

std::string render_ablation(const std::vector<AblationRow>& rows,
                            const std::string& direction);
std::string ablation_to_json(const std::vector<AblationRow>& rows,
                             const std::string& direction);

}  // namespace clt
