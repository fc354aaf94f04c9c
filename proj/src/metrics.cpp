#include "clt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace clt {

double accuracy(const std::vector<int>& preds, const std::vector<int>& golds) {
  if (preds.empty() || preds.size() != golds.size())
    throw ContractViolation("accuracy: prediction/gold length mismatch");
  int hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == golds[i]) ++hits;
  return double(hits) / double(preds.size());
}

double rmse(const std::vector<int>& pred_scores, const std::vector<int>& gold_scores,
            int num_classes) {
  if (num_classes == 2)
    throw ContractViolation("rmse: undefined for the polarity task");
  if (pred_scores.empty() || pred_scores.size() != gold_scores.size())
    throw ContractViolation("rmse: prediction/gold length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred_scores.size(); ++i) {
    const double d = double(pred_scores[i] - gold_scores[i]);
    sum += d * d;
  }
  return std::sqrt(sum / double(pred_scores.size()));
}

double transfer_loss(double e_oc, double e_ic) {
  if (e_oc < 0 || e_oc > 1 || e_ic < 0 || e_ic > 1)
    throw ContractViolation("transfer_loss: error fractions must be in [0,1]");
  // Points are decimal quantities; snapping to 10 decimals lets decimal hand
  // arithmetic (100*(0.300-0.258) = 4.2) survive the binary representation.
  return std::round(100.0 * (e_oc - e_ic) * 1e10) / 1e10;
}

double transfer_ratio(const std::vector<double>& errors,
                      const std::vector<double>& baseline_errors) {
  if (errors.empty() || errors.size() != baseline_errors.size())
    throw ContractViolation("transfer_ratio: list length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (baseline_errors[i] == 0.0)
      throw ContractViolation("transfer_ratio: zero baseline error at index " +
                              std::to_string(i));
    sum += errors[i] / baseline_errors[i];
  }
  return sum / double(errors.size());
}

std::vector<int> decile_edges(std::vector<int> lengths) {
  if (lengths.empty()) return {};
  std::sort(lengths.begin(), lengths.end());
  std::vector<int> edges;
  for (int d = 1; d < 10; ++d) {
    const auto idx = std::min(lengths.size() - 1, lengths.size() * std::size_t(d) / 10);
    const int edge = lengths[idx];
    if (edges.empty() || edge > edges.back()) edges.push_back(edge);
  }
  // Drop edges at or past the maximum so the last bucket stays non-empty.
  while (!edges.empty() && edges.back() >= lengths.back()) edges.pop_back();
  return edges;
}

std::vector<LengthBucket> per_length_report(const std::vector<int>& lengths,
                                            const std::vector<int>& preds,
                                            const std::vector<int>& golds,
                                            std::vector<int> edges) {
  if (lengths.size() != preds.size() || preds.size() != golds.size())
    throw ContractViolation("per_length_report: input length mismatch");
  if (lengths.empty()) throw ContractViolation("per_length_report: empty input");
  if (edges.empty()) edges = decile_edges(lengths);
  std::sort(edges.begin(), edges.end());

  const int n_buckets = static_cast<int>(edges.size()) + 1;
  std::vector<LengthBucket> buckets(static_cast<std::size_t>(n_buckets));
  std::vector<int> hits(std::size_t(n_buckets), 0);
  for (auto& b : buckets) {
    b.min_len = std::numeric_limits<int>::max();
    b.max_len = 0;
  }
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    int bucket = n_buckets - 1;
    for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
      if (lengths[i] <= edges[std::size_t(e)]) {
        bucket = e;
        break;
      }
    }
    auto& b = buckets[std::size_t(bucket)];
    b.count += 1;
    b.min_len = std::min(b.min_len, lengths[i]);
    b.max_len = std::max(b.max_len, lengths[i]);
    if (preds[i] == golds[i]) ++hits[std::size_t(bucket)];
  }
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    if (buckets[b].count == 0) {
      buckets[b].min_len = 0;
      continue;
    }
    buckets[b].accuracy = double(hits[b]) / double(buckets[b].count);
  }
  return buckets;
}

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json bucket_json(const LengthBucket& b) {
  return ordered_json{{"min_len", b.min_len},
                      {"max_len", b.max_len},
                      {"count", b.count},
                      {"accuracy", b.accuracy}};
}

}  // namespace

std::string report_to_json(const MetricsReport& r) {
  ordered_json j;
  j["model"] = r.model;
  j["direction"] = r.direction;
  j["source_corpus"] = r.source_corpus;
  j["target_corpus"] = r.target_corpus;
  j["num_classes"] = r.num_classes;
  j["folds_k"] = r.folds_k;
  j["seed"] = r.seed;
  j["lambda"] = r.lambda;
  j["folds"] = ordered_json::array();
  for (const auto& f : r.folds) {
    ordered_json fj;
    fj["fold"] = f.fold;
    fj["oc_accuracy"] = f.oc_accuracy;
    fj["ic_accuracy"] = f.ic_accuracy;
    if (f.oc_rmse >= 0) fj["oc_rmse"] = f.oc_rmse;
    if (f.ic_rmse >= 0) fj["ic_rmse"] = f.ic_rmse;
    fj["transfer_loss"] = f.transfer_loss;
    j["folds"].push_back(std::move(fj));
  }
  j["mean_oc_accuracy"] = r.mean_oc_accuracy;
  j["mean_ic_accuracy"] = r.mean_ic_accuracy;
  if (r.mean_oc_rmse >= 0) j["mean_oc_rmse"] = r.mean_oc_rmse;
  if (r.mean_ic_rmse >= 0) j["mean_ic_rmse"] = r.mean_ic_rmse;
  j["transfer_loss"] = r.transfer_loss;
  if (r.has_transfer_ratio) j["transfer_ratio"] = r.transfer_ratio;
  j["per_length"] = ordered_json::array();
  for (const auto& b : r.per_length) j["per_length"].push_back(bucket_json(b));
  return j.dump(2) + "\n";
}

namespace {

std::string fixed4(double v) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(4);
  ss << v;
  return ss.str();
}

}  // namespace

std::string render_report(const MetricsReport& r) {
  std::ostringstream out;
  out << "model=" << r.model << " direction=" << r.direction << " C=" << r.num_classes
      << " lambda=" << r.lambda << "\n";
  const bool fine = r.mean_oc_rmse >= 0;
  out << "fold  oc_acc   ic_acc   tl";
  if (fine) out << "       oc_rmse  ic_rmse";
  out << "\n";
  for (const auto& f : r.folds) {
    out << f.fold << "     " << fixed4(f.oc_accuracy) << "   " << fixed4(f.ic_accuracy)
        << "   " << fixed4(f.transfer_loss);
    if (fine) out << "   " << fixed4(f.oc_rmse) << "   " << fixed4(f.ic_rmse);
    out << "\n";
  }
  out << "mean  " << fixed4(r.mean_oc_accuracy) << "   " << fixed4(r.mean_ic_accuracy)
      << "   " << fixed4(r.transfer_loss);
  if (fine) out << "   " << fixed4(r.mean_oc_rmse) << "   " << fixed4(r.mean_ic_rmse);
  out << "\n";
  if (r.has_transfer_ratio)
    out << "transfer_ratio " << fixed4(r.transfer_ratio) << "\n";
  if (!r.per_length.empty()) {
    out << "length-bucket accuracy (target test)\n";
    for (const auto& b : r.per_length)
      out << "  [" << b.min_len << "," << b.max_len << "] n=" << b.count << " acc="
          << fixed4(b.accuracy) << "\n";
  }
  return out.str();
}

std::string render_ablation(const std::vector<AblationRow>& rows,
                            const std::string& direction) {
  std::ostringstream out;
  out << "Effect of the training mechanisms (" << direction << ")\n";
  out << "variant        acc      delta-vs-all\n";
  for (const auto& row : rows)
    out << row.variant << std::string(15 - std::min<std::size_t>(14, row.variant.size()), ' ')
        << fixed4(row.accuracy) << "   " << fixed4(row.delta_vs_all) << "\n";
  return out.str();
}

std::string ablation_to_json(const std::vector<AblationRow>& rows,
                             const std::string& direction) {
  ordered_json j;
  j["direction"] = direction;
  j["rows"] = ordered_json::array();
  for (const auto& row : rows)
    j["rows"].push_back(ordered_json{{"variant", row.variant},
                                     {"accuracy", row.accuracy},
                                     {"delta_vs_all", row.delta_vs_all}});
  return j.dump(2) + "\n";
}

}  // namespace clt
