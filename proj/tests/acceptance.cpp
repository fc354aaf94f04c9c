// Acceptance harness. Runs every gate end to end and prints one verdict line
// per criterion; exits nonzero if any gating criterion fails. Criterion 8
// (real-data reproduction) is informational and never gates.
//
// The transfer-suite criteria (3-5) share one set of training runs over a
// seeded synthetic corpus; per-run telemetry lines are printed so a failing
// margin can be diagnosed from the log alone.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "clt/corpus.hpp"
#include "clt/evaluation.hpp"
#include "clt/graph.hpp"
#include "clt/models.hpp"
#include "clt/protocol.hpp"
#include "clt/rng.hpp"
#include "clt/text.hpp"
#include "clt/training.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  int id = 0;
  std::string name;
  bool pass = false;
  bool gating = true;
  bool skipped = false;
  std::string detail;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Criterion 1: the gradient oracle binary.
// ---------------------------------------------------------------------------

Verdict check_gradcheck() {
  Verdict v{1, "gradient oracle"};
  const std::string cmd =
      std::string(CLT_BINARY_PATH) + " gradcheck > acceptance_gradcheck.log 2>&1";
  const auto t0 = Clock::now();
  const int rc = std::system(cmd.c_str());
  const double el = seconds_since(t0);
  const bool ok_exit = rc != -1 && WIFEXITED(rc) && WEXITSTATUS(rc) == 0;
  v.pass = ok_exit && el < 60.0;
  v.detail = std::string("exit ") + (ok_exit ? "0" : "nonzero") + ", " +
             fmt("%.1f", el) + " s (budget 60 s); log in acceptance_gradcheck.log";
  return v;
}

// ---------------------------------------------------------------------------
// Criterion 2: structural identities, 1000 random cases each.
// ---------------------------------------------------------------------------

clt::ModelConfig random_model_config(clt::Rng& rng) {
  clt::ModelConfig mc;
  mc.num_classes = rng.uniform() < 0.5 ? 2 : 5;
  mc.emb_dim = rng.uniform_int(3, 8);
  mc.widths = rng.uniform() < 0.5 ? std::vector<int>{2} : std::vector<int>{2, 3};
  mc.maps_per_width = rng.uniform_int(2, 5);
  mc.attn_dim = rng.uniform_int(2, 6);
  return mc;
}

void randomize_model(clt::Model<double>& m, clt::Rng& rng) {
  for (auto* p : m.parameters())
    for (int i = 0; i < p->size(); ++i) p->value[i] = rng.uniform(-0.5, 0.5);
  for (int j = 0; j < m.cfg.emb_dim; ++j) m.embedding.value.at(0, j) = 0.0;
}

Verdict check_structural_identities() {
  Verdict v{2, "structural identities"};
  const int kCases = 1000;
  double worst_oneseg = 0.0, worst_attn = 0.0, worst_klpp = 0.0;

  // One-segment collapse: a single-segment document must produce exactly the
  // segment prediction in both bag-structured models.
  clt::Rng rng(20240845);
  for (int c = 0; c < kCases; ++c) {
    const auto mc = random_model_config(rng);
    const int vocab = rng.uniform_int(8, 24);
    clt::Bag bag;
    bag.label = 0;
    std::vector<int> seg(std::size_t(rng.uniform_int(1, 10)));
    for (auto& id : seg) id = rng.uniform_int(1, vocab - 1);
    bag.segments.push_back(seg);

    auto bagged = clt::make_model<double>(clt::ModelKind::baggedcnn, mc, vocab, 7);
    randomize_model(bagged, rng);
    {
      clt::Graph<double> g;
      const auto f =
          clt::baggedcnn_forward(g, bagged, bag, 0.0, clt::RunMode::eval, nullptr);
      for (int k = 0; k < mc.num_classes; ++k)
        worst_oneseg = std::max(
            worst_oneseg, std::abs(g.value(f.y_d)[k] - g.value(f.y_s[0])[k]));
    }
    auto letra = clt::make_model<double>(clt::ModelKind::letranets, mc, vocab, 7);
    randomize_model(letra, rng);
    {
      clt::Graph<double> g;
      const auto f =
          clt::letranets_forward(g, letra, bag, 0.0, clt::RunMode::eval, nullptr);
      for (int k = 0; k < mc.num_classes; ++k)
        worst_oneseg = std::max(
            worst_oneseg, std::abs(g.value(f.y_j_d)[k] - g.value(f.y_j_s[0])[k]));
    }
  }

  // Attention weights form a distribution over the segments.
  clt::Rng arng(77002);
  for (int c = 0; c < kCases; ++c) {
    const int dim = arng.uniform_int(2, 8);
    const int nseg = arng.uniform_int(1, 12);
    clt::ModelConfig mc;
    mc.emb_dim = dim;
    mc.widths = {2};
    mc.maps_per_width = dim;  // encoder_dim == widths.size()*maps == dim
    mc.attn_dim = arng.uniform_int(2, 6);
    auto m = clt::make_model<double>(clt::ModelKind::baggedcnn, mc, 4, 7);
    randomize_model(m, arng);
    clt::Graph<double> g;
    std::vector<clt::Graph<double>::Value> segs;
    for (int s = 0; s < nseg; ++s) {
      clt::Tensor<double> t({dim});
      for (int i = 0; i < dim; ++i) t[i] = arng.uniform(-3.0, 3.0);
      segs.push_back(g.leaf(std::move(t)));
    }
    const auto pooled = clt::attention_pool(g, m.attn, std::move(segs));
    double sum = 0.0;
    for (int s = 0; s < nseg; ++s) sum += g.value(pooled.weights)[s];
    worst_attn = std::max(worst_attn, std::abs(sum - 1.0));
  }

  // Gibbs' inequality: KL >= 0 with equality iff the distributions match.
  clt::Rng krng(91250);
  bool kl_ok = true;
  for (int c = 0; c < kCases; ++c) {
    const int dim = krng.uniform_int(2, 8);
    clt::Tensor<double> lp({dim}), lq({dim});
    for (int i = 0; i < dim; ++i) lp[i] = krng.uniform(-8.0, 8.0);
    const auto p = clt::softmax(lp);
    // q perturbs one coordinate of p's logits, so p != q by construction.
    lq = lp;
    lq[krng.uniform_int(0, dim - 1)] += krng.uniform(0.1, 2.0);
    const auto q = clt::softmax(lq);
    if (clt::kl_divergence(p, q) <= 0.0) kl_ok = false;
    if (clt::kl_divergence(q, p) <= 0.0) kl_ok = false;
    worst_klpp = std::max(worst_klpp, std::abs(clt::kl_divergence(p, p)));
  }

  v.pass = worst_oneseg <= 1e-9 && worst_attn <= 1e-9 && kl_ok &&
           worst_klpp <= 1e-12;
  v.detail = "1000 cases each: one-seg diff " + fmt("%.1e", worst_oneseg) +
             " (<=1e-9), attn sum diff " + fmt("%.1e", worst_attn) +
             " (<=1e-9), KL(p,p) " + fmt("%.1e", worst_klpp) +
             " (<=1e-12), KL(p,q)>0 " + (kl_ok ? "held" : "VIOLATED");
  return v;
}

// ---------------------------------------------------------------------------
// Criteria 3-5: the synthetic transfer suite.
// ---------------------------------------------------------------------------

clt::SyntheticConfig suite_corpus_config(std::uint64_t seed) {
  clt::SyntheticConfig s;
  s.vocab_size = 600;
  s.num_classes = 2;
  s.lexicon_size = 60;
  s.injection_rate = 0.5;
  s.noise_rate = 0.06;
  s.long_dilution = 0.5;
  s.concession_rate = 0.25;
  s.short_len_min = 6;
  s.short_len_max = 14;
  s.segs_per_long_min = 4;
  s.segs_per_long_max = 9;
  s.num_short = 2000;
  s.num_long = 2000;
  s.num_unlabeled = 200;
  s.seed = seed;
  return s;
}

clt::ProtocolConfig suite_protocol_config(clt::Direction dir, std::uint64_t seed) {
  clt::ProtocolConfig cfg;
  cfg.direction = dir;
  cfg.k_folds = 2;
  cfg.model.num_classes = 2;
  cfg.model.emb_dim = 16;
  cfg.model.widths = {2, 3};
  cfg.model.maps_per_width = 16;
  cfg.model.attn_dim = 8;
  cfg.train.batch_size = 16;
  cfg.train.max_epochs = 25;
  cfg.train.patience = 4;
  cfg.train.pretrain_epochs = 3;
  cfg.train.dropout = 0.0;
  cfg.train.seed = seed;
  cfg.lambda_grid = {0.1};
  cfg.min_count = 2;
  return cfg;
}

struct SuiteRun {
  std::string label;
  clt::ModelKind kind = clt::ModelKind::cnn;
  clt::Mechanisms mech{true, true, true};
};

struct SuiteResults {
  // Keyed by direction string, then run label; values are means over seeds.
  std::map<std::string, std::map<std::string, double>> acc;
  std::map<std::string, std::map<std::string, double>> tl;
  std::map<std::string, double> ic_by_channel;  // "short" / "long"
  double wall_seconds = 0.0;
  std::string error;
};

SuiteResults run_transfer_suite(const std::vector<std::uint64_t>& seeds) {
  SuiteResults out;
  const auto t0 = Clock::now();
  const std::vector<SuiteRun> runs = {
      {"cnn", clt::ModelKind::cnn, {}},
      {"baggedcnn", clt::ModelKind::baggedcnn, {}},
      {"letranets-all", clt::ModelKind::letranets, {true, true, true}},
      {"letranets-jt", clt::ModelKind::letranets, {true, false, false}},
      {"letranets-pr", clt::ModelKind::letranets, {false, true, false}},
      {"letranets-sp", clt::ModelKind::letranets, {false, false, true}},
  };
  const std::vector<clt::Direction> dirs = {clt::Direction::long_to_short,
                                            clt::Direction::short_to_long};
  std::map<std::string, std::map<std::string, double>> acc_sum, tl_sum;
  std::map<std::string, double> ic_sum;

  try {
    for (const auto seed : seeds) {
      const auto data = clt::gen_synthetic(suite_corpus_config(seed));
      for (const auto dir : dirs) {
        const std::string dname = clt::to_string(dir);
        auto base = suite_protocol_config(dir, seed);
        const auto tic = Clock::now();
        const auto ic = clt::compute_ic_baseline(data.shorts, data.longs, base);
        double ic_acc = 0.0;
        for (const double a : ic.accuracy) ic_acc += a;
        ic_acc /= double(ic.accuracy.size());
        const std::string channel =
            dir == clt::Direction::long_to_short ? "short" : "long";
        ic_sum[channel] += ic_acc;
        std::printf("  . seed %llu %-13s ic-cnn        acc=%.4f            %5.1fs\n",
                    (unsigned long long)seed, dname.c_str(), ic_acc,
                    seconds_since(tic));
        std::fflush(stdout);

        for (const auto& run : runs) {
          auto cfg = base;
          cfg.kind = run.kind;
          cfg.train.mech = run.mech;
          const auto tr = Clock::now();
          const auto report =
              clt::run_transfer_protocol(data.shorts, data.longs, cfg, &ic);
          acc_sum[dname][run.label] += report.mean_oc_accuracy;
          tl_sum[dname][run.label] += report.transfer_loss;
          std::printf(
              "  . seed %llu %-13s %-13s acc=%.4f tl=%7.4f %5.1fs\n",
              (unsigned long long)seed, dname.c_str(), run.label.c_str(),
              report.mean_oc_accuracy, report.transfer_loss, seconds_since(tr));
          std::fflush(stdout);
        }
      }
    }
  } catch (const std::exception& e) {
    out.error = e.what();
    return out;
  }

  const double n = double(seeds.size());
  for (auto& [dname, by_label] : acc_sum)
    for (auto& [label, sum] : by_label) out.acc[dname][label] = sum / n;
  for (auto& [dname, by_label] : tl_sum)
    for (auto& [label, sum] : by_label) out.tl[dname][label] = sum / n;
  for (auto& [channel, sum] : ic_sum) out.ic_by_channel[channel] = sum / n;
  out.wall_seconds = seconds_since(t0);
  return out;
}

Verdict check_synthetic_suite(const SuiteResults& r) {
  Verdict v{3, "synthetic transfer suite"};
  if (!r.error.empty()) {
    v.pass = false;
    v.detail = "suite aborted: " + r.error;
    return v;
  }
  const double ic_short = r.ic_by_channel.at("short");
  const double ic_long = r.ic_by_channel.at("long");
  const double cnn_l2s = r.tl.at("long_to_short").at("cnn");
  const double cnn_s2l = r.tl.at("short_to_long").at("cnn");
  const double lt_l2s = r.tl.at("long_to_short").at("letranets-all");
  const double lt_s2l = r.tl.at("short_to_long").at("letranets-all");
  const bool in_budget = r.wall_seconds < 1800.0;
  v.pass = ic_short >= 0.95 && ic_long >= 0.95 && cnn_l2s > 0.0 &&
           cnn_s2l > 0.0 && lt_l2s < cnn_l2s && lt_s2l < cnn_s2l && in_budget;
  v.detail = "ic short " + fmt("%.4f", ic_short) + ", long " +
             fmt("%.4f", ic_long) + " (>=0.95); cnn tl " + fmt("%.2f", cnn_l2s) +
             "/" + fmt("%.2f", cnn_s2l) + " (>0); letranets tl " +
             fmt("%.2f", lt_l2s) + "/" + fmt("%.2f", lt_s2l) +
             " (< cnn); wall " + fmt("%.0f", r.wall_seconds) + " s (<1800)";
  return v;
}

Verdict check_model_ordering(const SuiteResults& r) {
  Verdict v{4, "model ordering"};
  if (!r.error.empty()) {
    v.pass = false;
    v.detail = "suite aborted: " + r.error;
    return v;
  }
  v.pass = true;
  std::string parts;
  for (const auto dname : {"long_to_short", "short_to_long"}) {
    const double cnn = r.acc.at(dname).at("cnn");
    const double bc = r.acc.at(dname).at("baggedcnn");
    const double lt = r.acc.at(dname).at("letranets-all");
    const bool ordered = lt >= bc && bc >= cnn && (lt - cnn) >= 0.02;
    v.pass = v.pass && ordered;
    parts += std::string(dname) + " lt " + fmt("%.4f", lt) + " >= bagged " +
             fmt("%.4f", bc) + " >= cnn " + fmt("%.4f", cnn) + " (gap " +
             fmt("%.1f", (lt - cnn) * 100.0) + " pts >= 2); ";
  }
  v.detail = parts;
  return v;
}

Verdict check_ablation(const SuiteResults& r) {
  Verdict v{5, "mechanism ablation"};
  if (!r.error.empty()) {
    v.pass = false;
    v.detail = "suite aborted: " + r.error;
    return v;
  }
  // Mean accuracy pooled over seeds and both directions, one row per
  // single-mechanism variant plus the full model.
  const std::vector<std::pair<std::string, std::string>> variants = {
      {"JT", "letranets-jt"},
      {"PR", "letranets-pr"},
      {"SP", "letranets-sp"},
      {"All", "letranets-all"},
  };
  std::map<std::string, double> pooled;
  for (const auto& [row, label] : variants)
    pooled[row] = (r.acc.at("long_to_short").at(label) +
                   r.acc.at("short_to_long").at(label)) /
                  2.0;
  const double all = pooled.at("All");
  v.pass = all >= pooled.at("JT") && all >= pooled.at("PR") &&
           all >= pooled.at("SP");
  v.detail = "All " + fmt("%.4f", all) + " >= JT " + fmt("%.4f", pooled.at("JT")) +
             ", PR " + fmt("%.4f", pooled.at("PR")) + ", SP " +
             fmt("%.4f", pooled.at("SP")) + "; table in acceptance_ablation.txt";

  // Table-4-shaped report: one block per direction plus the pooled block.
  std::ofstream table("acceptance_ablation.txt");
  for (const auto dname : {"long_to_short", "short_to_long"}) {
    std::vector<clt::AblationRow> rows;
    const double dall = r.acc.at(dname).at("letranets-all");
    for (const auto& [row, label] : variants)
      rows.push_back({row, r.acc.at(dname).at(label),
                      dall - r.acc.at(dname).at(label)});
    table << clt::render_ablation(rows, dname) << "\n";
  }
  std::vector<clt::AblationRow> rows;
  for (const auto& [row, label] : variants)
    rows.push_back({row, pooled.at(row), all - pooled.at(row)});
  table << clt::render_ablation(rows, "mean of both directions");
  return v;
}

// ---------------------------------------------------------------------------
// Criterion 6: byte-identical reports.
// ---------------------------------------------------------------------------

Verdict check_determinism() {
  Verdict v{6, "deterministic reports"};
  auto scfg = suite_corpus_config(17);
  scfg.num_short = 400;
  scfg.num_long = 400;
  scfg.num_unlabeled = 60;
  const auto data = clt::gen_synthetic(scfg);
  auto cfg = suite_protocol_config(clt::Direction::long_to_short, 17);
  cfg.train.max_epochs = 6;
  cfg.train.patience = 2;
  const auto first =
      clt::report_to_json(clt::run_transfer_protocol(data.shorts, data.longs, cfg));
  const auto second =
      clt::report_to_json(clt::run_transfer_protocol(data.shorts, data.longs, cfg));
  v.pass = first == second && !first.empty();
  v.detail = v.pass ? "two runs serialized to identical bytes (" +
                          std::to_string(first.size()) + " bytes)"
                    : "serialized reports differ";
  return v;
}

// ---------------------------------------------------------------------------
// Criterion 7: hand-arithmetic metric cases, exact.
// ---------------------------------------------------------------------------

Verdict check_metric_arithmetic() {
  Verdict v{7, "metric hand arithmetic"};
  const double tl = clt::transfer_loss(0.300, 0.258);
  const double tr = clt::transfer_ratio({0.2, 0.3}, {0.25, 0.25});
  v.pass = tl == 4.2 && tr == 1.0;
  v.detail = "transfer_loss(0.300,0.258) = " + fmt("%.17g", tl) +
             " (== 4.2); transfer_ratio = " + fmt("%.17g", tr) + " (== 1.0)";
  return v;
}

// ---------------------------------------------------------------------------
// Criterion 8 (optional): reproduction on the original corpora.
// ---------------------------------------------------------------------------

Verdict check_reproduction() {
  Verdict v{8, "real-data reproduction"};
  v.gating = false;
  const char* dir = std::getenv("CLT_REAL_DATA_DIR");
  if (dir == nullptr) {
    v.skipped = true;
    v.detail = "set CLT_REAL_DATA_DIR to a directory with short.tsv/long.tsv "
               "(and optionally CLT_REAL_EMBEDDINGS) to run";
    return v;
  }
  try {
    const auto shorts = clt::load_corpus(std::string(dir) + "/short.tsv",
                                         clt::Channel::short_text, 2);
    const auto longs = clt::load_corpus(std::string(dir) + "/long.tsv",
                                        clt::Channel::long_text, 2);
    clt::ProtocolConfig cfg;
    cfg.kind = clt::ModelKind::letranets;
    cfg.k_folds = 5;
    cfg.train.seed = 1;
    if (const char* emb = std::getenv("CLT_REAL_EMBEDDINGS"))
      cfg.embeddings_path = emb;

    cfg.direction = clt::Direction::long_to_short;
    const auto l2s = clt::run_transfer_protocol(shorts, longs, cfg);
    cfg.direction = clt::Direction::short_to_long;
    const auto s2l = clt::run_transfer_protocol(shorts, longs, cfg);

    const bool acc_ok = std::abs(l2s.mean_oc_accuracy - 0.795) <= 0.03 &&
                        std::abs(s2l.mean_oc_accuracy - 0.810) <= 0.03;
    const bool tr_ok =
        (!l2s.has_transfer_ratio || l2s.transfer_ratio < 1.1) &&
        (!s2l.has_transfer_ratio || s2l.transfer_ratio < 1.1);
    v.pass = acc_ok && tr_ok;
    v.detail = "long->short acc " + fmt("%.4f", l2s.mean_oc_accuracy) +
               " (target 0.795+-0.03), short->long acc " +
               fmt("%.4f", s2l.mean_oc_accuracy) + " (target 0.810+-0.03)";
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail = std::string("aborted: ") + e.what();
  }
  return v;
}

}  // namespace

int main() {
  std::printf("== acceptance run ==\n");
  std::fflush(stdout);

  std::vector<Verdict> verdicts;
  verdicts.push_back(check_metric_arithmetic());
  verdicts.push_back(check_structural_identities());
  verdicts.push_back(check_determinism());
  verdicts.push_back(check_gradcheck());

  std::printf("-- synthetic transfer suite (seeds 1,2,3; both directions) --\n");
  std::fflush(stdout);
  const auto suite = run_transfer_suite({1, 2, 3});
  verdicts.push_back(check_synthetic_suite(suite));
  verdicts.push_back(check_model_ordering(suite));
  verdicts.push_back(check_ablation(suite));
  verdicts.push_back(check_reproduction());

  std::sort(verdicts.begin(), verdicts.end(),
            [](const Verdict& a, const Verdict& b) { return a.id < b.id; });

  std::printf("-- verdicts --\n");
  bool all_pass = true;
  for (const auto& v : verdicts) {
    const char* status = v.skipped ? "SKIP" : (v.pass ? "PASS" : "FAIL");
    std::printf("[%d] %-26s %-4s %s%s\n", v.id, v.name.c_str(), status,
                v.detail.c_str(), v.gating ? "" : " [non-gating]");
    if (v.gating && !v.skipped && !v.pass) all_pass = false;
  }
  std::printf("ACCEPTANCE: %s\n", all_pass ? "PASS" : "FAIL");
  return all_pass ? 0 : 1;
}
