#include "clt/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "clt/rng.hpp"

namespace clt {

std::string to_string(Channel c) {
  return c == Channel::short_text ? "short" : "long";
}

Corpus load_corpus(const std::string& path, Channel channel, int num_classes,
                   bool labels_one_based) {
  if (num_classes < 2) throw ContractViolation("load_corpus: num_classes must be >= 2");
  std::ifstream in(path);
  if (!in) throw DataError("load_corpus: cannot open " + path);

  Corpus corpus;
  corpus.name = path;
  corpus.channel = channel;
  corpus.num_classes = num_classes;

  std::string line;
  int line_no = 0;
  int blank = 0;
  int empty_text = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      ++blank;
      continue;
    }
    if (line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(path + ":" + std::to_string(line_no) + ": missing TAB separator");
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(line.substr(0, tab), &used);
      if (used != tab) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": label is not an integer");
    }
    if (labels_one_based) label -= 1;
    if (label < 0 || label >= num_classes)
      throw DataError(path + ":" + std::to_string(line_no) + ": label " +
                      std::to_string(labels_one_based ? label + 1 : label) +
                      " outside the declared " + std::to_string(num_classes) +
                      "-class range");
    TextRecord rec;
    rec.label = label;
    rec.tokens = tokenize(line.substr(tab + 1));
    if (rec.tokens.empty()) {
      ++empty_text;
      continue;
    }
    corpus.records.push_back(std::move(rec));
  }
  if (blank > 0)
    std::cerr << "load_corpus: skipped " << blank << " blank line(s) in " << path << "\n";
  if (empty_text > 0)
    std::cerr << "load_corpus: skipped " << empty_text << " empty-text record(s) in "
              << path << "\n";
  return corpus;
}

std::vector<std::vector<std::string>> load_unlabeled(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_unlabeled: cannot open " + path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto tokens = tokenize(line);
    if (!tokens.empty()) out.push_back(std::move(tokens));
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_corpus: cannot open " + path + " for writing");
  for (const auto& rec : corpus.records) {
    out << rec.label << '\t';
    for (std::size_t i = 0; i < rec.tokens.size(); ++i) {
      if (i) out << ' ';
      out << rec.tokens[i];
    }
    out << '\n';
  }
  if (!out) throw DataError("save_corpus: write failed for " + path);
}

FoldPlan make_fold_plan(int n, int k, std::uint64_t seed) {
  if (k < 2) throw ContractViolation("make_fold_plan: need k >= 2");
  if (n < k) throw ContractViolation("make_fold_plan: need at least k instances");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "fold.shuffle"));
  rng.shuffle(order);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignment.assign(std::size_t(n), 0);
  const int base = n / k;
  const int rem = n % k;
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    const int size = base + (f < rem ? 1 : 0);
    for (int i = 0; i < size; ++i) plan.assignment[std::size_t(order[std::size_t(pos++)])] = f;
  }
  return plan;
}

std::vector<FoldSplit> kfold_split(const FoldPlan& plan) {
  const int n = static_cast<int>(plan.assignment.size());
  std::vector<FoldSplit> splits(std::size_t(plan.k));
  for (int f = 0; f < plan.k; ++f) {
    std::vector<int> rest;
    for (int i = 0; i < n; ++i) {
      if (plan.assignment[std::size_t(i)] == f)
        splits[std::size_t(f)].test.push_back(i);
      else
        rest.push_back(i);
    }
    Rng rng(derive_seed(plan.seed, "fold.dev", std::uint64_t(f)));
    rng.shuffle(rest);
    const int dev_size = std::max(1, static_cast<int>(rest.size()) / 10);
    splits[std::size_t(f)].dev.assign(rest.begin(), rest.begin() + dev_size);
    splits[std::size_t(f)].train.assign(rest.begin() + dev_size, rest.end());
  }
  return splits;
}

namespace {

constexpr const char* kConcessionMarker = "yet";

struct Lexicons {
  std::vector<std::string> pos;
  std::vector<std::string> neg;
  std::vector<std::string> filler;
};

Lexicons make_lexicons(const SyntheticConfig& cfg) {
  if (cfg.vocab_size <= 2 * cfg.lexicon_size + 10)
    throw ContractViolation("gen_synthetic: vocab_size too small for the lexicons");
  Lexicons lex;
  for (int i = 0; i < cfg.lexicon_size; ++i) {
    lex.pos.push_back("pos" + std::to_string(i));
    lex.neg.push_back("neg" + std::to_string(i));
  }
  const int filler = cfg.vocab_size - 2 * cfg.lexicon_size;
  for (int i = 0; i < filler; ++i) lex.filler.push_back("w" + std::to_string(i));
  return lex;
}

// Polarity (probability a sentiment word is positive) and injection-rate
// multiplier per class.
void class_profile(int label, int num_classes, double* pos_prob, double* band) {
  if (num_classes == 2) {
    *pos_prob = label == 1 ? 1.0 : 0.0;
    *band = 1.0;
    return;
  }
  if (num_classes != 5)
    throw ContractViolation("gen_synthetic: num_classes must be 2 or 5");
  switch (label) {
    case 0: *pos_prob = 0.0; *band = 1.0; break;
    case 1: *pos_prob = 0.0; *band = 0.5; break;
    case 2: *pos_prob = 0.5; *band = 0.25; break;
    case 3: *pos_prob = 1.0; *band = 0.5; break;
    default: *pos_prob = 1.0; *band = 1.0; break;
  }
}

std::vector<std::string> gen_short_tokens(const SyntheticConfig& cfg,
                                          const Lexicons& lex, int label,
                                          double injection, Rng& rng,
                                          bool concession = false) {
  double pos_prob = 0, band = 0;
  class_profile(label, cfg.num_classes, &pos_prob, &band);
  const int len = rng.uniform_int(cfg.short_len_min, cfg.short_len_max);
  std::vector<std::string> tokens;
  tokens.reserve(std::size_t(len) + 1);
  for (int i = 0; i < len; ++i) {
    if (rng.uniform() < injection * band) {
      bool positive = rng.uniform() < pos_prob;
      if (rng.uniform() < cfg.noise_rate) positive = !positive;
      if (concession) {
        // The marker inverts the word that follows, so the surface polarity
        // flips while the encoded label stays the same.
        tokens.push_back(kConcessionMarker);
        positive = !positive;
      }
      const auto& pool = positive ? lex.pos : lex.neg;
      tokens.push_back(pool[std::size_t(rng.uniform_int(0, int(pool.size()) - 1))]);
    } else {
      tokens.push_back(
          lex.filler[std::size_t(rng.uniform_int(0, int(lex.filler.size()) - 1))]);
    }
  }
  tokens.push_back(".");
  return tokens;
}

std::vector<int> balanced_labels(int n, int num_classes, Rng& rng) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[std::size_t(i)] = i % num_classes;
  rng.shuffle(labels);
  return labels;
}

}  // namespace

SyntheticData gen_synthetic(const SyntheticConfig& cfg) {
  if (cfg.lexicon_size < 1 || cfg.num_short < 1 || cfg.num_long < 1)
    throw ContractViolation("gen_synthetic: degenerate config");
  if (cfg.short_len_min < 1 || cfg.short_len_min > cfg.short_len_max ||
      cfg.segs_per_long_min < 1 || cfg.segs_per_long_min > cfg.segs_per_long_max)
    throw ContractViolation("gen_synthetic: invalid ranges");
  if (cfg.injection_rate < 0 || cfg.injection_rate > 1 || cfg.noise_rate < 0 ||
      cfg.noise_rate > 1 || cfg.long_dilution <= 0 || cfg.long_dilution > 1 ||
      cfg.concession_rate < 0 || cfg.concession_rate > 1)
    throw ContractViolation("gen_synthetic: rates must be within [0,1]");

  const Lexicons lex = make_lexicons(cfg);
  SyntheticData data;
  data.shorts.name = "synthetic-short";
  data.shorts.channel = Channel::short_text;
  data.shorts.num_classes = cfg.num_classes;
  data.longs.name = "synthetic-long";
  data.longs.channel = Channel::long_text;
  data.longs.num_classes = cfg.num_classes;

  {
    Rng rng(derive_seed(cfg.seed, "synthetic.short"));
    for (int label : balanced_labels(cfg.num_short, cfg.num_classes, rng))
      data.shorts.records.push_back(
          {gen_short_tokens(cfg, lex, label, cfg.injection_rate, rng), label});
  }
  {
    Rng rng(derive_seed(cfg.seed, "synthetic.long"));
    for (int label : balanced_labels(cfg.num_long, cfg.num_classes, rng)) {
      const int k = rng.uniform_int(cfg.segs_per_long_min, cfg.segs_per_long_max);
      TextRecord rec;
      rec.label = label;
      for (int s = 0; s < k; ++s) {
        const bool concede = s > 0 && rng.uniform() < cfg.concession_rate;
        auto seg = gen_short_tokens(cfg, lex, label,
                                    cfg.injection_rate * cfg.long_dilution, rng,
                                    concede);
        rec.tokens.insert(rec.tokens.end(), seg.begin(), seg.end());
      }
      data.longs.records.push_back(std::move(rec));
      data.long_segment_counts.push_back(k);
    }
  }
  {
    Rng rng(derive_seed(cfg.seed, "synthetic.unlabeled.short"));
    for (int label : balanced_labels(cfg.num_unlabeled, cfg.num_classes, rng))
      data.shorts.unlabeled.push_back(
          gen_short_tokens(cfg, lex, label, cfg.injection_rate, rng));
  }
  {
    Rng rng(derive_seed(cfg.seed, "synthetic.unlabeled.long"));
    for (int label : balanced_labels(cfg.num_unlabeled, cfg.num_classes, rng)) {
      const int k = rng.uniform_int(cfg.segs_per_long_min, cfg.segs_per_long_max);
      std::vector<std::string> tokens;
      for (int s = 0; s < k; ++s) {
        const bool concede = s > 0 && rng.uniform() < cfg.concession_rate;
        auto seg = gen_short_tokens(cfg, lex, label,
                                    cfg.injection_rate * cfg.long_dilution, rng,
                                    concede);
        tokens.insert(tokens.end(), seg.begin(), seg.end());
      }
      data.longs.unlabeled.push_back(std::move(tokens));
    }
  }
  return data;
}

}  // namespace clt
