#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clt/common.hpp"
#include "clt/instance.hpp"
#include "clt/text.hpp"

namespace clt {

enum class Channel { short_text, long_text };

std::string to_string(Channel c);

// One tokenized text with its gold label, before vocabulary encoding.
struct TextRecord {
  std::vector<std::string> tokens;
  int label = kNoLabel;
};

struct Corpus {
  std::string name;
  Channel channel = Channel::short_text;
  int num_classes = 2;
  std::vector<TextRecord> records;
  std::vector<std::vector<std::string>> unlabeled;

  int size() const { return static_cast<int>(records.size()); }
};

// File format: `label<TAB>text`, UTF-8, one record per line. Lines starting
// with '#' are comments; blank lines are skipped (a count is reported to
// stderr). labels_one_based shifts 1..C to 0..C-1 at load time.
Corpus load_corpus(const std::string& path, Channel channel, int num_classes,
                   bool labels_one_based = false);

// One raw text per line, '#' comments and blank lines skipped.
std::vector<std::vector<std::string>> load_unlabeled(const std::string& path);

void save_corpus(const Corpus& corpus, const std::string& path);

// ---------------------------------------------------------------------------
// Cross-validation splits
// ---------------------------------------------------------------------------

struct FoldPlan {
  int k = 5;
  std::uint64_t seed = 0;
  std::vector<int> assignment;  // instance index -> fold id
};

struct FoldSplit {
  std::vector<int> train;
  std::vector<int> dev;
  std::vector<int> test;
};

FoldPlan make_fold_plan(int n, int k, std::uint64_t seed);

// For each fold f: test = fold f, dev = 10% of the remainder (at least one
// instance), train = the rest. All selections derive from plan.seed.
std::vector<FoldSplit> kfold_split(const FoldPlan& plan);

// ---------------------------------------------------------------------------
// Synthetic CLT corpus generator
// ---------------------------------------------------------------------------

struct SyntheticConfig {
  int vocab_size = 600;       // filler + sentiment lexicons
  int num_classes = 2;
  int lexicon_size = 60;      // per polarity
  double injection_rate = 0.35;   // sentiment-word density in a short text
  double noise_rate = 0.08;       // chance an injected word flips polarity
  double long_dilution = 0.45;    // injection multiplier inside long texts
  double concession_rate = 0.0;   // chance a non-leading long segment concedes
  int short_len_min = 6;
  int short_len_max = 14;
  int segs_per_long_min = 4;
  int segs_per_long_max = 9;
  int num_short = 2000;
  int num_long = 2000;
  int num_unlabeled = 400;    // per channel
  std::uint64_t seed = 1;
};

struct SyntheticData {
  Corpus shorts;
  Corpus longs;
  std::vector<int> long_segment_counts;  // constituents per long record
};

// Short texts mix filler words with same-polarity sentiment words at the
// injection rate; long texts concatenate several shorts of one label (each
// ending with '.'), generated at a diluted injection rate so the signal is
// spread across segments. Injected words flip polarity at the noise rate, so
// contamination accumulates with length. For C=5 the polarity encodes the
// side (0,1 negative; 3,4 positive; 2 mixed) and the injection band encodes
// the intensity, so the class stays recoverable from sentiment-word density.
//
// Long texts additionally model contrastive discourse: with probability
// concession_rate, a non-leading segment is a concession, carrying words of
// the opposite polarity each preceded by the marker token "yet". The marker
// inverts the word, so the segment still encodes the document label, but a
// reader who has only ever seen short texts (which never contain the marker)
// misreads it. This is what makes the long channel genuinely harder for
// short-trained models rather than just more verbose.
SyntheticData gen_synthetic(const SyntheticConfig& cfg);

}  // namespace clt
