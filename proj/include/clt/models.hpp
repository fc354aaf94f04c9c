#pragma once
// The three architectures as parameter sets plus graph-building forwards.
// All of them share one embedding table; LeTraNets owns two encoders
// (CNN_lone over the raw document, CNN_bag per segment) and three heads
// (l, b, and the joint head over the concatenated encodings).

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "clt/common.hpp"
#include "clt/embeddings.hpp"
#include "clt/graph.hpp"
#include "clt/instance.hpp"
#include "clt/ops.hpp"
#include "clt/rng.hpp"
#include "clt/tensor.hpp"
#include "clt/text.hpp"

namespace clt {

enum class ModelKind { cnn, baggedcnn, letranets };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct ModelConfig {
  int num_classes = 2;
  int emb_dim = 300;
  std::vector<int> widths = {3, 4, 5};
  int maps_per_width = 100;
  int attn_dim = 100;

  int encoder_dim() const { return static_cast<int>(widths.size()) * maps_per_width; }
};

template <typename Scalar>
struct CnnEncoder {
  std::vector<ConvLayer<Scalar>> banks;

  CnnEncoder() = default;
  CnnEncoder(const std::string& prefix, const ModelConfig& cfg) {
    for (int w : cfg.widths)
      banks.emplace_back(prefix + ".w" + std::to_string(w), w, cfg.maps_per_width,
                         cfg.emb_dim);
  }

  bool active() const { return !banks.empty(); }
  int max_width() const {
    int m = 1;
    for (const auto& b : banks) m = std::max(m, b.width);
    return m;
  }
  void collect(std::vector<Parameter<Scalar>*>& out) {
    for (auto& b : banks) {
      out.push_back(&b.filters);
      out.push_back(&b.bias);
    }
  }
};

template <typename Scalar>
struct Attention {
  Parameter<Scalar> w, b, v;

  Attention() = default;
  Attention(const std::string& prefix, const ModelConfig& cfg)
      : w(prefix + ".w", {cfg.attn_dim, cfg.encoder_dim()}),
        b(prefix + ".b", {cfg.attn_dim}),
        v(prefix + ".v", {cfg.attn_dim}) {}

  bool active() const { return w.size() > 0; }
};

template <typename Scalar>
struct Head {
  Parameter<Scalar> w, b;

  Head() = default;
  Head(const std::string& prefix, int num_classes, int in_dim)
      : w(prefix + ".w", {num_classes, in_dim}), b(prefix + ".b", {num_classes}) {}

  bool active() const { return w.size() > 0; }
};

template <typename Scalar>
struct Model {
  ModelKind kind = ModelKind::cnn;
  ModelConfig cfg;
  Parameter<Scalar> embedding;  // [V x E]
  CnnEncoder<Scalar> lone;
  CnnEncoder<Scalar> bag;
  Attention<Scalar> attn;
  Head<Scalar> head_l, head_b, head_j;

  int vocab_size() const { return embedding.value.rows(); }

  // Active parameters in declared (checkpoint) order.
  std::vector<Parameter<Scalar>*> parameters() {
    std::vector<Parameter<Scalar>*> out;
    out.push_back(&embedding);
    lone.collect(out);
    bag.collect(out);
    if (attn.active()) {
      out.push_back(&attn.w);
      out.push_back(&attn.b);
      out.push_back(&attn.v);
    }
    for (Head<Scalar>* h : {&head_l, &head_b, &head_j})
      if (h->active()) {
        out.push_back(&h->w);
        out.push_back(&h->b);
      }
    return out;
  }

  // Classifier weight matrices, the only parameters under the max-norm rule.
  std::vector<Parameter<Scalar>*> head_weights() {
    std::vector<Parameter<Scalar>*> out;
    for (Head<Scalar>* h : {&head_l, &head_b, &head_j})
      if (h->active()) out.push_back(&h->w);
    return out;
  }

  long long param_count() {
    long long n = 0;
    for (auto* p : parameters()) n += p->size();
    return n;
  }
};

// Glorot-uniform fill with a stream derived from the parameter name, so
// initialization is independent of construction order.
template <typename Scalar>
void glorot_init(Parameter<Scalar>& p, int fan_in, int fan_out, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init", fnv1a64(p.name)));
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  for (int i = 0; i < p.size(); ++i)
    p.value[i] = static_cast<Scalar>(rng.uniform(-limit, limit));
}

// Heads and biases start at zero (so fresh models predict uniformly); filters
// and attention use Glorot; the embedding is uniform(-0.25,0.25) with a zero
// PAD row unless a pretrained table is supplied.
template <typename Scalar>
Model<Scalar> make_model(ModelKind kind, const ModelConfig& cfg, int vocab_size,
                         std::uint64_t seed, const Tensor<Scalar>* pretrained = nullptr) {
  if (vocab_size < 2) throw ContractViolation("make_model: vocabulary too small");
  Model<Scalar> m;
  m.kind = kind;
  m.cfg = cfg;

  m.embedding = Parameter<Scalar>("embedding", {vocab_size, cfg.emb_dim});
  if (pretrained) {
    if (!(pretrained->rows() == vocab_size && pretrained->cols() == cfg.emb_dim))
      throw ContractViolation("make_model: pretrained embedding shape mismatch");
    m.embedding.value = *pretrained;
  } else {
    m.embedding.value = random_embeddings<Scalar>(vocab_size, cfg.emb_dim, seed);
  }

  const int d = cfg.encoder_dim();
  const bool wants_lone = kind != ModelKind::baggedcnn;
  const bool wants_bag = kind != ModelKind::cnn;
  if (wants_lone) m.lone = CnnEncoder<Scalar>("lone", cfg);
  if (wants_bag) {
    m.bag = CnnEncoder<Scalar>("bag", cfg);
    m.attn = Attention<Scalar>("attn", cfg);
  }
  if (wants_lone) m.head_l = Head<Scalar>("head_l", cfg.num_classes, d);
  if (wants_bag) m.head_b = Head<Scalar>("head_b", cfg.num_classes, d);
  if (kind == ModelKind::letranets)
    m.head_j = Head<Scalar>("head_j", cfg.num_classes, 2 * d);

  for (CnnEncoder<Scalar>* enc : {&m.lone, &m.bag})
    for (auto& bank : enc->banks)
      glorot_init(bank.filters, bank.width * cfg.emb_dim, cfg.maps_per_width, seed);
  if (m.attn.active()) {
    glorot_init(m.attn.w, d, cfg.attn_dim, seed);
    glorot_init(m.attn.v, cfg.attn_dim, 1, seed);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Graph-building forwards
// ---------------------------------------------------------------------------

template <typename Scalar>
typename Graph<Scalar>::Value encode_tokens(Graph<Scalar>& g, Model<Scalar>& m,
                                            CnnEncoder<Scalar>& enc,
                                            const std::vector<int>& ids) {
  if (ids.empty()) throw ContractViolation("encode_tokens: empty token list");
  if (!enc.active()) throw ContractViolation("encode_tokens: encoder not active");
  const int real_len = static_cast<int>(ids.size());
  std::vector<int> padded = ids;
  while (static_cast<int>(padded.size()) < enc.max_width())
    padded.push_back(Vocabulary::kPad);
  const auto emb = embed(g, std::move(padded), m.embedding, Vocabulary::kPad);
  return conv1d_maxpool(g, emb, enc.banks, real_len);
}

// softmax(W . dropout(x) + b)
template <typename Scalar>
typename Graph<Scalar>::Value apply_head(Graph<Scalar>& g, Head<Scalar>& head,
                                         typename Graph<Scalar>::Value x,
                                         double dropout_rate, RunMode mode, Rng* rng) {
  const auto dropped = dropout_node(g, x, dropout_rate, mode, rng);
  return softmax_node(g, affine(g, head.w, dropped, head.b));
}

template <typename Scalar>
struct AttentionPooled {
  typename Graph<Scalar>::Value d;
  typename Graph<Scalar>::Value weights;
};

template <typename Scalar>
AttentionPooled<Scalar> attention_pool(Graph<Scalar>& g, Attention<Scalar>& attn,
                                       std::vector<typename Graph<Scalar>::Value> segs) {
  if (segs.empty()) throw ContractViolation("attention_pool: no segment vectors");
  std::vector<typename Graph<Scalar>::Value> scores;
  scores.reserve(segs.size());
  for (auto s : segs)
    scores.push_back(dot_param(g, attn.v, tanh_node(g, affine(g, attn.w, s, attn.b))));
  const auto weights = softmax_node(g, stack_scalars(g, std::move(scores)));
  const auto d = weighted_sum(g, std::move(segs), weights);
  return {d, weights};
}

template <typename Scalar>
typename Graph<Scalar>::Value cnn_classify(Graph<Scalar>& g, Model<Scalar>& m,
                                           const std::vector<int>& ids,
                                           double dropout_rate, RunMode mode,
                                           Rng* rng) {
  return apply_head(g, m.head_l, encode_tokens(g, m, m.lone, ids), dropout_rate, mode,
                    rng);
}

template <typename Scalar>
struct BaggedForward {
  typename Graph<Scalar>::Value y_d;
  std::vector<typename Graph<Scalar>::Value> y_s;
  typename Graph<Scalar>::Value weights;
};

template <typename Scalar>
BaggedForward<Scalar> baggedcnn_forward(Graph<Scalar>& g, Model<Scalar>& m,
                                        const Bag& bag, double dropout_rate,
                                        RunMode mode, Rng* rng) {
  if (bag.segments.empty()) throw ContractViolation("baggedcnn_forward: empty bag");
  std::vector<typename Graph<Scalar>::Value> segs;
  segs.reserve(bag.segments.size());
  for (const auto& s : bag.segments) segs.push_back(encode_tokens(g, m, m.bag, s));

  BaggedForward<Scalar> out;
  // Both document and segment predictions go through the one shared head.
  for (auto s : segs)
    out.y_s.push_back(apply_head(g, m.head_b, s, dropout_rate, mode, rng));
  const auto pooled = attention_pool(g, m.attn, std::move(segs));
  out.weights = pooled.weights;
  out.y_d = apply_head(g, m.head_b, pooled.d, dropout_rate, mode, rng);
  return out;
}

template <typename Scalar>
struct LetraForward {
  typename Graph<Scalar>::Value d_l, d_b;
  std::vector<typename Graph<Scalar>::Value> s_l, s_b;
  typename Graph<Scalar>::Value y_l_d, y_b_d, y_j_d;
  std::vector<typename Graph<Scalar>::Value> y_l_s, y_b_s, y_j_s;
  typename Graph<Scalar>::Value weights;
};

template <typename Scalar>
LetraForward<Scalar> letranets_forward(Graph<Scalar>& g, Model<Scalar>& m,
                                       const Bag& bag, double dropout_rate,
                                       RunMode mode, Rng* rng) {
  if (bag.segments.empty()) throw ContractViolation("letranets_forward: empty bag");
  LetraForward<Scalar> out;
  out.d_l = encode_tokens(g, m, m.lone, bag.concat_ids());
  for (const auto& s : bag.segments) {
    out.s_l.push_back(encode_tokens(g, m, m.lone, s));
    out.s_b.push_back(encode_tokens(g, m, m.bag, s));
  }
  const auto pooled = attention_pool(g, m.attn, out.s_b);
  out.d_b = pooled.d;
  out.weights = pooled.weights;

  out.y_l_d = apply_head(g, m.head_l, out.d_l, dropout_rate, mode, rng);
  out.y_b_d = apply_head(g, m.head_b, out.d_b, dropout_rate, mode, rng);
  out.y_j_d = apply_head(g, m.head_j, concat2(g, out.d_l, out.d_b), dropout_rate, mode,
                         rng);
  for (std::size_t i = 0; i < bag.segments.size(); ++i) {
    out.y_l_s.push_back(apply_head(g, m.head_l, out.s_l[i], dropout_rate, mode, rng));
    out.y_b_s.push_back(apply_head(g, m.head_b, out.s_b[i], dropout_rate, mode, rng));
    out.y_j_s.push_back(apply_head(g, m.head_j, concat2(g, out.s_l[i], out.s_b[i]),
                                   dropout_rate, mode, rng));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

// Test-time distribution on one (possibly one-segment) bag. LeTraNets uses
// the joint head; when the joint head was never trained (JT ablated), the
// stronger path for the transfer direction stands in: b for long-to-short,
// l for short-to-long.
template <typename Scalar>
Tensor<Scalar> predict_dist(Model<Scalar>& m, const Bag& bag, Direction dir,
                            bool use_joint = true) {
  Graph<Scalar> g;
  switch (m.kind) {
    case ModelKind::cnn:
      return g.value(cnn_classify(g, m, bag.concat_ids(), 0.0, RunMode::eval, nullptr));
    case ModelKind::baggedcnn:
      return g.value(baggedcnn_forward(g, m, bag, 0.0, RunMode::eval, nullptr).y_d);
    case ModelKind::letranets: {
      const auto f = letranets_forward(g, m, bag, 0.0, RunMode::eval, nullptr);
      if (use_joint) return g.value(f.y_j_d);
      return g.value(dir == Direction::long_to_short ? f.y_b_d : f.y_l_d);
    }
  }
  throw ContractViolation("predict_dist: unknown model kind");
}

template <typename Scalar>
int predict(Model<Scalar>& m, const Bag& bag, Direction dir, bool use_joint = true) {
  return argmax_class(predict_dist(m, bag, dir, use_joint));
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_model(Model<Real>& m, const std::string& path);
Model<Real> load_model(const std::string& path);

long long expected_param_count(ModelKind kind, const ModelConfig& cfg, int vocab_size);

}  // namespace clt
