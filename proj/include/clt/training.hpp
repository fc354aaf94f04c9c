#pragma once
// Loss assembly for the three architectures, the JT/PR/SP training
// mechanisms, and the batched Adadelta training loop with early stopping.
//
// All labeled items are represented as Bags: a short text is a one-segment
// bag carrying its label. Direction decides the loss shape. For long-to-short
// the source items are segmented documents and the document losses apply; for
// short-to-long the items are shorts and the segment losses apply, with a
// pseudo-long assembled from each batch to carry the PR term.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "clt/common.hpp"
#include "clt/corpus.hpp"
#include "clt/graph.hpp"
#include "clt/instance.hpp"
#include "clt/models.hpp"
#include "clt/ops.hpp"
#include "clt/optim.hpp"
#include "clt/rng.hpp"
#include "clt/tensor.hpp"
#include "clt/text.hpp"

namespace clt {

struct Mechanisms {
  bool jt = true;
  bool pr = true;
  bool sp = true;
};

struct TrainConfig {
  Direction direction = Direction::long_to_short;
  double lambda = 0.1;
  int batch_size = 32;
  int max_epochs = 20;
  int patience = 3;
  int pretrain_epochs = 3;
  double dropout = 0.5;
  double max_norm = 3.0;
  double rho = 0.95;
  double adadelta_eps = 1e-6;
  int pseudo_k_min = 3;
  int pseudo_k_max = 10;
  std::uint64_t seed = 1;
  Mechanisms mech;
};

struct EpochStats {
  std::string phase;  // sp1 | sp2 | sp3 | full
  int epoch = 0;
  double loss_l = 0, loss_b = 0, loss_j = 0, reg = 0, total = 0;
  double dev_accuracy = 0;
  double wall_seconds = 0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int selected_epoch = -1;  // index into the full phase
  double best_dev_accuracy = 0;
  double lambda = 0;
  bool diverged = false;
  std::string divergence_note;
};

using EpochLogger = std::function<void(const EpochStats&)>;

// Which loss terms are live; SP stages narrow this, the full phase follows
// the mechanism switches.
struct PhaseSpec {
  std::string name = "full";
  bool use_l = true;
  bool use_b = true;
  bool use_j = true;
  bool use_pr = true;
};

template <typename Scalar>
struct LossBuild {
  typename Graph<Scalar>::Value node;  // scalar root for backward
  double l = 0, b = 0, j = 0, reg = 0;
};

// L_d = L^l_d + L^b_d + L^j_d + lambda * sum_i KL(y^b_si || y^l_si), with the
// bag-side reference detached (the stronger classifier for long-to-short).
// The reference is read from the current forward pass by default; pr_refs
// pins it to caller-supplied constants, which is what a finite-difference
// probe of this loss needs (detachment makes the reference data, not a
// function of the parameters).
template <typename Scalar>
LossBuild<Scalar> loss_long(Graph<Scalar>& g, Model<Scalar>& m, const Bag& bag,
                            double lambda, const PhaseSpec& phase, double dropout_rate,
                            RunMode mode, Rng* rng,
                            const std::vector<Tensor<Scalar>>* pr_refs = nullptr) {
  if (!bag.has_label()) throw ContractViolation("loss_long: bag has no document label");
  const auto f = letranets_forward(g, m, bag, dropout_rate, mode, rng);
  LossBuild<Scalar> out;
  std::vector<typename Graph<Scalar>::Value> terms;
  if (phase.use_l) {
    terms.push_back(cross_entropy_node(g, f.y_l_d, bag.label));
    out.l = double(g.scalar(terms.back()));
  }
  if (phase.use_b) {
    terms.push_back(cross_entropy_node(g, f.y_b_d, bag.label));
    out.b = double(g.scalar(terms.back()));
  }
  if (phase.use_j) {
    terms.push_back(cross_entropy_node(g, f.y_j_d, bag.label));
    out.j = double(g.scalar(terms.back()));
  }
  if (phase.use_pr && lambda > 0) {
    if (pr_refs && pr_refs->size() != f.y_l_s.size())
      throw ContractViolation("loss_long: pr_refs size mismatch");
    std::vector<typename Graph<Scalar>::Value> kls;
    for (std::size_t i = 0; i < f.y_l_s.size(); ++i) {
      const Tensor<Scalar>& ref = pr_refs ? (*pr_refs)[i] : g.value(f.y_b_s[i]);
      kls.push_back(kl_to_ref(g, ref, f.y_l_s[i]));
    }
    const auto r = reduce_scalars(g, std::move(kls), /*mean=*/false);
    out.reg = double(g.scalar(r));
    terms.push_back(scale(g, r, Scalar(lambda)));
  }
  if (terms.empty()) throw ContractViolation("loss_long: no loss terms enabled");
  out.node = reduce_scalars(g, std::move(terms), /*mean=*/false);
  return out;
}

// L_s = mean_i (L^l_si + L^b_si + L^j_si) + lambda * KL(y^l_d || y^b_d) on one
// pseudo-long built from the batch, with the lone-side reference detached.
// pr_ref pins the detached reference to a constant, as in loss_long.
template <typename Scalar>
LossBuild<Scalar> loss_short(Graph<Scalar>& g, Model<Scalar>& m,
                             const std::vector<const Bag*>& batch,
                             const Bag* pseudo_long, double lambda,
                             const PhaseSpec& phase, double dropout_rate, RunMode mode,
                             Rng* rng, const Tensor<Scalar>* pr_ref = nullptr) {
  if (batch.empty()) throw ContractViolation("loss_short: empty batch");
  LossBuild<Scalar> out;
  std::vector<typename Graph<Scalar>::Value> per_item;
  for (const Bag* item : batch) {
    if (!item->has_label()) throw ContractViolation("loss_short: unlabeled short");
    const auto f = letranets_forward(g, m, *item, dropout_rate, mode, rng);
    std::vector<typename Graph<Scalar>::Value> terms;
    if (phase.use_l) {
      terms.push_back(cross_entropy_node(g, f.y_l_s[0], item->label));
      out.l += double(g.scalar(terms.back()));
    }
    if (phase.use_b) {
      terms.push_back(cross_entropy_node(g, f.y_b_s[0], item->label));
      out.b += double(g.scalar(terms.back()));
    }
    if (phase.use_j) {
      terms.push_back(cross_entropy_node(g, f.y_j_s[0], item->label));
      out.j += double(g.scalar(terms.back()));
    }
    if (terms.empty()) throw ContractViolation("loss_short: no loss terms enabled");
    per_item.push_back(reduce_scalars(g, std::move(terms), /*mean=*/false));
  }
  const double n = double(batch.size());
  out.l /= n;
  out.b /= n;
  out.j /= n;
  auto root = reduce_scalars(g, std::move(per_item), /*mean=*/true);
  if (phase.use_pr && lambda > 0) {
    if (pseudo_long == nullptr)
      throw ContractViolation("loss_short: PR term needs a pseudo-long");
    const auto pf = letranets_forward(g, m, *pseudo_long, dropout_rate, mode, rng);
    const auto r = kl_to_ref(g, pr_ref ? *pr_ref : g.value(pf.y_l_d), pf.y_b_d);
    out.reg = double(g.scalar(r));
    root = add(g, root, scale(g, r, Scalar(lambda)));
  }
  out.node = root;
  return out;
}

namespace detail {

// Batch loss for the plain models. CNN reads the concatenated tokens;
// BaggedCNN minimizes document loss on long sources and mean segment loss on
// short sources.
template <typename Scalar>
LossBuild<Scalar> simple_batch_loss(Graph<Scalar>& g, Model<Scalar>& m,
                                    const std::vector<const Bag*>& batch,
                                    Direction dir, double dropout_rate, RunMode mode,
                                    Rng* rng) {
  std::vector<typename Graph<Scalar>::Value> per_item;
  for (const Bag* item : batch) {
    if (!item->has_label()) throw ContractViolation("training item has no label");
    if (m.kind == ModelKind::cnn) {
      const auto y = cnn_classify(g, m, item->concat_ids(), dropout_rate, mode, rng);
      per_item.push_back(cross_entropy_node(g, y, item->label));
    } else {
      const auto f = baggedcnn_forward(g, m, *item, dropout_rate, mode, rng);
      if (dir == Direction::long_to_short) {
        per_item.push_back(cross_entropy_node(g, f.y_d, item->label));
      } else {
        std::vector<typename Graph<Scalar>::Value> seg_losses;
        for (auto y : f.y_s)
          seg_losses.push_back(cross_entropy_node(g, y, item->label));
        per_item.push_back(reduce_scalars(g, std::move(seg_losses), /*mean=*/true));
      }
    }
  }
  LossBuild<Scalar> out;
  out.node = reduce_scalars(g, std::move(per_item), /*mean=*/true);
  const double v = double(g.scalar(out.node));
  (m.kind == ModelKind::cnn ? out.l : out.b) = v;
  return out;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> snapshot_values(Model<Scalar>& m) {
  std::vector<Tensor<Scalar>> out;
  for (auto* p : m.parameters()) out.push_back(p->value);
  return out;
}

template <typename Scalar>
void restore_values(Model<Scalar>& m, const std::vector<Tensor<Scalar>>& snap) {
  const auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

// Marks the trainable subset for one phase. SP freezes the embedding outside
// stage 1 and the full phase so the stage-2 reference predictions stay fixed.
template <typename Scalar>
void set_trainable(Model<Scalar>& m, Direction dir, const std::string& phase) {
  const bool bag_stronger = dir == Direction::long_to_short;
  auto mark = [&](bool emb, bool lone, bool bag, bool l, bool b, bool j) {
    m.embedding.trainable = emb;
    for (auto& bank : m.lone.banks) bank.filters.trainable = bank.bias.trainable = lone;
    for (auto& bank : m.bag.banks) bank.filters.trainable = bank.bias.trainable = bag;
    if (m.attn.active())
      m.attn.w.trainable = m.attn.b.trainable = m.attn.v.trainable = bag;
    if (m.head_l.active()) m.head_l.w.trainable = m.head_l.b.trainable = l;
    if (m.head_b.active()) m.head_b.w.trainable = m.head_b.b.trainable = b;
    if (m.head_j.active()) m.head_j.w.trainable = m.head_j.b.trainable = j;
  };
  if (phase == "full") {
    mark(true, true, true, true, true, true);
  } else if (phase == "sp1") {
    mark(true, !bag_stronger, bag_stronger, !bag_stronger, bag_stronger, false);
  } else if (phase == "sp2") {
    mark(false, bag_stronger, !bag_stronger, bag_stronger, !bag_stronger, false);
  } else if (phase == "sp3") {
    mark(false, false, false, false, false, true);
  } else {
    throw ContractViolation("set_trainable: unknown phase " + phase);
  }
}

inline PhaseSpec phase_spec(const std::string& phase, Direction dir,
                            const Mechanisms& mech) {
  const bool bag_stronger = dir == Direction::long_to_short;
  PhaseSpec s;
  s.name = phase;
  if (phase == "full") {
    s.use_l = true;
    s.use_b = true;
    s.use_j = mech.jt;
    s.use_pr = mech.pr;
  } else if (phase == "sp1") {
    s.use_l = !bag_stronger;
    s.use_b = bag_stronger;
    s.use_j = false;
    s.use_pr = false;
  } else if (phase == "sp2") {
    s.use_l = bag_stronger;
    s.use_b = !bag_stronger;
    s.use_j = false;
    s.use_pr = mech.pr;
  } else if (phase == "sp3") {
    s.use_l = false;
    s.use_b = false;
    s.use_j = true;
    s.use_pr = false;
  } else {
    throw ContractViolation("phase_spec: unknown phase " + phase);
  }
  return s;
}

}  // namespace detail

// Accuracy of the test-time head over labeled bags.
template <typename Scalar>
double bag_accuracy(Model<Scalar>& m, const std::vector<Bag>& items, Direction dir,
                    bool use_joint) {
  if (items.empty()) return 0.0;
  int hits = 0;
  for (const auto& bag : items)
    if (predict(m, bag, dir, use_joint) == bag.label) ++hits;
  return double(hits) / double(items.size());
}

template <typename Scalar>
struct TrainResult {
  Model<Scalar> model;
  TrainHistory history;
};

// Full training: optional SP pretraining stages, then the main loop with
// per-epoch shuffling, Adadelta, max-norm on classifier weights, and early
// stopping on dev accuracy (ties keep the earliest epoch). On divergence the
// best checkpoint seen so far is restored and the history says so.
template <typename Scalar>
TrainResult<Scalar> train_model(ModelKind kind, const ModelConfig& mcfg, int vocab_size,
                                const Tensor<Scalar>* pretrained_emb,
                                const std::vector<Bag>& train,
                                const std::vector<Bag>& dev, const TrainConfig& cfg,
                                const EpochLogger& logger = nullptr) {
  if (train.empty()) throw ContractViolation("train_model: empty training set");
  if (cfg.batch_size < 1 || cfg.lambda < 0)
    throw ContractViolation("train_model: invalid TrainConfig");

  TrainResult<Scalar> result;
  result.model = make_model<Scalar>(kind, mcfg, vocab_size, cfg.seed, pretrained_emb);
  Model<Scalar>& m = result.model;
  TrainHistory& hist = result.history;
  hist.lambda = cfg.lambda;

  AdadeltaState<Scalar> opt(cfg.rho, cfg.adadelta_eps);
  const bool use_joint = kind == ModelKind::letranets && cfg.mech.jt;
  const auto params = m.parameters();

  std::vector<Tensor<Scalar>> best = detail::snapshot_values(m);
  double best_dev = -1.0;
  int best_epoch = -1;
  int stale = 0;

  std::vector<int> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  auto run_phase = [&](const std::string& phase, int phase_idx, int epochs,
                       bool early_stop) {
    if (kind == ModelKind::letranets) detail::set_trainable(m, cfg.direction, phase);
    const PhaseSpec spec = kind == ModelKind::letranets
                               ? detail::phase_spec(phase, cfg.direction, cfg.mech)
                               : PhaseSpec{};
    for (int epoch = 0; epoch < epochs; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      Rng shuffle_rng(derive_seed(cfg.seed, "epoch.shuffle", std::uint64_t(phase_idx),
                                  std::uint64_t(epoch)));
      shuffle_rng.shuffle(order);
      Rng dropout_rng(derive_seed(cfg.seed, "epoch.dropout", std::uint64_t(phase_idx),
                                  std::uint64_t(epoch)));
      Rng pseudo_rng(derive_seed(cfg.seed, "epoch.pseudo", std::uint64_t(phase_idx),
                                 std::uint64_t(epoch)));

      EpochStats stats;
      stats.phase = phase;
      stats.epoch = epoch;
      int batches = 0;
      for (std::size_t start = 0; start < order.size();
           start += std::size_t(cfg.batch_size)) {
        const auto end = std::min(order.size(), start + std::size_t(cfg.batch_size));
        std::vector<const Bag*> batch;
        for (std::size_t i = start; i < end; ++i)
          batch.push_back(&train[std::size_t(order[i])]);

        Graph<Scalar> g;
        LossBuild<Scalar> loss;
        if (kind != ModelKind::letranets) {
          loss = detail::simple_batch_loss(g, m, batch, cfg.direction, cfg.dropout,
                                           RunMode::train, &dropout_rng);
        } else if (cfg.direction == Direction::long_to_short) {
          std::vector<typename Graph<Scalar>::Value> parts;
          for (const Bag* bag : batch) {
            auto lb = loss_long(g, m, *bag, cfg.lambda, spec, cfg.dropout,
                                RunMode::train, &dropout_rng);
            parts.push_back(lb.node);
            loss.l += lb.l;
            loss.b += lb.b;
            loss.j += lb.j;
            loss.reg += lb.reg;
          }
          loss.node = reduce_scalars(g, std::move(parts), /*mean=*/true);
          const double n = double(batch.size());
          loss.l /= n;
          loss.b /= n;
          loss.j /= n;
          loss.reg /= n;
        } else {
          const Bag* pseudo = nullptr;
          Bag pseudo_storage;
          if (spec.use_pr && cfg.lambda > 0) {
            std::vector<Instance> pool;
            for (const Bag* bag : batch)
              pool.push_back({bag->concat_ids(), bag->label});
            PseudoLongConfig pcfg;
            pcfg.k_min = cfg.pseudo_k_min;
            pcfg.k_max = cfg.pseudo_k_max;
            pseudo_storage = make_pseudo_long(pool, pcfg, pseudo_rng);
            pseudo = &pseudo_storage;
          }
          loss = loss_short(g, m, batch, pseudo, cfg.lambda, spec, cfg.dropout,
                            RunMode::train, &dropout_rng);
        }

        const double batch_loss = double(g.scalar(loss.node));
        if (!std::isfinite(batch_loss))
          throw DivergenceError("non-finite training loss in phase " + phase +
                                ", epoch " + std::to_string(epoch));
        for (auto* p : params) p->reset_grad();
        g.backward(loss.node);
        opt.step(params);
        for (auto* w : m.head_weights())
          if (w->trainable) maxnorm_constrain(*w, Scalar(cfg.max_norm));

        stats.loss_l += loss.l;
        stats.loss_b += loss.b;
        stats.loss_j += loss.j;
        stats.reg += loss.reg;
        stats.total += batch_loss;
        ++batches;
      }
      stats.loss_l /= batches;
      stats.loss_b /= batches;
      stats.loss_j /= batches;
      stats.reg /= batches;
      stats.total /= batches;
      stats.dev_accuracy = bag_accuracy(m, dev, cfg.direction, use_joint);
      stats.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      hist.epochs.push_back(stats);
      if (logger) logger(stats);

      if (early_stop) {
        if (stats.dev_accuracy > best_dev) {
          best_dev = stats.dev_accuracy;
          best = detail::snapshot_values(m);
          best_epoch = epoch;
          stale = 0;
        } else {
          ++stale;
          if (stale >= cfg.patience) return;
        }
      }
    }
  };

  try {
    if (kind == ModelKind::letranets && cfg.mech.sp) {
      run_phase("sp1", 1, cfg.pretrain_epochs, false);
      run_phase("sp2", 2, cfg.pretrain_epochs, false);
      if (cfg.mech.jt) run_phase("sp3", 3, cfg.pretrain_epochs, false);
    }
    run_phase("full", 0, cfg.max_epochs, true);
  } catch (const DivergenceError& e) {
    hist.diverged = true;
    hist.divergence_note = e.what();
  }

  if (best_epoch >= 0) {
    detail::restore_values(m, best);
    hist.selected_epoch = best_epoch;
    hist.best_dev_accuracy = best_dev;
  } else if (hist.diverged) {
    detail::restore_values(m, best);  // initial snapshot: the last good state
  }
  for (auto* p : m.parameters()) p->trainable = true;
  return result;
}

// One fold's ready-to-train view: data encoded against that fold's
// vocabulary, plus the seed its training run must use.
template <typename Scalar>
struct FoldTask {
  int vocab_size = 0;
  const Tensor<Scalar>* embedding = nullptr;
  std::vector<Bag> train;
  std::vector<Bag> dev;
  std::uint64_t seed = 0;
};

// Trains every fold per grid value and keeps the lambda with the best mean
// dev accuracy; exact ties go to the smaller lambda.
template <typename Scalar>
double tune_lambda(std::vector<double> grid, ModelKind kind, const ModelConfig& mcfg,
                   const std::vector<FoldTask<Scalar>>& folds,
                   const TrainConfig& base_cfg) {
  if (grid.empty()) throw ContractViolation("tune_lambda: empty grid");
  if (folds.empty()) throw ContractViolation("tune_lambda: no folds");
  std::sort(grid.begin(), grid.end());
  if (grid.size() == 1) return grid[0];
  double best_lambda = grid[0];
  double best_acc = -1.0;
  for (double lambda : grid) {
    double acc_sum = 0.0;
    for (const auto& fold : folds) {
      TrainConfig cfg = base_cfg;
      cfg.lambda = lambda;
      cfg.seed = fold.seed;
      const auto r = train_model(kind, mcfg, fold.vocab_size, fold.embedding,
                                 fold.train, fold.dev, cfg);
      acc_sum += r.history.best_dev_accuracy;
    }
    const double acc = acc_sum / double(folds.size());
    if (acc > best_acc) {
      best_acc = acc;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace clt
