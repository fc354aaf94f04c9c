#include "clt/protocol.hpp"

#include <algorithm>
#include <numeric>

#include "clt/embeddings.hpp"

namespace clt {

namespace {

void hash_tokens(std::uint64_t& h, const std::vector<std::string>& tokens) {
  for (const auto& t : tokens) {
    h = splitmix64(h ^ fnv1a64(t));
    h = splitmix64(h ^ 0x1fULL);
  }
  h = splitmix64(h ^ 0x1eULL);
}

std::vector<std::vector<std::string>> gather_tokens(const Corpus& c,
                                                    const std::vector<int>& idx) {
  std::vector<std::vector<std::string>> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(c.records[std::size_t(i)].tokens);
  return out;
}

Bag encode_record(const TextRecord& rec, Channel channel, const Vocabulary& vocab,
                  const Segmenter& seg) {
  Bag bag;
  bag.label = rec.label;
  if (channel == Channel::long_text) {
    for (const auto& piece : segment(rec.tokens, seg))
      bag.segments.push_back(vocab.encode(piece));
  } else {
    bag.segments.push_back(vocab.encode(rec.tokens));
  }
  return bag;
}

std::vector<Bag> encode_records(const Corpus& c, const std::vector<int>& idx,
                                const Vocabulary& vocab, const Segmenter& seg) {
  std::vector<Bag> out;
  out.reserve(idx.size());
  for (int i : idx)
    out.push_back(encode_record(c.records[std::size_t(i)], c.channel, vocab, seg));
  return out;
}

// Vocabulary for one training side: that side's train-fold texts plus the
// unlabeled pools of both channels (label-free, so no test leakage).
Vocabulary fold_vocab(const Corpus& train_side, const std::vector<int>& train_idx,
                      const Corpus& shorts, const Corpus& longs, int min_count) {
  auto corpora = gather_tokens(train_side, train_idx);
  corpora.insert(corpora.end(), shorts.unlabeled.begin(), shorts.unlabeled.end());
  corpora.insert(corpora.end(), longs.unlabeled.begin(), longs.unlabeled.end());
  return Vocabulary::build(corpora, min_count);
}

Tensor<Real> fold_embedding(const Vocabulary& vocab, const ProtocolConfig& cfg,
                            std::uint64_t chash, int fold) {
  const auto seed = derive_seed(cfg.train.seed, "emb", chash, std::uint64_t(fold));
  if (cfg.embeddings_path.empty())
    return random_embeddings<Real>(vocab.size(), cfg.model.emb_dim, seed);
  return load_embeddings<Real>(cfg.embeddings_path, vocab, cfg.model.emb_dim, seed)
      .table;
}

struct EvalOutcome {
  double acc = 0.0;
  double rmse_val = -1.0;
  std::vector<int> preds, golds, lengths;
};

EvalOutcome evaluate_on(Model<Real>& m, const Corpus& target,
                        const std::vector<int>& test_idx, const Vocabulary& vocab,
                        const ProtocolConfig& cfg, bool use_joint) {
  EvalOutcome out;
  for (int i : test_idx) {
    const auto& rec = target.records[std::size_t(i)];
    const Bag bag = encode_record(rec, target.channel, vocab, cfg.segmenter);
    out.preds.push_back(predict(m, bag, cfg.direction, use_joint));
    out.golds.push_back(rec.label);
    out.lengths.push_back(static_cast<int>(rec.tokens.size()));
  }
  out.acc = accuracy(out.preds, out.golds);
  if (target.num_classes > 2) {
    std::vector<int> ps, gs;
    for (int p : out.preds) ps.push_back(p + 1);
    for (int g : out.golds) gs.push_back(g + 1);
    out.rmse_val = rmse(ps, gs, target.num_classes);
  }
  return out;
}

EpochLogger wrap_logger(const ProtocolLogger& logger, int fold, std::string role,
                        double lambda) {
  if (!logger) return nullptr;
  return [&logger, fold, role = std::move(role), lambda](const EpochStats& stats) {
    logger(fold, role, lambda, stats);
  };
}

}  // namespace

std::uint64_t corpus_hash(const Corpus& corpus) {
  std::uint64_t h = fnv1a64("corpus");
  h = splitmix64(h ^ std::uint64_t(corpus.num_classes));
  for (const auto& rec : corpus.records) {
    h = splitmix64(h ^ std::uint64_t(rec.label + 7));
    hash_tokens(h, rec.tokens);
  }
  for (const auto& tokens : corpus.unlabeled) hash_tokens(h, tokens);
  return h;
}

IcBaseline compute_ic_baseline(const Corpus& shorts, const Corpus& longs,
                               const ProtocolConfig& cfg,
                               const ProtocolLogger& logger) {
  const Corpus& target =
      cfg.direction == Direction::long_to_short ? shorts : longs;
  // In-channel training runs with the direction whose source is the target
  // channel, so segmentation and loss shape match the channel.
  const Direction ic_dir = cfg.direction == Direction::long_to_short
                               ? Direction::short_to_long
                               : Direction::long_to_short;
  const std::uint64_t chash = corpus_hash(target);
  const auto plan =
      make_fold_plan(target.size(), cfg.k_folds, derive_seed(cfg.train.seed, "folds", chash));
  const auto splits = kfold_split(plan);

  IcBaseline out;
  for (int f = 0; f < cfg.k_folds; ++f) {
    const auto& split = splits[std::size_t(f)];
    const Vocabulary vocab =
        fold_vocab(target, split.train, shorts, longs, cfg.min_count);
    const Tensor<Real> emb = fold_embedding(vocab, cfg, chash, f);

    TrainConfig tcfg = cfg.train;
    tcfg.direction = ic_dir;
    tcfg.seed = derive_seed(cfg.train.seed, "train.cnn", chash, std::uint64_t(f));
    const auto train_bags = encode_records(target, split.train, vocab, cfg.segmenter);
    const auto dev_bags = encode_records(target, split.dev, vocab, cfg.segmenter);
    auto r = train_model<Real>(ModelKind::cnn, cfg.model, vocab.size(), &emb,
                               train_bags, dev_bags, tcfg,
                               wrap_logger(logger, f, "ic", 0.0));
    if (r.history.diverged)
      throw DivergenceError("in-channel baseline, fold " + std::to_string(f) + ": " +
                            r.history.divergence_note);

    ProtocolConfig eval_cfg = cfg;
    eval_cfg.direction = ic_dir;
    const auto ev = evaluate_on(r.model, target, split.test, vocab, eval_cfg, false);
    out.accuracy.push_back(ev.acc);
    if (target.num_classes > 2) out.rmse_vals.push_back(ev.rmse_val);
  }
  return out;
}

MetricsReport run_transfer_protocol(const Corpus& shorts, const Corpus& longs,
                                    const ProtocolConfig& cfg,
                                    const IcBaseline* precomputed_ic,
                                    const ProtocolLogger& logger) {
  if (shorts.num_classes != longs.num_classes)
    throw ContractViolation("run_transfer_protocol: class-count mismatch");
  if (cfg.k_folds < 2) throw ContractViolation("run_transfer_protocol: need k >= 2");

  const bool l2s = cfg.direction == Direction::long_to_short;
  const Corpus& source = l2s ? longs : shorts;
  const Corpus& target = l2s ? shorts : longs;
  const std::uint64_t hash_s = corpus_hash(source);
  const bool use_joint = cfg.kind == ModelKind::letranets && cfg.train.mech.jt;

  const auto plan_s = make_fold_plan(source.size(), cfg.k_folds,
                                     derive_seed(cfg.train.seed, "folds", hash_s));
  const std::uint64_t hash_t = corpus_hash(target);
  const auto plan_t = make_fold_plan(target.size(), cfg.k_folds,
                                     derive_seed(cfg.train.seed, "folds", hash_t));
  const auto splits_s = kfold_split(plan_s);
  const auto splits_t = kfold_split(plan_t);

  // Per-fold vocabularies and embeddings; kept alive for the whole run so the
  // lambda sweep can train on every fold.
  std::vector<Vocabulary> vocabs;
  std::vector<Tensor<Real>> embeddings;
  std::vector<FoldTask<Real>> tasks(std::size_t(cfg.k_folds));
  for (int f = 0; f < cfg.k_folds; ++f) {
    const auto& split = splits_s[std::size_t(f)];
    vocabs.push_back(fold_vocab(source, split.train, shorts, longs, cfg.min_count));
    embeddings.push_back(fold_embedding(vocabs.back(), cfg, hash_s, f));
  }
  for (int f = 0; f < cfg.k_folds; ++f) {
    const auto& split = splits_s[std::size_t(f)];
    auto& task = tasks[std::size_t(f)];
    task.vocab_size = vocabs[std::size_t(f)].size();
    task.embedding = &embeddings[std::size_t(f)];
    task.train = encode_records(source, split.train, vocabs[std::size_t(f)], cfg.segmenter);
    task.dev = encode_records(source, split.dev, vocabs[std::size_t(f)], cfg.segmenter);
    task.seed = derive_seed(cfg.train.seed, "train." + to_string(cfg.kind), hash_s,
                            std::uint64_t(f));
  }

  // Lambda only reaches the loss through the PR term.
  const bool lambda_applies = cfg.kind == ModelKind::letranets && cfg.train.mech.pr;
  double lambda = 0.0;
  if (lambda_applies)
    lambda = tune_lambda(cfg.lambda_grid, cfg.kind, cfg.model, tasks, cfg.train);

  IcBaseline ic;
  if (precomputed_ic) {
    ic = *precomputed_ic;
    if (static_cast<int>(ic.accuracy.size()) != cfg.k_folds)
      throw ContractViolation("run_transfer_protocol: baseline fold count mismatch");
  } else {
    ic = compute_ic_baseline(shorts, longs, cfg, logger);
  }

  MetricsReport report;
  report.model = to_string(cfg.kind);
  report.direction = to_string(cfg.direction);
  report.source_corpus = source.name;
  report.target_corpus = target.name;
  report.num_classes = target.num_classes;
  report.folds_k = cfg.k_folds;
  report.seed = cfg.train.seed;
  report.lambda = lambda;

  std::vector<int> all_preds, all_golds, all_lengths;
  std::vector<double> oc_errs, ic_errs;
  for (int f = 0; f < cfg.k_folds; ++f) {
    auto& task = tasks[std::size_t(f)];
    TrainConfig tcfg = cfg.train;
    tcfg.lambda = lambda;
    tcfg.seed = task.seed;
    auto r = train_model<Real>(cfg.kind, cfg.model, task.vocab_size, task.embedding,
                               task.train, task.dev, tcfg,
                               wrap_logger(logger, f, "oc", lambda));
    if (r.history.diverged)
      throw DivergenceError("out-channel model, fold " + std::to_string(f) + ": " +
                            r.history.divergence_note);

    const auto ev = evaluate_on(r.model, target, splits_t[std::size_t(f)].test,
                                vocabs[std::size_t(f)], cfg, use_joint);
    FoldMetrics fm;
    fm.fold = f;
    fm.oc_accuracy = ev.acc;
    fm.ic_accuracy = ic.accuracy[std::size_t(f)];
    if (target.num_classes > 2) {
      fm.oc_rmse = ev.rmse_val;
      fm.ic_rmse = ic.rmse_vals[std::size_t(f)];
    }
    fm.transfer_loss = transfer_loss(1.0 - fm.oc_accuracy, 1.0 - fm.ic_accuracy);
    report.folds.push_back(fm);

    oc_errs.push_back(1.0 - fm.oc_accuracy);
    ic_errs.push_back(1.0 - fm.ic_accuracy);
    all_preds.insert(all_preds.end(), ev.preds.begin(), ev.preds.end());
    all_golds.insert(all_golds.end(), ev.golds.begin(), ev.golds.end());
    all_lengths.insert(all_lengths.end(), ev.lengths.begin(), ev.lengths.end());

    // Free the fold's training data once trained; the report only needs
    // predictions from here on.
    task.train.clear();
    task.dev.clear();
  }

  const auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  };
  report.mean_oc_accuracy =
      1.0 - std::accumulate(oc_errs.begin(), oc_errs.end(), 0.0) / double(cfg.k_folds);
  report.mean_ic_accuracy =
      1.0 - std::accumulate(ic_errs.begin(), ic_errs.end(), 0.0) / double(cfg.k_folds);
  if (target.num_classes > 2) {
    std::vector<double> oc_r, ic_r;
    for (const auto& fm : report.folds) {
      oc_r.push_back(fm.oc_rmse);
      ic_r.push_back(fm.ic_rmse);
    }
    report.mean_oc_rmse = mean(oc_r);
    report.mean_ic_rmse = mean(ic_r);
  }
  report.transfer_loss =
      transfer_loss(1.0 - report.mean_oc_accuracy, 1.0 - report.mean_ic_accuracy);
  const bool ratio_defined =
      std::all_of(ic_errs.begin(), ic_errs.end(), [](double e) { return e > 0.0; });
  if (ratio_defined) {
    report.has_transfer_ratio = true;
    report.transfer_ratio = transfer_ratio(oc_errs, ic_errs);
  }
  report.per_length =
      per_length_report(all_lengths, all_preds, all_golds, cfg.bucket_edges);
  return report;
}

}  // namespace clt
