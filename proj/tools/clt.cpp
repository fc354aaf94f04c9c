// Single-binary command line for the cross-length transfer experiments.
// Subcommands: transfer, train, eval, synth, gradcheck, report.
//
// Configuration is a flat key-value space resolved as
//   defaults < --config JSON file < CLT_<KEY> environment < command flags
// with every key validated against the schema before any work starts.
// Exit codes: 0 ok, 1 check failure, 2 config/data error, 3 divergence.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "clt/common.hpp"
#include "clt/corpus.hpp"
#include "clt/embeddings.hpp"
#include "clt/evaluation.hpp"
#include "clt/gradcheck.hpp"
#include "clt/manifest.hpp"
#include "clt/models.hpp"
#include "clt/protocol.hpp"
#include "clt/text.hpp"
#include "clt/training.hpp"

extern char** environ;

namespace {

using nlohmann::ordered_json;

struct RunConfig {
  // keys explicitly set by config file, environment, or flags
  std::set<std::string> explicit_keys;
  // paths
  std::string source, target, embeddings, out_dir = "out";
  std::string unlabeled_short, unlabeled_long;
  std::string checkpoint, input, input_channel = "auto";
  std::string out_short, out_long, out_unlabeled_short, out_unlabeled_long;
  // model
  std::string model = "letranets";
  std::string direction = "long2short";
  int classes = 2;
  bool labels_one_based = false;
  int emb_dim = 300;
  std::string widths = "3,4,5";
  int maps = 100;
  int attn_dim = 100;
  // training
  double lambda = 0.1;
  std::string lambda_grid = "0.01,0.1,1.0";
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
  bool jt = true, pr = true, sp = true;
  // protocol
  int folds = 5;
  int min_count = 2;
  int chunk_size = 20;
  int max_segments = 60;
  std::string segmenter = "sentence";
  std::string bucket_edges;
  // checks / ablation
  double tolerance = 1e-4;
  std::string ablate;
  // synthetic generator
  int synth_vocab_size = 600;
  int synth_lexicon_size = 60;
  double synth_injection_rate = 0.35;
  double synth_noise_rate = 0.08;
  double synth_dilution = 0.45;
  double synth_concession_rate = 0.0;
  int synth_short_min = 6;
  int synth_short_max = 14;
  int synth_segs_min = 4;
  int synth_segs_max = 9;
  int synth_num_short = 2000;
  int synth_num_long = 2000;
  int synth_num_unlabeled = 400;
};

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw clt::DataError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& v, const std::string& key) {
  std::istringstream ss(v);
  T out{};
  ss >> out;
  if (ss.fail() || !ss.eof())
    throw clt::DataError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

struct KeyBinding {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
KeyBinding bind_field(T RunConfig::*field, const std::string& key) {
  KeyBinding kb;
  kb.set = [field, key](RunConfig& rc, const std::string& v) {
    if constexpr (std::is_same_v<T, std::string>)
      rc.*field = v;
    else if constexpr (std::is_same_v<T, bool>)
      rc.*field = parse_bool(v, key);
    else
      rc.*field = parse_number<T>(v, key);
  };
  kb.get = [field](const RunConfig& rc) {
    if constexpr (std::is_same_v<T, std::string>)
      return rc.*field;
    else if constexpr (std::is_same_v<T, bool>)
      return std::string(rc.*field ? "true" : "false");
    else {
      std::ostringstream ss;
      ss << rc.*field;
      return ss.str();
    }
  };
  return kb;
}

const std::map<std::string, KeyBinding>& schema() {
  static const std::map<std::string, KeyBinding> s = [] {
    std::map<std::string, KeyBinding> m;
    auto add = [&m](const std::string& key, auto field) {
      m.emplace(key, bind_field(field, key));
    };
    add("source", &RunConfig::source);
    add("target", &RunConfig::target);
    add("embeddings", &RunConfig::embeddings);
    add("out_dir", &RunConfig::out_dir);
    add("unlabeled_short", &RunConfig::unlabeled_short);
    add("unlabeled_long", &RunConfig::unlabeled_long);
    add("checkpoint", &RunConfig::checkpoint);
    add("input", &RunConfig::input);
    add("input_channel", &RunConfig::input_channel);
    add("out_short", &RunConfig::out_short);
    add("out_long", &RunConfig::out_long);
    add("out_unlabeled_short", &RunConfig::out_unlabeled_short);
    add("out_unlabeled_long", &RunConfig::out_unlabeled_long);
    add("model", &RunConfig::model);
    add("direction", &RunConfig::direction);
    add("classes", &RunConfig::classes);
    add("labels_one_based", &RunConfig::labels_one_based);
    add("emb_dim", &RunConfig::emb_dim);
    add("widths", &RunConfig::widths);
    add("maps", &RunConfig::maps);
    add("attn_dim", &RunConfig::attn_dim);
    add("lambda", &RunConfig::lambda);
    add("lambda_grid", &RunConfig::lambda_grid);
    add("batch_size", &RunConfig::batch_size);
    add("max_epochs", &RunConfig::max_epochs);
    add("patience", &RunConfig::patience);
    add("pretrain_epochs", &RunConfig::pretrain_epochs);
    add("dropout", &RunConfig::dropout);
    add("max_norm", &RunConfig::max_norm);
    add("rho", &RunConfig::rho);
    add("adadelta_eps", &RunConfig::adadelta_eps);
    add("pseudo_k_min", &RunConfig::pseudo_k_min);
    add("pseudo_k_max", &RunConfig::pseudo_k_max);
    add("seed", &RunConfig::seed);
    add("jt", &RunConfig::jt);
    add("pr", &RunConfig::pr);
    add("sp", &RunConfig::sp);
    add("folds", &RunConfig::folds);
    add("min_count", &RunConfig::min_count);
    add("chunk_size", &RunConfig::chunk_size);
    add("max_segments", &RunConfig::max_segments);
    add("segmenter", &RunConfig::segmenter);
    add("bucket_edges", &RunConfig::bucket_edges);
    add("tolerance", &RunConfig::tolerance);
    add("ablate", &RunConfig::ablate);
    add("synth_vocab_size", &RunConfig::synth_vocab_size);
    add("synth_lexicon_size", &RunConfig::synth_lexicon_size);
    add("synth_injection_rate", &RunConfig::synth_injection_rate);
    add("synth_noise_rate", &RunConfig::synth_noise_rate);
    add("synth_dilution", &RunConfig::synth_dilution);
    add("synth_concession_rate", &RunConfig::synth_concession_rate);
    add("synth_short_min", &RunConfig::synth_short_min);
    add("synth_short_max", &RunConfig::synth_short_max);
    add("synth_segs_min", &RunConfig::synth_segs_min);
    add("synth_segs_max", &RunConfig::synth_segs_max);
    add("synth_num_short", &RunConfig::synth_num_short);
    add("synth_num_long", &RunConfig::synth_num_long);
    add("synth_num_unlabeled", &RunConfig::synth_num_unlabeled);
    return m;
  }();
  return s;
}

void apply_config_file(RunConfig& rc, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw clt::DataError("cannot open config file " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw clt::DataError("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw clt::DataError("config file " + path + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = schema().find(key);
    if (it == schema().end())
      throw clt::DataError("config file " + path + ": unknown key '" + key + "'");
    std::string v;
    if (value.is_string())
      v = value.get<std::string>();
    else if (value.is_boolean())
      v = value.get<bool>() ? "true" : "false";
    else
      v = value.dump();
    it->second.set(rc, v);
    rc.explicit_keys.insert(key);
  }
}

std::string env_name(const std::string& key) {
  std::string out = "CLT_";
  for (char c : key) out.push_back(char(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

void apply_env(RunConfig& rc) {
  for (char** e = environ; *e != nullptr; ++e) {
    const std::string entry(*e);
    if (entry.rfind("CLT_", 0) != 0) continue;
    const auto eq = entry.find('=');
    const std::string name = entry.substr(0, eq);
    bool known = false;
    for (const auto& [key, kb] : schema()) {
      if (env_name(key) == name) {
        kb.set(rc, entry.substr(eq + 1));
        rc.explicit_keys.insert(key);
        known = true;
        break;
      }
    }
    if (!known)
      throw clt::DataError("environment variable " + name + " matches no config key");
  }
}

ordered_json config_snapshot(const RunConfig& rc) {
  ordered_json j;
  for (const auto& [key, kb] : schema()) j[key] = kb.get(rc);
  return j;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
  std::vector<int> out;
  if (s.empty()) return out;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(parse_number<int>(item, key));
  return out;
}

std::vector<double> parse_double_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(parse_number<double>(item, key));
  return out;
}

clt::Direction parse_direction(const std::string& s) {
  if (s == "long2short" || s == "long_to_short") return clt::Direction::long_to_short;
  if (s == "short2long" || s == "short_to_long") return clt::Direction::short_to_long;
  throw clt::DataError("direction must be long2short or short2long, got '" + s + "'");
}

clt::ModelConfig to_model_config(const RunConfig& rc) {
  clt::ModelConfig mc;
  mc.num_classes = rc.classes;
  mc.emb_dim = rc.emb_dim;
  mc.widths = parse_int_list(rc.widths, "widths");
  mc.maps_per_width = rc.maps;
  mc.attn_dim = rc.attn_dim;
  if (mc.widths.empty()) throw clt::DataError("widths: need at least one filter width");
  return mc;
}

clt::TrainConfig to_train_config(const RunConfig& rc) {
  clt::TrainConfig tc;
  tc.direction = parse_direction(rc.direction);
  tc.lambda = rc.lambda;
  tc.batch_size = rc.batch_size;
  tc.max_epochs = rc.max_epochs;
  tc.patience = rc.patience;
  tc.pretrain_epochs = rc.pretrain_epochs;
  tc.dropout = rc.dropout;
  tc.max_norm = rc.max_norm;
  tc.rho = rc.rho;
  tc.adadelta_eps = rc.adadelta_eps;
  tc.pseudo_k_min = rc.pseudo_k_min;
  tc.pseudo_k_max = rc.pseudo_k_max;
  tc.seed = rc.seed;
  tc.mech = {rc.jt, rc.pr, rc.sp};
  return tc;
}

clt::Segmenter to_segmenter(const RunConfig& rc) {
  clt::Segmenter seg;
  if (rc.segmenter == "sentence")
    seg.mode = clt::Segmenter::Mode::sentence_punct;
  else if (rc.segmenter == "chunk")
    seg.mode = clt::Segmenter::Mode::fixed_chunk;
  else
    throw clt::DataError("segmenter must be 'sentence' or 'chunk', got '" +
                         rc.segmenter + "'");
  seg.chunk_size = rc.chunk_size;
  seg.max_segments = rc.max_segments;
  return seg;
}

clt::ProtocolConfig to_protocol_config(const RunConfig& rc) {
  clt::ProtocolConfig pc;
  pc.kind = clt::model_kind_from_string(rc.model);
  pc.direction = parse_direction(rc.direction);
  pc.k_folds = rc.folds;
  pc.model = to_model_config(rc);
  pc.train = to_train_config(rc);
  pc.lambda_grid = parse_double_list(rc.lambda_grid, "lambda_grid");
  pc.segmenter = to_segmenter(rc);
  pc.min_count = rc.min_count;
  pc.embeddings_path = rc.embeddings;
  pc.bucket_edges = parse_int_list(rc.bucket_edges, "bucket_edges");
  return pc;
}

void validate_common(const RunConfig& rc) {
  if (rc.classes != 2 && rc.classes != 5)
    throw clt::DataError("classes must be 2 or 5, got " + std::to_string(rc.classes));
  if (rc.dropout < 0.0 || rc.dropout >= 1.0)
    throw clt::DataError("dropout must be in [0,1)");
  if (rc.lambda < 0.0) throw clt::DataError("lambda must be nonnegative");
  if (rc.batch_size < 1) throw clt::DataError("batch_size must be positive");
  if (rc.direction != "long2short" && rc.direction != "short2long" &&
      rc.direction != "long_to_short" && rc.direction != "short_to_long")
    throw clt::DataError("direction must be long2short or short2long, got '" +
                         rc.direction + "'");
  if (rc.model != "cnn" && rc.model != "baggedcnn" && rc.model != "letranets")
    throw clt::DataError("model must be cnn, baggedcnn, or letranets, got '" +
                         rc.model + "'");
}

void require_file(const std::string& path, const std::string& key) {
  if (path.empty()) throw clt::DataError("required key '" + key + "' is not set");
  if (!std::filesystem::exists(path))
    throw clt::DataError(key + " file not found: " + path);
}

std::filesystem::path ensure_out_dir(const RunConfig& rc) {
  std::filesystem::path dir(rc.out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<std::string> existing_inputs(std::initializer_list<std::string> paths) {
  std::vector<std::string> out;
  for (const auto& p : paths)
    if (!p.empty() && std::filesystem::exists(p)) out.push_back(p);
  return out;
}

void attach_unlabeled(clt::Corpus& shorts, clt::Corpus& longs, const RunConfig& rc) {
  if (!rc.unlabeled_short.empty()) {
    require_file(rc.unlabeled_short, "unlabeled_short");
    shorts.unlabeled = clt::load_unlabeled(rc.unlabeled_short);
  }
  if (!rc.unlabeled_long.empty()) {
    require_file(rc.unlabeled_long, "unlabeled_long");
    longs.unlabeled = clt::load_unlabeled(rc.unlabeled_long);
  }
}

ordered_json epoch_json(int fold, const std::string& role, double lambda,
                        const clt::EpochStats& st) {
  ordered_json j;
  j["fold"] = fold;
  j["role"] = role;
  j["lambda"] = lambda;
  j["phase"] = st.phase;
  j["epoch"] = st.epoch;
  j["loss_l"] = st.loss_l;
  j["loss_b"] = st.loss_b;
  j["loss_j"] = st.loss_j;
  j["reg"] = st.reg;
  j["total"] = st.total;
  j["dev_accuracy"] = st.dev_accuracy;
  j["wall_seconds"] = st.wall_seconds;
  return j;
}

// ---------------------------------------------------------------------------
// transfer
// ---------------------------------------------------------------------------

int cmd_transfer(const RunConfig& rc, const std::string& command_line) {
  validate_common(rc);
  require_file(rc.source, "source");
  require_file(rc.target, "target");
  const auto dir = parse_direction(rc.direction);
  const bool l2s = dir == clt::Direction::long_to_short;

  clt::Corpus source = clt::load_corpus(
      rc.source, l2s ? clt::Channel::long_text : clt::Channel::short_text, rc.classes,
      rc.labels_one_based);
  clt::Corpus target = clt::load_corpus(
      rc.target, l2s ? clt::Channel::short_text : clt::Channel::long_text, rc.classes,
      rc.labels_one_based);
  clt::Corpus& shorts = l2s ? target : source;
  clt::Corpus& longs = l2s ? source : target;
  attach_unlabeled(shorts, longs, rc);

  const auto out_dir = ensure_out_dir(rc);
  std::ofstream epochs(out_dir / "epochs.jsonl");
  clt::ProtocolLogger logger = [&epochs](int fold, const std::string& role,
                                         double lambda, const clt::EpochStats& st) {
    epochs << epoch_json(fold, role, lambda, st).dump() << "\n";
  };

  clt::write_manifest(
      (out_dir / "manifest.json").string(), command_line, config_snapshot(rc),
      existing_inputs({rc.source, rc.target, rc.embeddings, rc.unlabeled_short,
                       rc.unlabeled_long}));

  const clt::ProtocolConfig base = to_protocol_config(rc);

  if (rc.ablate.empty()) {
    const auto report = clt::run_transfer_protocol(shorts, longs, base, nullptr, logger);
    std::ofstream(out_dir / "report.json") << clt::report_to_json(report);
    std::ofstream(out_dir / "report.txt") << clt::render_report(report);
    std::cout << clt::render_report(report);
    return 0;
  }

  // Mechanism ablation: the full model plus one single-mechanism variant per
  // listed mechanism, all sharing the in-channel baseline.
  if (base.kind != clt::ModelKind::letranets)
    throw clt::DataError("--ablate applies to the letranets model only");
  std::vector<std::string> mechs;
  {
    std::istringstream ss(rc.ablate);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item != "jt" && item != "pr" && item != "sp")
        throw clt::DataError("ablate: unknown mechanism '" + item + "'");
      mechs.push_back(item);
    }
  }
  const clt::IcBaseline ic = clt::compute_ic_baseline(shorts, longs, base, logger);

  std::vector<clt::AblationRow> rows;
  auto run_variant = [&](const std::string& name, clt::Mechanisms mech) {
    clt::ProtocolConfig cfg = base;
    cfg.train.mech = mech;
    const auto report = clt::run_transfer_protocol(shorts, longs, cfg, &ic, logger);
    const std::string stem = "report_" + name;
    std::ofstream(out_dir / (stem + ".json")) << clt::report_to_json(report);
    std::ofstream(out_dir / (stem + ".txt")) << clt::render_report(report);
    rows.push_back({name, report.mean_oc_accuracy, 0.0});
  };

  run_variant("all", {true, true, true});
  for (const auto& name : mechs)
    run_variant(name, {name == "jt", name == "pr", name == "sp"});
  for (auto& row : rows) row.delta_vs_all = rows[0].accuracy - row.accuracy;

  std::ofstream(out_dir / "ablation.json")
      << clt::ablation_to_json(rows, to_string(base.direction));
  std::ofstream(out_dir / "ablation.txt")
      << clt::render_ablation(rows, to_string(base.direction));
  std::cout << clt::render_ablation(rows, to_string(base.direction));
  return 0;
}

// ---------------------------------------------------------------------------
// train / eval
// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& rc, const std::string& command_line) {
  validate_common(rc);
  require_file(rc.source, "source");
  const auto dir = parse_direction(rc.direction);
  const bool l2s = dir == clt::Direction::long_to_short;
  const auto channel = l2s ? clt::Channel::long_text : clt::Channel::short_text;

  clt::Corpus source = clt::load_corpus(rc.source, channel, rc.classes,
                                        rc.labels_one_based);
  clt::Corpus other;  // only carries optional unlabeled texts
  clt::Corpus& shorts = l2s ? other : source;
  clt::Corpus& longs = l2s ? source : other;
  attach_unlabeled(shorts, longs, rc);

  // Hold out a seeded 10% of the corpus for early stopping.
  std::vector<int> order(std::size_t(source.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  clt::Rng split_rng(clt::derive_seed(rc.seed, "train.split"));
  split_rng.shuffle(order);
  const int dev_n = std::max(1, source.size() / 10);
  const std::vector<int> dev_idx(order.begin(), order.begin() + dev_n);
  const std::vector<int> train_idx(order.begin() + dev_n, order.end());

  std::vector<std::vector<std::string>> vocab_corpora;
  for (int i : train_idx) vocab_corpora.push_back(source.records[std::size_t(i)].tokens);
  vocab_corpora.insert(vocab_corpora.end(), shorts.unlabeled.begin(),
                       shorts.unlabeled.end());
  vocab_corpora.insert(vocab_corpora.end(), longs.unlabeled.begin(),
                       longs.unlabeled.end());
  const clt::Vocabulary vocab = clt::Vocabulary::build(vocab_corpora, rc.min_count);

  const clt::ModelConfig mcfg = to_model_config(rc);
  clt::Tensor<clt::Real> emb;
  if (rc.embeddings.empty()) {
    emb = clt::random_embeddings<clt::Real>(vocab.size(), mcfg.emb_dim,
                                            clt::derive_seed(rc.seed, "emb"));
  } else {
    require_file(rc.embeddings, "embeddings");
    const auto loaded = clt::load_embeddings<clt::Real>(rc.embeddings, vocab,
                                                        mcfg.emb_dim,
                                                        clt::derive_seed(rc.seed, "emb"));
    std::cout << "embedding coverage " << loaded.coverage << "\n";
    emb = loaded.table;
  }

  const auto seg = to_segmenter(rc);
  auto encode = [&](const std::vector<int>& idx) {
    std::vector<clt::Bag> bags;
    for (int i : idx) {
      const auto& rec = source.records[std::size_t(i)];
      clt::Bag bag;
      bag.label = rec.label;
      if (channel == clt::Channel::long_text) {
        for (const auto& piece : clt::segment(rec.tokens, seg))
          bag.segments.push_back(vocab.encode(piece));
      } else {
        bag.segments.push_back(vocab.encode(rec.tokens));
      }
      bags.push_back(std::move(bag));
    }
    return bags;
  };

  const auto out_dir = ensure_out_dir(rc);
  std::ofstream history(out_dir / "history.jsonl");
  clt::EpochLogger logger = [&history](const clt::EpochStats& st) {
    history << epoch_json(0, "train", 0.0, st).dump() << "\n";
  };

  clt::write_manifest((out_dir / "manifest.json").string(), command_line,
                      config_snapshot(rc),
                      existing_inputs({rc.source, rc.embeddings, rc.unlabeled_short,
                                       rc.unlabeled_long}));

  auto result = clt::train_model<clt::Real>(
      clt::model_kind_from_string(rc.model), mcfg, vocab.size(), &emb,
      encode(train_idx), encode(dev_idx), to_train_config(rc), logger);

  clt::save_model(result.model, (out_dir / "model.ckpt").string());
  vocab.save((out_dir / "model.vocab").string());
  std::cout << "best dev accuracy " << result.history.best_dev_accuracy
            << " at epoch " << result.history.selected_epoch << "\n";
  if (result.history.diverged) {
    std::cerr << "training diverged: " << result.history.divergence_note
              << " (checkpoint holds the last good parameters)\n";
    return 3;
  }
  return 0;
}

int cmd_eval(const RunConfig& rc, const std::string& command_line) {
  validate_common(rc);
  require_file(rc.checkpoint, "checkpoint");
  require_file(rc.input, "input");

  std::filesystem::path vocab_path(rc.checkpoint);
  vocab_path.replace_extension(".vocab");
  require_file(vocab_path.string(), "checkpoint vocabulary");

  clt::Model<clt::Real> model = clt::load_model(rc.checkpoint);
  const clt::Vocabulary vocab = clt::Vocabulary::load(vocab_path.string());
  const auto dir = parse_direction(rc.direction);

  clt::Channel channel;
  if (rc.input_channel == "short")
    channel = clt::Channel::short_text;
  else if (rc.input_channel == "long")
    channel = clt::Channel::long_text;
  else if (rc.input_channel == "auto")
    channel = dir == clt::Direction::long_to_short ? clt::Channel::short_text
                                                   : clt::Channel::long_text;
  else
    throw clt::DataError("input_channel must be short, long, or auto");

  const clt::Corpus corpus =
      clt::load_corpus(rc.input, channel, model.cfg.num_classes, rc.labels_one_based);
  const auto seg = to_segmenter(rc);
  const bool use_joint = model.kind == clt::ModelKind::letranets && rc.jt;

  std::vector<int> preds, golds, lengths;
  for (const auto& rec : corpus.records) {
    clt::Bag bag;
    bag.label = rec.label;
    if (channel == clt::Channel::long_text) {
      for (const auto& piece : clt::segment(rec.tokens, seg))
        bag.segments.push_back(vocab.encode(piece));
    } else {
      bag.segments.push_back(vocab.encode(rec.tokens));
    }
    preds.push_back(clt::predict(model, bag, dir, use_joint));
    golds.push_back(rec.label);
    lengths.push_back(static_cast<int>(rec.tokens.size()));
  }

  ordered_json j;
  j["model"] = to_string(model.kind);
  j["input"] = rc.input;
  j["count"] = static_cast<int>(preds.size());
  j["accuracy"] = clt::accuracy(preds, golds);
  if (model.cfg.num_classes > 2) {
    std::vector<int> ps, gs;
    for (int p : preds) ps.push_back(p + 1);
    for (int g : golds) gs.push_back(g + 1);
    j["rmse"] = clt::rmse(ps, gs, model.cfg.num_classes);
  }
  j["per_length"] = ordered_json::array();
  for (const auto& b : clt::per_length_report(lengths, preds, golds,
                                              parse_int_list(rc.bucket_edges,
                                                             "bucket_edges"))) {
    j["per_length"].push_back(ordered_json{{"min_len", b.min_len},
                                           {"max_len", b.max_len},
                                           {"count", b.count},
                                           {"accuracy", b.accuracy}});
  }

  const auto out_dir = ensure_out_dir(rc);
  std::ofstream(out_dir / "eval.json") << j.dump(2) << "\n";
  clt::write_manifest((out_dir / "manifest.json").string(), command_line,
                      config_snapshot(rc),
                      existing_inputs({rc.checkpoint, vocab_path.string(), rc.input}));
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& rc, const std::string& command_line) {
  validate_common(rc);
  clt::SyntheticConfig cfg;
  cfg.vocab_size = rc.synth_vocab_size;
  cfg.num_classes = rc.classes;
  cfg.lexicon_size = rc.synth_lexicon_size;
  cfg.injection_rate = rc.synth_injection_rate;
  cfg.noise_rate = rc.synth_noise_rate;
  cfg.long_dilution = rc.synth_dilution;
  cfg.concession_rate = rc.synth_concession_rate;
  cfg.short_len_min = rc.synth_short_min;
  cfg.short_len_max = rc.synth_short_max;
  cfg.segs_per_long_min = rc.synth_segs_min;
  cfg.segs_per_long_max = rc.synth_segs_max;
  cfg.num_short = rc.synth_num_short;
  cfg.num_long = rc.synth_num_long;
  cfg.num_unlabeled = rc.synth_num_unlabeled;
  cfg.seed = rc.seed;

  const auto data = clt::gen_synthetic(cfg);
  const auto out_dir = ensure_out_dir(rc);
  const auto path_or = [&](const std::string& given, const char* name) {
    return given.empty() ? (out_dir / name).string() : given;
  };
  const std::string short_path = path_or(rc.out_short, "short.tsv");
  const std::string long_path = path_or(rc.out_long, "long.tsv");
  clt::save_corpus(data.shorts, short_path);
  clt::save_corpus(data.longs, long_path);

  const auto write_unlabeled = [](const std::vector<std::vector<std::string>>& texts,
                                  const std::string& path) {
    std::ofstream out(path);
    if (!out) throw clt::DataError("cannot open " + path + " for writing");
    for (const auto& tokens : texts) {
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out << ' ';
        out << tokens[i];
      }
      out << '\n';
    }
  };
  write_unlabeled(data.shorts.unlabeled,
                  path_or(rc.out_unlabeled_short, "unlabeled_short.txt"));
  write_unlabeled(data.longs.unlabeled,
                  path_or(rc.out_unlabeled_long, "unlabeled_long.txt"));

  for (const clt::Corpus* corpus : {&data.shorts, &data.longs}) {
    std::vector<int> histogram(std::size_t(cfg.num_classes), 0);
    for (const auto& rec : corpus->records) ++histogram[std::size_t(rec.label)];
    std::cout << corpus->name << " labels:";
    for (int c = 0; c < cfg.num_classes; ++c)
      std::cout << " " << c << "=" << histogram[std::size_t(c)];
    std::cout << "\n";
  }

  clt::write_manifest((out_dir / "manifest.json").string(), command_line,
                      config_snapshot(rc), {});
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradFixture {
  std::vector<clt::Bag> longs;
  std::vector<clt::Bag> shorts;
  int vocab_size = 12;
  clt::ModelConfig mcfg;
};

GradFixture make_fixture() {
  GradFixture f;
  f.mcfg.num_classes = 2;
  f.mcfg.emb_dim = 5;
  f.mcfg.widths = {2, 3};
  f.mcfg.maps_per_width = 3;
  f.mcfg.attn_dim = 4;
  auto bag = [](std::vector<std::vector<int>> segs, int label) {
    clt::Bag b;
    b.segments = std::move(segs);
    b.label = label;
    return b;
  };
  f.longs = {bag({{2, 3, 4}, {5, 6, 7}}, 1), bag({{8, 9}, {10, 11, 2}, {3, 4, 5}}, 0),
             bag({{6, 7, 8, 9}, {10, 11}}, 1), bag({{2, 4, 6}, {8, 10}}, 0)};
  f.shorts = {bag({{2, 3, 4, 5}}, 0), bag({{6, 7, 8}}, 1),
              bag({{9, 10, 11, 2, 3}}, 0), bag({{4, 6, 9, 11}}, 1)};
  return f;
}

int cmd_gradcheck(const RunConfig& rc, const std::string& command_line) {
  // The check differentiates a fixed loss; stochastic dropout would make it a
  // different function on every evaluation. The check always runs at rate 0,
  // and an explicit request for a positive rate is refused.
  if (rc.explicit_keys.count("dropout") && rc.dropout > 0.0)
    throw clt::DataError("gradcheck: dropout must be 0 for finite differences");

  const GradFixture f = make_fixture();
  const double lambda = 0.1;
  bool ok = true;
  std::vector<std::string> offenders;

  for (const auto kind : {clt::ModelKind::cnn, clt::ModelKind::baggedcnn,
                          clt::ModelKind::letranets}) {
    for (const auto dir :
         {clt::Direction::long_to_short, clt::Direction::short_to_long}) {
      auto model = clt::make_model<double>(kind, f.mcfg, f.vocab_size, 7);
      // Zero-initialized heads would zero out the encoder gradients; give
      // every head a small seeded fill so all paths carry signal.
      for (auto* p : model.parameters()) {
        if (p->name.rfind("head", 0) != 0) continue;
        clt::Rng rng(clt::derive_seed(13, "gradcheck.head", clt::fnv1a64(p->name)));
        for (int i = 0; i < p->size(); ++i) p->value[i] = rng.uniform(-0.4, 0.4);
      }
      const auto params = model.parameters();
      const bool l2s = dir == clt::Direction::long_to_short;
      const auto& batch_items = l2s ? f.longs : f.shorts;
      std::vector<const clt::Bag*> batch;
      for (const auto& b : batch_items) batch.push_back(&b);

      clt::Bag pseudo;
      if (kind == clt::ModelKind::letranets && !l2s) {
        std::vector<clt::Instance> pool;
        for (const auto& b : f.shorts) pool.push_back({b.concat_ids(), b.label});
        clt::PseudoLongConfig pcfg;
        pcfg.k_min = pcfg.k_max = 3;
        clt::Rng rng(clt::derive_seed(99, "gradcheck.pseudo"));
        pseudo = clt::make_pseudo_long(pool, pcfg, rng);
      }

      // The PR reference is detached, so the differentiated loss treats it as
      // a constant; pin it now so the finite-difference probes see the same
      // function the backward pass differentiates.
      std::vector<std::vector<clt::Tensor<double>>> long_refs;
      clt::Tensor<double> short_ref;
      if (kind == clt::ModelKind::letranets) {
        if (l2s) {
          for (const auto* b : batch) {
            clt::Graph<double> g;
            const auto fwd = clt::letranets_forward(g, model, *b, 0.0,
                                                    clt::RunMode::eval, nullptr);
            std::vector<clt::Tensor<double>> refs;
            for (auto node : fwd.y_b_s) refs.push_back(g.value(node));
            long_refs.push_back(std::move(refs));
          }
        } else {
          clt::Graph<double> g;
          const auto fwd = clt::letranets_forward(g, model, pseudo, 0.0,
                                                  clt::RunMode::eval, nullptr);
          short_ref = g.value(fwd.y_l_d);
        }
      }

      auto loss = [&]() -> double {
        for (auto* p : params) p->reset_grad();
        clt::Graph<double> g;
        clt::LossBuild<double> lb;
        if (kind != clt::ModelKind::letranets) {
          lb = clt::detail::simple_batch_loss(g, model, batch, dir, 0.0,
                                              clt::RunMode::train, nullptr);
        } else if (l2s) {
          std::vector<clt::Graph<double>::Value> parts;
          for (std::size_t bi = 0; bi < batch.size(); ++bi)
            parts.push_back(clt::loss_long(g, model, *batch[bi], lambda,
                                           clt::PhaseSpec{}, 0.0,
                                           clt::RunMode::train, nullptr,
                                           &long_refs[bi])
                                .node);
          lb.node = clt::reduce_scalars(g, std::move(parts), true);
        } else {
          lb = clt::loss_short(g, model, batch, &pseudo, lambda, clt::PhaseSpec{},
                               0.0, clt::RunMode::train, nullptr, &short_ref);
        }
        g.backward(lb.node);
        return double(g.scalar(lb.node));
      };

      // The PAD embedding row is frozen by contract and is not a parameter.
      const int emb_dim = f.mcfg.emb_dim;
      const auto skip = [emb_dim](const clt::Parameter<double>& p, int idx) {
        return p.name == "embedding" && idx < emb_dim;
      };
      const auto report = clt::grad_check(params, loss, 0, 1e-5, 0, skip);
      const std::string label =
          to_string(kind) + std::string("/") + to_string(dir);
      std::cout << label << " max_rel_error " << report.max_rel_error << " (param "
                << report.worst_param << "[" << report.worst_index << "])\n";
      if (!(report.max_rel_error < rc.tolerance)) {
        ok = false;
        offenders.push_back(label + ": " + report.worst_param + "[" +
                            std::to_string(report.worst_index) + "] analytic " +
                            std::to_string(report.analytic) + " numeric " +
                            std::to_string(report.numeric));
      }
    }
  }

  const auto out_dir = ensure_out_dir(rc);
  clt::write_manifest((out_dir / "manifest.json").string(), command_line,
                      config_snapshot(rc), {});
  if (!ok) {
    std::cerr << "gradient check failed (tolerance " << rc.tolerance << "):\n";
    for (const auto& line : offenders) std::cerr << "  " << line << "\n";
    return 1;
  }
  std::cout << "all gradients within tolerance " << rc.tolerance << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report(const RunConfig& rc, const std::string&) {
  require_file(rc.input, "input");
  std::ifstream in(rc.input);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw clt::DataError(std::string("report: ") + e.what());
  }
  clt::MetricsReport r;
  r.model = j.value("model", "");
  r.direction = j.value("direction", "");
  r.source_corpus = j.value("source_corpus", "");
  r.target_corpus = j.value("target_corpus", "");
  r.num_classes = j.value("num_classes", 2);
  r.folds_k = j.value("folds_k", 0);
  r.seed = j.value("seed", std::uint64_t(0));
  r.lambda = j.value("lambda", 0.0);
  for (const auto& fj : j.value("folds", ordered_json::array())) {
    clt::FoldMetrics fm;
    fm.fold = fj.value("fold", 0);
    fm.oc_accuracy = fj.value("oc_accuracy", 0.0);
    fm.ic_accuracy = fj.value("ic_accuracy", 0.0);
    fm.oc_rmse = fj.value("oc_rmse", -1.0);
    fm.ic_rmse = fj.value("ic_rmse", -1.0);
    fm.transfer_loss = fj.value("transfer_loss", 0.0);
    r.folds.push_back(fm);
  }
  r.mean_oc_accuracy = j.value("mean_oc_accuracy", 0.0);
  r.mean_ic_accuracy = j.value("mean_ic_accuracy", 0.0);
  r.mean_oc_rmse = j.value("mean_oc_rmse", -1.0);
  r.mean_ic_rmse = j.value("mean_ic_rmse", -1.0);
  r.transfer_loss = j.value("transfer_loss", 0.0);
  if (j.contains("transfer_ratio")) {
    r.has_transfer_ratio = true;
    r.transfer_ratio = j["transfer_ratio"].get<double>();
  }
  for (const auto& bj : j.value("per_length", ordered_json::array())) {
    clt::LengthBucket b;
    b.min_len = bj.value("min_len", 0);
    b.max_len = bj.value("max_len", 0);
    b.count = bj.value("count", 0);
    b.accuracy = bj.value("accuracy", 0.0);
    r.per_length.push_back(b);
  }
  std::cout << clt::render_report(r);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-length transfer experiments"};
  app.require_subcommand(1);

  RunConfig rc;
  std::string config_path;
  std::map<std::string, std::string> flag_values;

  struct Command {
    std::string name;
    std::string help;
    int (*fn)(const RunConfig&, const std::string&);
  };
  const std::vector<Command> commands = {
      {"transfer", "k-fold in-channel vs out-channel evaluation", &cmd_transfer},
      {"train", "train one model on one channel", &cmd_train},
      {"eval", "score a checkpoint on a labeled file", &cmd_eval},
      {"synth", "generate the synthetic benchmark corpora", &cmd_synth},
      {"gradcheck", "finite-difference audit of every model loss", &cmd_gradcheck},
      {"report", "re-render a report.json", &cmd_report}};

  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON config file");
    for (const auto& [key, kb] : schema()) {
      sub->add_option_function<std::string>(
          "--" + key,
          [&flag_values, key = key](const std::string& v) { flag_values[key] = v; });
    }
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  std::string command_line;
  for (int i = 0; i < argc; ++i) {
    if (i) command_line += ' ';
    command_line += argv[i];
  }

  try {
    if (!config_path.empty()) apply_config_file(rc, config_path);
    apply_env(rc);
    for (const auto& [key, value] : flag_values) {
      schema().at(key).set(rc, value);
      rc.explicit_keys.insert(key);
    }

    for (const auto& [name, help, fn] : commands)
      if (subs[name]->parsed()) return fn(rc, command_line);
    return 2;
  } catch (const clt::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const clt::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const clt::ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
