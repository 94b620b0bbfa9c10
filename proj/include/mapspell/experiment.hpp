#pragma once

// Desk-scale end-to-end experiment: synthetic logs -> mined datasets ->
// LSTM baseline, supervised encoder, pre-trained encoder (unfrozen and frozen).

#include <chrono>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "mapspell/dataset.hpp"
#include "mapspell/encoder.hpp"
#include "mapspell/lstm.hpp"
#include "mapspell/miner.hpp"
#include "mapspell/synth.hpp"
#include "mapspell/train.hpp"
#include "mapspell/vocab.hpp"

namespace mapspell {

struct DeskDataConfig {
  std::uint64_t seed = 42;
  std::size_t n_entities = 100000;
  std::size_t finetune_sessions = 200000;
  std::size_t pretrain_sessions = 300000;
  std::size_t train_n = 16000, dev_n = 2000, test_n = 2000;
  double finetune_ratio = 0.2;
  std::size_t pretrain_n = 50000;
  std::size_t pretrain_dev_n = 2000;  // carved out of pretrain_n
  double pretrain_ratio = 0.5;
  std::size_t shards = 1;
};

struct DeskData {
  Splits finetune;
  std::vector<std::string> pretrain_train;
  std::vector<std::string> pretrain_dev;
};

inline std::vector<std::string> queries_of(const std::vector<LabeledExample>& rows) {
  std::vector<std::string> q;
  q.reserve(rows.size());
  for (const auto& r : rows) q.push_back(r.query);
  return q;
}

/// Both corpora share one gazetteer (one domain) but come from independent
/// logs. Fine-tune dev/test queries are withheld from the pre-training corpus.
inline DeskData build_desk_data(const DeskDataConfig& cfg) {
  const Gazetteer gaz = generate_gazetteer(cfg.seed, cfg.n_entities);
  DeskData data;
  {
    BehaviorConfig behavior;
    behavior.typo_rate = cfg.finetune_ratio;
    const auto log = generate_log(gaz, TypoChannel{}, behavior, cfg.finetune_sessions, derive_seed(cfg.seed, 1), cfg.shards);
    const auto mined = mine_sessions(log.sessions, MinerConfig{.shards = cfg.shards});
    data.finetune = split(mined.labeled, SplitSpec{cfg.train_n, cfg.dev_n, cfg.test_n, cfg.finetune_ratio, cfg.seed});
  }
  {
    BehaviorConfig behavior;
    behavior.typo_rate = cfg.pretrain_ratio;
    const auto log = generate_log(gaz, TypoChannel{}, behavior, cfg.pretrain_sessions, derive_seed(cfg.seed, 2), cfg.shards);
    const auto mined = mine_sessions(log.sessions, MinerConfig{.shards = cfg.shards});
    std::unordered_set<std::string> held_out;
    for (const auto* rows : {&data.finetune.dev, &data.finetune.test})
      for (const auto& r : *rows) held_out.insert(r.query);
    std::vector<LabeledExample> pool;
    for (const auto& r : mined.labeled)
      if (!held_out.contains(r.query)) pool.push_back(r);
    const auto s = split(pool, SplitSpec{cfg.pretrain_n - cfg.pretrain_dev_n, cfg.pretrain_dev_n, 0, cfg.pretrain_ratio,
                                         derive_seed(cfg.seed, 3)});
    data.pretrain_train = queries_of(s.train);
    data.pretrain_dev = queries_of(s.dev);
  }
  return data;
}

/// Encoder size for the desk trend runs: slim depth at half the contracted
/// width, so three seeds fit the one-hour single-core budget.
inline EncoderConfig desk_trend_encoder() {
  EncoderConfig c;
  c.n_layers = kSlimLayers;
  c.hidden_dim = 64;
  c.ff_dim = 256;
  return c;
}

struct DeskModelConfig {
  std::size_t word_vocab_size = 30000;
  std::size_t subword_vocab_size = 4000;
  std::size_t subword_merge_cap = 100000;
  LstmConfig lstm;                              // vocab_size filled in from the word vocabulary
  EncoderConfig encoder = desk_trend_encoder();  // vocab_size filled in from the subword vocabulary
  Pooling pooling = Pooling::LastLayerCls;
  double head_dropout = 0.3;
  // Single-run presets (also the CLI defaults).
  TrainConfig lstm_train{Task::Lstm, 8, 32, 1e-3, 0};
  TrainConfig pretrain{Task::MlmPretrain, 10, 32, 1e-3, 0};
  TrainConfig finetune{Task::Finetune, 4, 32, 1e-3, 0};
  TrainConfig frozen{Task::Finetune, 4, 32, 1e-3, 0};
  // Every classifier variant tries each rate; dev macro F1 picks one.
  std::vector<double> lr_grid = {1e-4, 3e-4, 1e-3};
};

struct VariantResult {
  std::string name;
  double lr = 0.0;  // selected from the grid
  TrainHistory history;
  MetricsReport test;
  double seconds = 0.0;
};

struct TrendResult {
  std::uint64_t seed = 0;
  VariantResult lstm, supervised, pretrained, frozen;
  TrainHistory pretrain;
  double pretrain_seconds = 0.0;
};

using ProgressFn = std::function<void(const std::string&)>;

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline EpochCallback epoch_logger(const ProgressFn& log, const std::string& name) {
  if (!log) return {};
  return [log, name](const EpochRecord& e) {
    std::string msg = name + " epoch " + std::to_string(e.epoch) + " train_loss " + std::to_string(e.train_loss);
    if (e.dev) msg += " dev_macro_f1 " + std::to_string(headline_f1(*e.dev));
    if (e.dev_loss) msg += " dev_loss " + std::to_string(*e.dev_loss);
    msg += " (" + std::to_string(static_cast<int>(e.seconds)) + "s)";
    log(msg);
  };
}

inline std::vector<std::vector<TokenId>> encode_texts(const std::vector<std::string>& texts, const Vocabulary& v,
                                                      std::size_t max_len) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(encode(normalize_text(t), v, max_len));
  return out;
}

inline TrainConfig seeded(TrainConfig c, std::uint64_t seed) {
  c.seed = seed;
  return c;
}

/// Trains a fresh model per grid rate, keeps the one with the best dev macro
/// F1 (earliest rate on ties) and scores it on test.
template <class MakeModel>
VariantResult select_by_dev(const std::string& name, const MakeModel& make, TrainConfig cfg, const std::vector<double>& grid,
                            const EncodedSet& train, const EncodedSet& dev, const EncodedSet& test, const ProgressFn& log) {
  const auto t0 = std::chrono::steady_clock::now();
  VariantResult best;
  double best_f1 = -1.0;
  for (double lr : grid) {
    cfg.lr = lr;
    auto model = make();
    char tag[64];
    std::snprintf(tag, sizeof tag, "%s lr=%g", name.c_str(), lr);
    TrainHistory h = train_classifier(*model, cfg, train, dev, epoch_logger(log, tag));
    h.label = name;
    const double f1 = headline_f1(*h.best().dev);
    if (f1 > best_f1) {
      best_f1 = f1;
      best.lr = lr;
      best.history = std::move(h);
      best.test = evaluate_model(*model, test);
    }
  }
  best.name = name;
  best.seconds = seconds_since(t0);
  return best;
}

}  // namespace detail

/// Runs all four variants on one seed's data and scores each dev-selected model on test.
inline TrendResult run_trend(const DeskData& data, const DeskModelConfig& mcfg, std::uint64_t seed,
                             const ProgressFn& log = {}) {
  TrendResult res;
  res.seed = seed;
  const auto& ft = data.finetune;

  // LSTM baseline on a word vocabulary from the training split.
  {
    const Vocabulary words = build_word_vocab(queries_of(ft.train), mcfg.word_vocab_size);
    LstmConfig cfg = mcfg.lstm;
    cfg.vocab_size = words.size();
    const std::size_t len = mcfg.encoder.max_len;
    res.lstm = detail::select_by_dev(
        "lstm", [&] { return std::make_unique<LstmClassifier>(cfg, seed); }, detail::seeded(mcfg.lstm_train, seed),
        mcfg.lr_grid, encode_examples(ft.train, words, len), encode_examples(ft.dev, words, len),
        encode_examples(ft.test, words, len), log);
  }

  // One subword vocabulary for every encoder variant, built from the pre-training corpus.
  const Vocabulary sub = build_subword_vocab(data.pretrain_train, mcfg.subword_vocab_size, mcfg.subword_merge_cap);
  EncoderConfig ecfg = mcfg.encoder;
  ecfg.vocab_size = sub.size();
  const auto train = encode_examples(ft.train, sub, ecfg.max_len);
  const auto dev = encode_examples(ft.dev, sub, ecfg.max_len);
  const auto test = encode_examples(ft.test, sub, ecfg.max_len);

  res.supervised = detail::select_by_dev(
      "encoder_supervised",
      [&] { return std::make_unique<EncoderClassifier>(ecfg, HeadConfig{mcfg.pooling, mcfg.head_dropout, false}, seed); },
      detail::seeded(mcfg.finetune, seed), mcfg.lr_grid, train, dev, test, log);

  MlmModel mlm(ecfg, seed);
  {
    const auto t0 = std::chrono::steady_clock::now();
    res.pretrain = train_mlm(mlm, detail::seeded(mcfg.pretrain, seed), detail::encode_texts(data.pretrain_train, sub, ecfg.max_len),
                             detail::encode_texts(data.pretrain_dev, sub, ecfg.max_len), detail::epoch_logger(log, "pretrain"));
    res.pretrain.label = "mlm_pretrain";
    res.pretrain_seconds = detail::seconds_since(t0);
  }

  for (bool frozen : {false, true}) {
    auto make = [&] {
      auto m = std::make_unique<EncoderClassifier>(ecfg, HeadConfig{mcfg.pooling, mcfg.head_dropout, frozen}, seed);
      m->params().copy_from(mlm.params(), "encoder.");
      return m;
    };
    (frozen ? res.frozen : res.pretrained) =
        detail::select_by_dev(frozen ? "encoder_pretrained_frozen" : "encoder_pretrained", make,
                              detail::seeded(frozen ? mcfg.frozen : mcfg.finetune, seed), mcfg.lr_grid, train, dev, test, log);
  }
  return res;
}

}  // namespace mapspell
