#pragma once

// Training loops and evaluation for the classifiers and MLM pre-training.

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mapspell/batch.hpp"
#include "mapspell/dataset.hpp"
#include "mapspell/encoder.hpp"
#include "mapspell/metrics.hpp"
#include "mapspell/normalizer.hpp"
#include "mapspell/optim.hpp"

namespace mapspell {

enum class Task { MlmPretrain, Finetune, Lstm };

inline std::string to_string(Task t) {
  switch (t) {
    case Task::MlmPretrain: return "mlm_pretrain";
    case Task::Finetune: return "finetune";
    case Task::Lstm: return "lstm";
  }
  return "?";
}

struct TrainConfig {
  Task task = Task::Finetune;
  std::size_t max_epochs = 4;
  std::size_t batch_size = 32;
  double lr = 3e-5;
  std::uint64_t seed = 42;

  void validate() const {
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr > 0.0 && std::isfinite(lr))) throw ConfigError("train: lr must be positive");
  }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"task", to_string(c.task)}, {"max_epochs", c.max_epochs}, {"batch_size", c.batch_size}, {"lr", c.lr}, {"seed", c.seed}};
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<MetricsReport> dev;  // classifiers
  std::optional<double> dev_loss;    // MLM
  double seconds = 0.0;
};

struct TrainHistory {
  std::string label;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::optional<double> initial_dev_loss;  // MLM only, before the first update

  const EpochRecord& best() const { return epochs.at(best_epoch - 1); }
};

/// 1-based index of the first maximum.
inline std::size_t best_epoch_by_max(const std::vector<double>& series) {
  if (series.empty()) throw ContractError("best epoch of an empty series");
  return static_cast<std::size_t>(std::max_element(series.begin(), series.end()) - series.begin()) + 1;
}

/// JSON-lines: one object per epoch, then a summary line. Timings stay out so
/// identical runs write identical files; the run manifest carries wall time.
inline std::string history_jsonl(const TrainHistory& h) {
  std::string out;
  for (const auto& e : h.epochs) {
    nlohmann::ordered_json j{{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    if (e.dev) j["dev"] = to_json(*e.dev);
    if (e.dev_loss) j["dev_loss"] = *e.dev_loss;
    out += j.dump() + "\n";
  }
  nlohmann::ordered_json s{{"label", h.label}, {"best_epoch", h.best_epoch}};
  if (h.initial_dev_loss) s["initial_dev_loss"] = *h.initial_dev_loss;
  if (!h.epochs.empty() && h.best().dev) {
    s["best_macro_f1"] = headline_f1(*h.best().dev);
    s["best_f1_class1"] = h.best().dev->misspelt.f1;
  }
  if (!h.epochs.empty() && h.best().dev_loss) s["best_dev_loss"] = *h.best().dev_loss;
  out += s.dump() + "\n";
  return out;
}

inline TrainHistory history_from_jsonl(const std::string& text, const std::string& source) {
  TrainHistory h;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("epoch")) {
        EpochRecord e;
        e.epoch = j.at("epoch").get<std::size_t>();
        e.train_loss = j.at("train_loss").get<double>();
        if (j.contains("dev")) e.dev = report_from_json(j.at("dev"));
        if (j.contains("dev_loss")) e.dev_loss = j.at("dev_loss").get<double>();
        h.epochs.push_back(e);
      } else {
        h.label = j.value("label", "");
        h.best_epoch = j.at("best_epoch").get<std::size_t>();
        if (j.contains("initial_dev_loss")) h.initial_dev_loss = j.at("initial_dev_loss").get<double>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  if (h.best_epoch == 0 || h.best_epoch > h.epochs.size()) throw ParseError(source, 0, "history has no valid summary line");
  return h;
}

// ---------------------------------------------------------------------------
// Data preparation

struct EncodedSet {
  std::vector<std::vector<TokenId>> ids;
  std::vector<int> labels;
  std::size_t size() const { return ids.size(); }
};

inline EncodedSet encode_examples(const std::vector<LabeledExample>& rows, const Vocabulary& vocab, std::size_t max_len) {
  EncodedSet s;
  for (const auto& r : rows) {
    s.ids.push_back(encode(normalize_text(r.query), vocab, max_len));
    s.labels.push_back(r.is_misspelt ? 1 : 0);
  }
  return s;
}

namespace detail {

// Shuffled batches whose members have similar lengths: shuffle, sort each
// window of 50 batches by length, cut, then shuffle batch order.
inline std::vector<std::vector<std::size_t>> length_bucketed_batches(const std::vector<std::vector<TokenId>>& ids,
                                                                     std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const std::size_t window = batch_size * 50;
  for (std::size_t w = 0; w < order.size(); w += window) {
    const auto b = order.begin() + static_cast<std::ptrdiff_t>(w);
    const auto e = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), w + window));
    std::stable_sort(b, e, [&](std::size_t x, std::size_t y) { return unpadded_length(ids[x]) < unpadded_length(ids[y]); });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  rng.shuffle(batches);
  return batches;
}

inline TokenBatch gather_batch(const std::vector<std::vector<TokenId>>& ids, const std::vector<std::size_t>& idx) {
  std::vector<const std::vector<TokenId>*> ptrs;
  ptrs.reserve(idx.size());
  for (std::size_t i : idx) ptrs.push_back(&ids[i]);
  return make_batch(ptrs);
}

inline void check_finite(double loss, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(loss))
    throw TrainingDiverged("non-finite loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step));
}

}  // namespace detail

/// Class-1 probabilities in eval mode. Batches are formed over length-sorted
/// order so padding stays small; results come back in input order.
template <class Model>
std::vector<double> predict_proba(const Model& model, const EncodedSet& data, std::size_t batch_size = 256) {
  NoGradGuard ng;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return unpadded_length(data.ids[a]) < unpadded_length(data.ids[b]); });
  std::vector<double> prob(data.size());
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(i),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
    const Tensor logits = model.logits(detail::gather_batch(data.ids, idx), ForwardCtx{});
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double a = logits.data()[2 * k], b = logits.data()[2 * k + 1];
      prob[idx[k]] = 1.0 / (1.0 + std::exp(a - b));
    }
  }
  return prob;
}

template <class Model>
MetricsReport evaluate_model(const Model& model, const EncodedSet& data) {
  const auto prob = predict_proba(model, data);
  std::vector<int> pred(prob.size());
  for (std::size_t i = 0; i < prob.size(); ++i) pred[i] = prob[i] >= 0.5 ? 1 : 0;
  return evaluate_predictions(pred, data.labels);
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Supervised training with per-epoch dev evaluation. On return the model
/// holds the parameters of the best dev macro-F1 epoch (earliest on ties).
template <class Model>
TrainHistory train_classifier(Model& model, const TrainConfig& cfg, const EncodedSet& train, const EncodedSet& dev,
                              const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train.size() == 0 || dev.size() == 0) throw DataError("train: empty train or dev set");
  Adam opt(model.params().trainable(), AdamConfig{cfg.lr});
  TrainHistory hist;
  std::vector<double> dev_f1;
  std::vector<std::vector<double>> best_params;
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(cfg.seed, epoch));
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& idx : detail::length_bucketed_batches(train.ids, cfg.batch_size, rng)) {
      const TokenBatch batch = detail::gather_batch(train.ids, idx);
      std::vector<std::int32_t> y;
      for (std::size_t i : idx) y.push_back(train.labels[i]);
      opt.zero_grad();
      const Tensor loss = ops::cross_entropy(model.logits(batch, ForwardCtx{true, cfg.seed, step}), y);
      detail::check_finite(loss.item(), epoch, step);
      if (!opt.params().empty()) {
        backward(loss);
        opt.step();
      }
      loss_sum += loss.item() * static_cast<double>(idx.size());
      seen += idx.size();
      ++step;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.dev = evaluate_model(model, dev);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    dev_f1.push_back(headline_f1(*rec.dev));
    if (best_epoch_by_max(dev_f1) == epoch) best_params = model.params().snapshot();
    hist.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  hist.best_epoch = best_epoch_by_max(dev_f1);
  model.params().restore(best_params);
  return hist;
}

// ---------------------------------------------------------------------------
// MLM pre-training

/// Mean masked-token loss over `data` with masks fixed by `mask_seed`.
inline double mlm_eval_loss(const MlmModel& model, const std::vector<std::vector<TokenId>>& data, std::uint64_t mask_seed,
                            std::size_t batch_size = 128) {
  NoGradGuard ng;
  const std::size_t V = model.encoder().config().vocab_size;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.size(); i += batch_size) {
    std::vector<std::vector<TokenId>> corrupted;
    std::vector<std::vector<std::int32_t>> targets;
    for (std::size_t k = i; k < std::min(data.size(), i + batch_size); ++k)
      if (auto ex = mlm_mask(data[k], V, derive_seed(mask_seed, k))) {
        corrupted.push_back(std::move(ex->corrupted));
        targets.push_back(std::move(ex->targets));
      }
    if (corrupted.empty()) continue;
    const TokenBatch batch = make_batch(corrupted);
    std::vector<std::int32_t> flat(batch.B * batch.T, kIgnore);
    std::size_t n = 0;
    for (std::size_t b = 0; b < batch.B; ++b)
      for (std::size_t t = 0; t < batch.T; ++t)
        if ((flat[b * batch.T + t] = targets[b][t]) != kIgnore) ++n;
    if (auto loss = model.loss(batch, flat, ForwardCtx{})) {
      total += loss->item() * static_cast<double>(n);
      count += n;
    }
  }
  if (count == 0) throw DataError("mlm: nothing maskable in evaluation data");
  return total / static_cast<double>(count);
}

/// MLM pre-training with dynamic masking (fresh masks each epoch). Best epoch
/// = lowest dev loss; the model keeps those parameters.
inline TrainHistory train_mlm(MlmModel& model, const TrainConfig& cfg, const std::vector<std::vector<TokenId>>& train,
                              const std::vector<std::vector<TokenId>>& dev, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train.empty() || dev.empty()) throw DataError("pretrain: empty train or dev corpus");
  const std::size_t V = model.encoder().config().vocab_size;
  const std::uint64_t dev_mask_seed = derive_seed(cfg.seed, 0xdef);
  Adam opt(model.params().trainable(), AdamConfig{cfg.lr});
  TrainHistory hist;
  hist.initial_dev_loss = mlm_eval_loss(model, dev, dev_mask_seed);
  std::vector<double> neg_dev;
  std::vector<std::vector<double>> best_params;
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(cfg.seed, epoch));
    const std::uint64_t mask_seed = derive_seed(cfg.seed, 0x1000 + epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& idx : detail::length_bucketed_batches(train, cfg.batch_size, rng)) {
      std::vector<std::vector<TokenId>> corrupted;
      std::vector<std::vector<std::int32_t>> targets;
      for (std::size_t i : idx)
        if (auto ex = mlm_mask(train[i], V, derive_seed(mask_seed, i))) {
          corrupted.push_back(std::move(ex->corrupted));
          targets.push_back(std::move(ex->targets));
        }
      if (corrupted.empty()) continue;
      const TokenBatch batch = make_batch(corrupted);
      std::vector<std::int32_t> flat(batch.B * batch.T, kIgnore);
      for (std::size_t b = 0; b < batch.B; ++b)
        for (std::size_t t = 0; t < batch.T; ++t) flat[b * batch.T + t] = targets[b][t];
      opt.zero_grad();
      auto loss = model.loss(batch, flat, ForwardCtx{true, cfg.seed, step});
      if (!loss) continue;
      detail::check_finite(loss->item(), epoch, step);
      backward(*loss);
      opt.step();
      loss_sum += loss->item() * static_cast<double>(batch.B);
      seen += batch.B;
      ++step;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    rec.dev_loss = mlm_eval_loss(model, dev, dev_mask_seed);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    neg_dev.push_back(-*rec.dev_loss);
    if (best_epoch_by_max(neg_dev) == epoch) best_params = model.params().snapshot();
    hist.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  hist.best_epoch = best_epoch_by_max(neg_dev);
  model.params().restore(best_params);
  return hist;
}

}  // namespace mapspell
