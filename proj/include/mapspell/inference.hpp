#pragma once

// Saving trained models and loading them back for prediction and evaluation.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>

#include "mapspell/checkpoint.hpp"
#include "mapspell/encoder.hpp"
#include "mapspell/lstm.hpp"
#include "mapspell/train.hpp"
#include "mapspell/vocab.hpp"

namespace mapspell {

inline constexpr std::size_t kLstmMaxLen = 32;

inline void save_lstm(const std::string& path, const LstmClassifier& m, const Vocabulary& vocab, const std::string& vocab_path) {
  save_checkpoint(path, "lstm", to_json(m.config()), vocab.content_hash(), vocab_path, m.params());
}

inline void save_encoder_classifier(const std::string& path, const EncoderClassifier& m, const Vocabulary& vocab,
                                    const std::string& vocab_path) {
  nlohmann::ordered_json cfg{{"encoder", to_json(m.encoder().config())}, {"head", to_json(m.head_config())}};
  save_checkpoint(path, "encoder+head", cfg, vocab.content_hash(), vocab_path, m.params());
}

/// Pre-trained encoder plus its MLM output layer.
inline void save_mlm(const std::string& path, const MlmModel& m, const Vocabulary& vocab, const std::string& vocab_path) {
  save_checkpoint(path, "encoder", to_json(m.encoder().config()), vocab.content_hash(), vocab_path, m.params());
}

/// The vocabulary a checkpoint refers to: `override_path` if given, else the
/// stored path (relative paths resolve against the checkpoint's directory
/// when they do not exist as given). The content hash must match.
inline Vocabulary vocab_for(const Checkpoint& ck, const std::string& ckpt_path, const std::optional<std::string>& override_path) {
  std::string p = override_path.value_or(ck.vocab_path);
  if (!override_path && !std::filesystem::exists(p)) {
    const auto alt = std::filesystem::path(ckpt_path).parent_path() / std::filesystem::path(p).filename();
    if (std::filesystem::exists(alt)) p = alt.string();
  }
  Vocabulary v = Vocabulary::load(p);
  require_vocab(ck, v.content_hash());
  return v;
}

struct Prediction {
  bool is_misspelt = false;
  double probability = 0.0;  // of the misspelt class
};

/// A trained classifier (LSTM or encoder + head) restored from a checkpoint.
class LoadedClassifier {
 public:
  static LoadedClassifier load(const std::string& ckpt_path, const std::optional<std::string>& vocab_path = std::nullopt) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    LoadedClassifier out(vocab_for(ck, ckpt_path, vocab_path));
    try {
      if (ck.arch == "lstm") {
        LstmConfig cfg = lstm_config_from_json(ck.config);
        auto m = std::make_unique<LstmClassifier>(cfg, 0);
        m->params().copy_from(ck.params, "");
        out.max_len_ = kLstmMaxLen;
        out.model_ = std::move(m);
      } else if (ck.arch == "encoder+head") {
        const EncoderConfig ecfg = encoder_config_from_json(ck.config.at("encoder"));
        auto m = std::make_unique<EncoderClassifier>(ecfg, head_config_from_json(ck.config.at("head")), 0);
        m->params().copy_from(ck.params, "");
        out.max_len_ = ecfg.max_len;
        out.model_ = std::move(m);
      } else {
        throw ConfigError(ckpt_path + ": checkpoint holds '" + ck.arch + "', not a classifier");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(ckpt_path, 0, std::string("bad model config: ") + e.what());
    }
    if (out.vocab_.size() != out.vocab_rows())
      throw ShapeError(ckpt_path + ": vocabulary has " + std::to_string(out.vocab_.size()) + " tokens, model expects " +
                       std::to_string(out.vocab_rows()));
    return out;
  }

  const Vocabulary& vocab() const { return vocab_; }
  std::string arch() const { return std::holds_alternative<std::unique_ptr<LstmClassifier>>(model_) ? "lstm" : "encoder+head"; }

  /// Normalize, encode, forward in eval mode. Empty normalized input is undecidable.
  Prediction predict(const std::string& query) const {
    const std::string norm = normalize_text(query);
    if (norm.empty()) throw DataError("predict: query is empty after normalization");
    EncodedSet one;
    one.ids.push_back(encode(norm, vocab_, max_len_));
    one.labels.push_back(0);
    const double p = std::visit([&](const auto& m) { return predict_proba(*m, one)[0]; }, model_);
    return {p >= 0.5, p};
  }

  MetricsReport evaluate(const std::vector<LabeledExample>& rows) const {
    if (rows.empty()) throw DataError("evaluate: empty dataset");
    const EncodedSet data = encode_examples(rows, vocab_, max_len_);
    return std::visit([&](const auto& m) { return evaluate_model(*m, data); }, model_);
  }

 private:
  explicit LoadedClassifier(Vocabulary v) : vocab_(std::move(v)) {}

  std::size_t vocab_rows() const {
    return std::visit([](const auto& m) { return m->params().tensors().front().dim(0); }, model_);
  }

  Vocabulary vocab_;
  std::size_t max_len_ = 0;
  std::variant<std::unique_ptr<LstmClassifier>, std::unique_ptr<EncoderClassifier>> model_;
};

}  // namespace mapspell
