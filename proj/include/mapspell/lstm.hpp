#pragma once

// Single-direction LSTM classifier: embed -> LSTM -> final non-PAD hidden
// state -> linear(hidden, 2).

#include <json.hpp>

#include <string>
#include <utility>

#include "mapspell/batch.hpp"
#include "mapspell/nn.hpp"

namespace mapspell {

struct LstmConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 50;
  std::size_t hidden_dim = 50;
  bool embeddings_trainable = true;
  std::string external_embeddings;  // path, empty for self-trained

  void validate() const {
    if (vocab_size <= kNumSpecial) throw ConfigError("lstm: vocab_size must exceed the special tokens");
    if (embed_dim < 1 || hidden_dim < 1) throw ConfigError("lstm: dims must be >= 1");
  }
};

inline nlohmann::ordered_json to_json(const LstmConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"embeddings_trainable", c.embeddings_trainable},
          {"external_embeddings", c.external_embeddings}};
}

inline LstmConfig lstm_config_from_json(const nlohmann::json& j) {
  LstmConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.embeddings_trainable = j.at("embeddings_trainable").get<bool>();
  c.external_embeddings = j.value("external_embeddings", "");
  return c;
}

/// One step. xw_t = x_t·W_x + b, precomputed for all steps; gate order i, f, g, o.
inline std::pair<Tensor, Tensor> lstm_cell(const Tensor& xw_t, const Tensor& h, const Tensor& c, const Tensor& w_h) {
  const std::size_t H = h.shape().back();
  const Tensor z = ops::add(xw_t, ops::matmul(h, w_h));
  const Tensor i = ops::sigmoid(ops::slice(z, 0, H));
  const Tensor f = ops::sigmoid(ops::slice(z, H, 2 * H));
  const Tensor g = ops::tanh(ops::slice(z, 2 * H, 3 * H));
  const Tensor o = ops::sigmoid(ops::slice(z, 3 * H, 4 * H));
  Tensor c_next = ops::add(ops::mul(f, c), ops::mul(i, g));
  Tensor h_next = ops::mul(o, ops::tanh(c_next));
  return {std::move(h_next), std::move(c_next)};
}

class LstmClassifier {
 public:
  LstmClassifier(LstmConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0x15747));
    const std::size_t E = cfg_.embed_dim, H = cfg_.hidden_dim;
    params_.add("embed.weight", {cfg_.vocab_size, E}, Init::Embedding, rng);
    params_.add("lstm.w_x", {E, 4 * H}, Init::Xavier, rng);
    params_.add("lstm.w_h", {H, 4 * H}, Init::Xavier, rng);
    params_.add("lstm.b", {4 * H}, Init::Zeros, rng);
    params_.add("out.w", {H, 2}, Init::Xavier, rng);
    params_.add("out.b", {2}, Init::Zeros, rng);
    params_.set_trainable("embed.", cfg_.embeddings_trainable);
  }
  LstmClassifier(const LstmClassifier&) = delete;
  LstmClassifier& operator=(const LstmClassifier&) = delete;

  /// Replaces the embedding table (e.g. with external vectors).
  void set_embeddings(const std::vector<double>& values) {
    Tensor e = params_.get("embed.weight");
    if (values.size() != e.size()) throw ShapeError("lstm: embedding table size mismatch");
    e.data() = values;
  }

  Tensor logits(const TokenBatch& batch, const ForwardCtx& = {}) const {
    for (std::size_t b = 0; b < batch.B; ++b)
      if (batch.lengths[b] == 0) throw ContractError("lstm: sequence " + std::to_string(b) + " is all PAD");
    const std::size_t B = batch.B, T = batch.T, H = cfg_.hidden_dim;
    const Tensor emb = ops::embedding(params_.get("embed.weight"), batch.ids, {B, T});
    const Tensor xw = linear(emb, params_.get("lstm.w_x"), params_.get("lstm.b"));
    const Tensor w_h = params_.get("lstm.w_h");
    Tensor h = Tensor::zeros({B, H});
    Tensor c = Tensor::zeros({B, H});
    std::vector<std::size_t> rows(B);
    std::vector<std::uint8_t> live(B);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t b = 0; b < B; ++b) {
        rows[b] = b * T + t;
        live[b] = batch.at(b, t) != kPad;
      }
      auto [h_next, c_next] = lstm_cell(ops::gather_rows(xw, rows), h, c, w_h);
      // PAD steps carry the previous state forward, so h ends at the last real token.
      h = ops::where_rows(live, h_next, h);
      c = ops::where_rows(live, c_next, c);
    }
    return linear(h, params_.get("out.w"), params_.get("out.b"));
  }

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const LstmConfig& config() const { return cfg_; }

 private:
  LstmConfig cfg_;
  ParamStore params_;
};

}  // namespace mapspell
