#pragma once

// Pre-norm transformer encoder with a masked-LM head and a sequence
// classification head.
//
//   x0      = tok[ids] + pos[0..T)
//   x(l+1)  = x' + FF(LN2(x')),   x' = x(l) + Attn(LN1(x(l)))
//   encode() returns every x(l+1) un-normalized; heads apply the shared
//   final norm "ln_f" before reading them.

#include <json.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mapspell/batch.hpp"
#include "mapspell/nn.hpp"

namespace mapspell {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t n_layers = 4;
  std::size_t hidden_dim = 128;
  std::size_t n_heads = 4;
  std::size_t ff_dim = 512;
  std::size_t max_len = 32;
  double dropout_p = 0.1;

  void validate() const {
    if (vocab_size <= kNumSpecial) throw ConfigError("encoder: vocab_size must exceed the special tokens");
    if (n_layers < 1 || hidden_dim < 1 || n_heads < 1 || ff_dim < 1 || max_len < 2)
      throw ConfigError("encoder: sizes must be positive and max_len >= 2");
    if (hidden_dim % n_heads != 0) throw ConfigError("encoder: hidden_dim must be divisible by n_heads");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("encoder: dropout_p must lie in [0,1)");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

inline constexpr std::size_t kFullLayers = 8;
inline constexpr std::size_t kSlimLayers = kFullLayers / 2;

inline EncoderConfig encoder_preset(const std::string& name, std::size_t vocab_size) {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  if (name == "full") c.n_layers = kFullLayers;
  else if (name == "slim") c.n_layers = kSlimLayers;
  else throw ConfigError("unknown encoder preset '" + name + "' (expected full or slim)");
  return c;
}

inline nlohmann::ordered_json to_json(const EncoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"n_layers", c.n_layers}, {"hidden_dim", c.hidden_dim}, {"n_heads", c.n_heads},
          {"ff_dim", c.ff_dim},         {"max_len", c.max_len},   {"dropout_p", c.dropout_p}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.ff_dim = j.at("ff_dim").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.dropout_p = j.at("dropout_p").get<double>();
  return c;
}

/// Multi-head self-attention over x[B, T, H]; keys with valid == 0 get zero weight.
inline Tensor attention(const Tensor& x, const std::vector<std::uint8_t>& valid, std::size_t heads, const Tensor& w_qkv,
                        const Tensor& b_qkv, const Tensor& w_o, const Tensor& b_o) {
  const std::size_t B = x.dim(0), H = x.dim(2);
  const Tensor qkv = linear(x, w_qkv, b_qkv);
  const Tensor q = ops::split_heads(ops::slice(qkv, 0, H), heads);
  const Tensor k = ops::split_heads(ops::slice(qkv, H, 2 * H), heads);
  const Tensor v = ops::split_heads(ops::slice(qkv, 2 * H, 3 * H), heads);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(H / heads));
  const Tensor probs = ops::masked_softmax(ops::scale(ops::bmm(q, k, true), inv_sqrt_d), valid, B);
  return linear(ops::merge_heads(ops::bmm(probs, v), heads), w_o, b_o);
}

inline Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
  return linear(ops::gelu(linear(x, w1, b1)), w2, b2);
}

class Encoder {
 public:
  /// Registers parameters under "encoder." in `store`.
  Encoder(EncoderConfig cfg, ParamStore& store, Rng& rng) : cfg_(cfg), store_(&store) {
    cfg_.validate();
    const std::size_t H = cfg_.hidden_dim;
    store.add("encoder.tok_embed", {cfg_.vocab_size, H}, Init::Embedding, rng);
    store.add("encoder.pos_embed", {cfg_.max_len, H}, Init::Embedding, rng);
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      const std::string p = layer_prefix(l);
      store.add(p + "ln1.g", {H}, Init::Ones, rng);
      store.add(p + "ln1.b", {H}, Init::Zeros, rng);
      store.add(p + "attn.w_qkv", {H, 3 * H}, Init::Xavier, rng);
      store.add(p + "attn.b_qkv", {3 * H}, Init::Zeros, rng);
      store.add(p + "attn.w_o", {H, H}, Init::Xavier, rng);
      store.add(p + "attn.b_o", {H}, Init::Zeros, rng);
      store.add(p + "ln2.g", {H}, Init::Ones, rng);
      store.add(p + "ln2.b", {H}, Init::Zeros, rng);
      store.add(p + "ff.w1", {H, cfg_.ff_dim}, Init::Xavier, rng);
      store.add(p + "ff.b1", {cfg_.ff_dim}, Init::Zeros, rng);
      store.add(p + "ff.w2", {cfg_.ff_dim, H}, Init::Xavier, rng);
      store.add(p + "ff.b2", {H}, Init::Zeros, rng);
    }
    store.add("encoder.ln_f.g", {H}, Init::Ones, rng);
    store.add("encoder.ln_f.b", {H}, Init::Zeros, rng);
  }

  static std::string layer_prefix(std::size_t l) { return "encoder.layers." + std::to_string(l) + "."; }

  /// Per-layer residual streams, each [B, T, H].
  std::vector<Tensor> encode(const TokenBatch& batch, const ForwardCtx& ctx) const {
    if (batch.T > cfg_.max_len)
      throw ShapeError("encoder: sequence length " + std::to_string(batch.T) + " exceeds max_len " + std::to_string(cfg_.max_len));
    const std::size_t B = batch.B, T = batch.T;
    const auto valid = batch.valid_mask();
    std::vector<std::size_t> positions(T);
    for (std::size_t t = 0; t < T; ++t) positions[t] = t;
    Tensor x = ops::add(ops::embedding(p("encoder.tok_embed"), batch.ids, {B, T}),
                        ops::gather_rows(p("encoder.pos_embed"), positions));
    x = ops::dropout(x, cfg_.dropout_p, ctx.train, {ctx.seed, 1, ctx.step});
    std::vector<Tensor> states;
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      const std::string pre = layer_prefix(l);
      const Tensor a = attention(ops::layer_norm(x, p(pre + "ln1.g"), p(pre + "ln1.b")), valid, cfg_.n_heads,
                                 p(pre + "attn.w_qkv"), p(pre + "attn.b_qkv"), p(pre + "attn.w_o"), p(pre + "attn.b_o"));
      x = ops::add(x, ops::dropout(a, cfg_.dropout_p, ctx.train, {ctx.seed, 2 + 2 * l, ctx.step}));
      const Tensor f = feed_forward(ops::layer_norm(x, p(pre + "ln2.g"), p(pre + "ln2.b")), p(pre + "ff.w1"),
                                    p(pre + "ff.b1"), p(pre + "ff.w2"), p(pre + "ff.b2"));
      x = ops::add(x, ops::dropout(f, cfg_.dropout_p, ctx.train, {ctx.seed, 3 + 2 * l, ctx.step}));
      states.push_back(x);
    }
    return states;
  }

  Tensor final_norm(const Tensor& x) const { return ops::layer_norm(x, p("encoder.ln_f.g"), p("encoder.ln_f.b")); }

  const EncoderConfig& config() const { return cfg_; }

 private:
  Tensor p(const std::string& name) const { return store_->get(name); }

  EncoderConfig cfg_;
  ParamStore* store_;
};

// ---------------------------------------------------------------------------
// Classification head

enum class Pooling { LastLayerCls, AvgLast4Cls };

inline std::string to_string(Pooling p) { return p == Pooling::LastLayerCls ? "last_layer_cls" : "avg_last4_cls"; }

inline Pooling pooling_from_string(const std::string& s) {
  if (s == "last_layer_cls") return Pooling::LastLayerCls;
  if (s == "avg_last4_cls") return Pooling::AvgLast4Cls;
  throw ConfigError("unknown pooling '" + s + "' (expected last_layer_cls or avg_last4_cls)");
}

struct HeadConfig {
  Pooling pooling = Pooling::LastLayerCls;
  double dropout_p = 0.3;
  bool encoder_frozen = false;
};

inline nlohmann::ordered_json to_json(const HeadConfig& h) {
  return {{"pooling", to_string(h.pooling)}, {"dropout_p", h.dropout_p}, {"encoder_frozen", h.encoder_frozen}};
}

inline HeadConfig head_config_from_json(const nlohmann::json& j) {
  return {pooling_from_string(j.at("pooling").get<std::string>()), j.at("dropout_p").get<double>(),
          j.at("encoder_frozen").get<bool>()};
}

/// Pooled CLS vector [B, H] from per-layer states. avg_last4 sums pairwise
/// ((a+b)+(c+d))/4, which is exact when all four inputs are equal.
inline Tensor pool_cls(const std::vector<Tensor>& states, const Encoder& enc, Pooling pooling) {
  const std::size_t B = states.back().dim(0), T = states.back().dim(1);
  std::vector<std::size_t> cls(B);
  for (std::size_t b = 0; b < B; ++b) cls[b] = b * T;
  if (pooling == Pooling::LastLayerCls) return enc.final_norm(ops::gather_rows(states.back(), cls));
  if (states.size() < 4) throw ConfigError("avg_last4_cls needs at least 4 encoder layers, have " + std::to_string(states.size()));
  const std::size_t L = states.size();
  std::vector<Tensor> v;
  for (std::size_t l = L - 4; l < L; ++l) v.push_back(enc.final_norm(ops::gather_rows(states[l], cls)));
  return ops::scale(ops::add(ops::add(v[0], v[1]), ops::add(v[2], v[3])), 0.25);
}

/// Encoder + pooled linear classifier, parameters under "encoder." and "head.".
class EncoderClassifier {
 public:
  EncoderClassifier(EncoderConfig enc_cfg, HeadConfig head, std::uint64_t seed)
      : rng_(derive_seed(seed, 0xc1a55)), head_(head), encoder_(enc_cfg, params_, rng_) {
    if (head_.pooling == Pooling::AvgLast4Cls && enc_cfg.n_layers < 4)
      throw ConfigError("avg_last4_cls needs at least 4 encoder layers, have " + std::to_string(enc_cfg.n_layers));
    if (!(head_.dropout_p >= 0.0 && head_.dropout_p < 1.0)) throw ConfigError("head: dropout_p must lie in [0,1)");
    params_.add("head.w", {enc_cfg.hidden_dim, 2}, Init::Xavier, rng_);
    params_.add("head.b", {2}, Init::Zeros, rng_);
    set_encoder_frozen(head_.encoder_frozen);
  }
  EncoderClassifier(const EncoderClassifier&) = delete;
  EncoderClassifier& operator=(const EncoderClassifier&) = delete;

  void set_encoder_frozen(bool frozen) {
    head_.encoder_frozen = frozen;
    params_.set_trainable("encoder.", !frozen);
  }

  /// Head logits [B, 2] from per-layer states.
  Tensor head_logits(const std::vector<Tensor>& states, const ForwardCtx& ctx) const {
    Tensor pooled = pool_cls(states, encoder_, head_.pooling);
    pooled = ops::dropout(pooled, head_.dropout_p, ctx.train, {ctx.seed, 0x4ead, ctx.step});
    return linear(pooled, params_.get("head.w"), params_.get("head.b"));
  }

  Tensor logits(const TokenBatch& batch, const ForwardCtx& ctx) const {
    std::vector<Tensor> states;
    if (head_.encoder_frozen) {
      // Nothing upstream of the head needs a graph.
      NoGradGuard ng;
      states = encoder_.encode(batch, ctx);
    } else {
      states = encoder_.encode(batch, ctx);
    }
    return head_logits(states, ctx);
  }

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Encoder& encoder() const { return encoder_; }
  const HeadConfig& head_config() const { return head_; }

 private:
  ParamStore params_;
  Rng rng_;
  HeadConfig head_;
  Encoder encoder_;
};

// ---------------------------------------------------------------------------
// Masked language modeling

inline constexpr std::int32_t kIgnore = -1;

struct MlmExample {
  std::vector<TokenId> corrupted;
  std::vector<std::int32_t> targets;  // kIgnore where nothing is predicted
};

/// Selects max(1, round(rate * n_maskable)) non-special positions; each is
/// replaced by MASK (80%), a random non-special token (10%) or kept (10%).
/// Returns nullopt when nothing is maskable.
inline std::optional<MlmExample> mlm_mask(const std::vector<TokenId>& ids, std::size_t vocab_size, std::uint64_t seed,
                                          double rate = 0.15) {
  std::vector<std::size_t> maskable;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] >= kNumSpecial) maskable.push_back(i);
  if (maskable.empty()) return std::nullopt;
  if (vocab_size <= static_cast<std::size_t>(kNumSpecial)) throw ConfigError("mlm_mask: vocabulary has no ordinary tokens");
  const auto want = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(rate * static_cast<double>(maskable.size()))));
  Rng rng(seed);
  rng.shuffle(maskable);
  maskable.resize(std::min(want, maskable.size()));
  std::sort(maskable.begin(), maskable.end());
  MlmExample ex{ids, std::vector<std::int32_t>(ids.size(), kIgnore)};
  for (std::size_t pos : maskable) {
    ex.targets[pos] = ids[pos];
    const double u = rng.uniform();
    if (u < 0.8) ex.corrupted[pos] = kMask;
    else if (u < 0.9) ex.corrupted[pos] = static_cast<TokenId>(kNumSpecial + rng.below(vocab_size - kNumSpecial));
  }
  return ex;
}

/// Encoder + untied output projection, parameters under "encoder." and "mlm.".
class MlmModel {
 public:
  MlmModel(EncoderConfig cfg, std::uint64_t seed) : rng_(derive_seed(seed, 0x313)), encoder_(cfg, params_, rng_) {
    params_.add("mlm.w", {cfg.hidden_dim, cfg.vocab_size}, Init::Xavier, rng_);
    params_.add("mlm.b", {cfg.vocab_size}, Init::Zeros, rng_);
  }
  MlmModel(const MlmModel&) = delete;
  MlmModel& operator=(const MlmModel&) = delete;

  /// Mean cross-entropy at positions with a target; nullopt when the batch has none.
  std::optional<Tensor> loss(const TokenBatch& corrupted, const std::vector<std::int32_t>& targets, const ForwardCtx& ctx) const {
    if (targets.size() != corrupted.ids.size()) throw ShapeError("mlm: targets do not match the batch");
    std::vector<std::size_t> rows;
    std::vector<std::int32_t> picked;
    for (std::size_t i = 0; i < targets.size(); ++i)
      if (targets[i] != kIgnore) {
        rows.push_back(i);
        picked.push_back(targets[i]);
      }
    if (rows.empty()) return std::nullopt;
    const auto states = encoder_.encode(corrupted, ctx);
    const Tensor h = encoder_.final_norm(ops::gather_rows(states.back(), rows));
    return ops::cross_entropy(linear(h, params_.get("mlm.w"), params_.get("mlm.b")), picked);
  }

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Encoder& encoder() const { return encoder_; }

 private:
  ParamStore params_;
  Rng rng_;
  Encoder encoder_;
};

}  // namespace mapspell
