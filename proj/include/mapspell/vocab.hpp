#pragma once

// Word and subword vocabularies.
//
// Ids 0..4 are reserved: [PAD] [UNK] [CLS] [SEP] [MASK]. The file format is
// one token per line, line number (0-based) = id. Subword pieces that start a
// word carry the U+2581 marker. The normalizer deletes that symbol from query
// text, so a word vocabulary never contains it and a subword vocabulary
// always does; load() uses this to recover the kind.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include "mapspell/error.hpp"
#include "mapspell/unicode.hpp"

namespace mapspell {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kCls = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kMask = 4;
inline constexpr TokenId kNumSpecial = 5;
inline constexpr std::string_view kWordMarker = "\xE2\x96\x81";  // U+2581

enum class VocabKind { Word, Subword };

/// Hex SHA-256 of a byte string.
inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

class Vocabulary {
 public:
  Vocabulary(VocabKind kind, std::vector<std::string> tokens, std::size_t max_size)
      : kind_(kind), tokens_(std::move(tokens)), max_size_(max_size) {
    static const char* specials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
    if (tokens_.size() < kNumSpecial) throw ConfigError("vocabulary: missing special tokens");
    for (TokenId i = 0; i < kNumSpecial; ++i)
      if (tokens_[static_cast<std::size_t>(i)] != specials[i]) throw ConfigError("vocabulary: special ids 0-4 out of place");
    if (tokens_.size() > max_size_) throw ConfigError("vocabulary: more tokens than max_size");
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
        throw ConfigError("vocabulary: duplicate token '" + tokens_[i] + "'");
  }

  VocabKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t max_size() const noexcept { return max_size_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  TokenId id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(std::string_view token) const { return index_.contains(std::string(token)); }

  /// File content: tokens joined by '\n', trailing newline.
  std::string serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
      out += t;
      out += '\n';
    }
    return out;
  }

  std::string content_hash() const { return sha256_hex(serialize()); }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path, "cannot open for writing");
    out << serialize();
    if (!out) throw IoError(path, "write failed");
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open vocabulary");
    std::vector<std::string> tokens;
    std::string line;
    bool marker = false;
    while (std::getline(in, line)) {
      marker = marker || line.starts_with(kWordMarker);
      tokens.push_back(std::move(line));
    }
    const std::size_t n = std::max<std::size_t>(tokens.size(), kNumSpecial);
    try {
      return Vocabulary(marker ? VocabKind::Subword : VocabKind::Word, std::move(tokens), n);
    } catch (const ConfigError& e) {
      throw ParseError(path, 0, e.what());
    }
  }

 private:
  VocabKind kind_;
  std::vector<std::string> tokens_;
  std::size_t max_size_;
  std::unordered_map<std::string, TokenId> index_;
};

namespace detail {

inline std::vector<std::string> special_tokens() { return {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"}; }

inline std::vector<std::string> split_ws(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

// Code points of a word as strings; the first one carries the word marker.
inline std::vector<std::string> initial_symbols(std::string_view word) {
  std::vector<std::string> out;
  const std::u32string cps = to_u32(word);
  for (std::size_t i = 0; i < cps.size(); ++i) {
    std::string s = to_utf8(cps.substr(i, 1));
    out.push_back(i == 0 ? std::string(kWordMarker) + s : std::move(s));
  }
  return out;
}

}  // namespace detail

/// Tokens ranked by (frequency desc, token asc), truncated to fit max_size.
inline Vocabulary build_word_vocab(const std::vector<std::string>& corpus, std::size_t max_size) {
  if (corpus.empty()) throw ConfigError("build_word_vocab: empty corpus");
  if (max_size < kNumSpecial) throw ConfigError("build_word_vocab: max_size must be >= 5");
  std::map<std::string, std::int64_t> freq;
  for (const auto& line : corpus)
    for (auto& w : detail::split_ws(line)) ++freq[w];
  std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  auto tokens = detail::special_tokens();
  for (const auto& [w, n] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(w);
  }
  return Vocabulary(VocabKind::Word, std::move(tokens), max_size);
}

/// Greedy byte-pair-style merges over whitespace-separated words. Starts from
/// every observed symbol, then repeatedly merges the most frequent adjacent
/// pair (ties: smallest (left, right) pair) until target_size tokens, the
/// merge cap, or no pair occurs at least twice.
inline Vocabulary build_subword_vocab(const std::vector<std::string>& corpus, std::size_t target_size,
                                      std::size_t n_merges_cap = std::numeric_limits<std::size_t>::max()) {
  if (corpus.empty()) throw ConfigError("build_subword_vocab: empty corpus");
  if (target_size <= kNumSpecial) throw ConfigError("build_subword_vocab: target_size must be > 5");

  std::map<std::string, std::int64_t> word_freq;
  for (const auto& line : corpus)
    for (auto& w : detail::split_ws(line)) ++word_freq[w];

  // Symbols are interned; pair counts are kept incrementally together with
  // an ordered queue of (-count, left, right) so each merge is local.
  std::vector<std::string> sym_str;
  std::unordered_map<std::string, int> sym_id;
  auto intern = [&](const std::string& s) {
    auto [it, fresh] = sym_id.emplace(s, static_cast<int>(sym_str.size()));
    if (fresh) sym_str.push_back(s);
    return it->second;
  };
  std::vector<std::vector<int>> words;
  std::vector<std::int64_t> freqs;
  std::map<std::string, std::int64_t> sym_freq;
  for (const auto& [w, n] : word_freq) {
    std::vector<int> ids;
    for (const auto& s : detail::initial_symbols(w)) {
      ids.push_back(intern(s));
      sym_freq[s] += n;
    }
    words.push_back(std::move(ids));
    freqs.push_back(n);
  }

  std::vector<std::pair<std::string, std::int64_t>> alphabet(sym_freq.begin(), sym_freq.end());
  std::stable_sort(alphabet.begin(), alphabet.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  auto tokens = detail::special_tokens();
  for (const auto& [s, n] : alphabet) {
    if (tokens.size() >= target_size) break;
    tokens.push_back(s);
  }
  std::unordered_map<std::string, bool> known;
  for (const auto& t : tokens) known[t] = true;

  auto key = [](int l, int r) { return (static_cast<std::uint64_t>(l) << 32) | static_cast<std::uint32_t>(r); };
  std::unordered_map<std::uint64_t, std::int64_t> pair_count;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> pair_words;  // may hold stale entries
  std::set<std::tuple<std::int64_t, std::string, std::string>> queue;
  auto bump = [&](int l, int r, std::int64_t delta, std::size_t w) {
    const auto k = key(l, r);
    std::int64_t& c = pair_count[k];
    if (c > 0) queue.erase({-c, sym_str[static_cast<std::size_t>(l)], sym_str[static_cast<std::size_t>(r)]});
    c += delta;
    if (c > 0) queue.insert({-c, sym_str[static_cast<std::size_t>(l)], sym_str[static_cast<std::size_t>(r)]});
    if (delta > 0) pair_words[k].push_back(w);
  };
  auto account = [&](std::size_t w, std::int64_t sign) {
    const auto& syms = words[w];
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) bump(syms[i], syms[i + 1], sign * freqs[w], w);
  };
  for (std::size_t w = 0; w < words.size(); ++w) account(w, +1);

  for (std::size_t merges = 0; merges < n_merges_cap && tokens.size() < target_size && !queue.empty(); ++merges) {
    const auto [neg_count, left_s, right_s] = *queue.begin();
    if (-neg_count < 2) break;
    const int left = sym_id.at(left_s), right = sym_id.at(right_s);
    const std::string merged_s = left_s + right_s;
    const int merged = intern(merged_s);

    std::vector<std::size_t> affected = std::move(pair_words[key(left, right)]);
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
    for (std::size_t w : affected) {
      auto& syms = words[w];
      bool present = false;
      for (std::size_t i = 0; i + 1 < syms.size() && !present; ++i) present = syms[i] == left && syms[i + 1] == right;
      if (!present) continue;
      account(w, -1);
      std::vector<int> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(syms[i]);
        }
      }
      syms = std::move(next);
      account(w, +1);
    }
    if (!known[merged_s]) {
      known[merged_s] = true;
      tokens.push_back(merged_s);
    }
  }
  return Vocabulary(VocabKind::Subword, std::move(tokens), target_size);
}

/// Subword pieces of one word: starting from symbols, repeatedly merge the
/// adjacent pair whose concatenation has the lowest id in the vocabulary.
inline std::vector<TokenId> encode_word_pieces(std::string_view word, const Vocabulary& vocab) {
  std::vector<std::string> syms = detail::initial_symbols(word);
  while (syms.size() > 1) {
    TokenId best = std::numeric_limits<TokenId>::max();
    std::size_t at = 0;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      const std::string cat = syms[i] + syms[i + 1];
      if (vocab.contains(cat)) {
        const TokenId id = vocab.id(cat);
        if (id < best) {
          best = id;
          at = i;
        }
      }
    }
    if (best == std::numeric_limits<TokenId>::max()) break;
    syms[at] += syms[at + 1];
    syms.erase(syms.begin() + static_cast<std::ptrdiff_t>(at) + 1);
  }
  std::vector<TokenId> ids;
  ids.reserve(syms.size());
  for (const auto& s : syms) ids.push_back(vocab.id(s));
  return ids;
}

/// Subword: [CLS] pieces [SEP] then PAD up to max_len; over-long content is
/// cut from its end so CLS and SEP always survive.
/// Word: one id per token (UNK fallback), truncated or PAD-filled to max_len.
inline std::vector<TokenId> encode(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
  std::vector<TokenId> ids;
  if (vocab.kind() == VocabKind::Subword) {
    if (max_len < 2) throw ConfigError("encode: max_len must be >= 2 for subword vocabularies");
    std::vector<TokenId> content;
    for (const auto& w : detail::split_ws(text)) {
      const auto pieces = encode_word_pieces(w, vocab);
      content.insert(content.end(), pieces.begin(), pieces.end());
    }
    if (content.size() > max_len - 2) content.resize(max_len - 2);
    ids.push_back(kCls);
    ids.insert(ids.end(), content.begin(), content.end());
    ids.push_back(kSep);
  } else {
    for (const auto& w : detail::split_ws(text)) {
      if (ids.size() == max_len) break;
      ids.push_back(vocab.id(w));
    }
  }
  ids.resize(max_len, kPad);
  return ids;
}

/// Inverse of encode for known tokens. Special ids other than UNK are dropped.
inline std::string decode(const std::vector<TokenId>& ids, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    if (id == kPad || id == kCls || id == kSep || id == kMask) continue;
    const std::string& tok = vocab.token(id);
    if (vocab.kind() == VocabKind::Word) {
      if (!out.empty()) out += ' ';
      out += tok;
    } else if (tok.starts_with(kWordMarker)) {
      if (!out.empty()) out += ' ';
      out += tok.substr(kWordMarker.size());
    } else {
      out += tok;
    }
  }
  return out;
}

/// Number of leading non-PAD ids (PAD only ever forms a suffix).
inline std::size_t unpadded_length(const std::vector<TokenId>& ids) {
  std::size_t n = ids.size();
  while (n > 0 && ids[n - 1] == kPad) --n;
  return n;
}

}  // namespace mapspell
