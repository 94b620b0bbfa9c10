#pragma once

// Synthetic stand-in for production query logs: a gazetteer of POI and
// address entities, a keyboard typo channel, scripted keystroke sessions and
// a ground-truth file recording every injected misspelling.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mapspell/distance.hpp"
#include "mapspell/error.hpp"
#include "mapspell/keyboard.hpp"
#include "mapspell/normalizer.hpp"
#include "mapspell/rng.hpp"
#include "mapspell/session.hpp"
#include "mapspell/unicode.hpp"

namespace mapspell {

// ---------------------------------------------------------------------------
// Gazetteer

struct NameGrammar {
  std::size_t name_pool_size = 6000;  // distinct pseudo-word names
  double name_zipf = 1.0;             // skew of name reuse across entities
  double poi_share = 0.5;
  double address_share = 0.35;        // remainder is plain places
  double zipf_exponent = 1.1;         // entity popularity
};

struct Gazetteer {
  std::vector<std::string> entities;
  std::vector<double> weights;
};

namespace detail {

inline constexpr std::array<const char*, 40> kOnsets = {
    "",   "",   "",   "b",  "c",  "d",  "f",  "g",  "h",  "j",  "k",  "l",  "m",  "n",
    "p",  "r",  "s",  "t",  "v",  "w",  "y",  "z",  "br", "ch", "cl", "cr", "dr", "fl",
    "gr", "pl", "pr", "sh", "sl", "st", "th", "tr", "wh", "sp", "bl", "kr"};
inline constexpr std::array<const char*, 16> kNuclei = {"a", "e", "i", "o", "u", "a", "e", "i",
                                                        "o", "ai", "ea", "ee", "ie", "oo", "ou", "y"};
inline constexpr std::array<const char*, 18> kCodas = {"", "", "", "", "", "n", "r", "s", "l",
                                                       "t", "nd", "rt", "st", "ck", "ng", "m", "ll", "x"};

inline constexpr std::array<const char*, 48> kCategories = {
    "auto",     "library",  "springs", "park",    "cafe",     "market",  "bakery",  "pharmacy",
    "dental",   "motel",    "pizza",   "grill",   "bank",     "church",  "school",  "museum",
    "garden",   "plaza",    "center",  "salon",   "fitness",  "hardware", "bowl",   "hotel",
    "diner",    "theater",  "clinic",  "station", "mall",     "stadium", "marina",  "zoo",
    "brewery",  "winery",   "books",   "florist", "laundry",  "tavern",  "bistro",  "deli",
    "nursery",  "studio",   "gallery", "academy", "hospital", "pub",     "lodge",   "outlet"};
inline constexpr std::array<const char*, 8> kDirections = {"north", "south", "east", "west",
                                                           "northeast", "northwest", "southeast", "southwest"};
inline constexpr std::array<const char*, 12> kStreetSuffixes = {
    "street", "avenue", "road", "boulevard", "drive", "lane", "way", "court", "place", "parkway", "highway", "circle"};
inline constexpr std::array<const char*, 10> kPlaceKinds = {"springs", "lake", "hills", "valley", "heights",
                                                            "falls", "beach", "island", "ridge", "harbor"};

inline std::string pseudo_word(Rng& rng) {
  const std::size_t syllables = 1 + rng.categorical(std::array<double, 3>{0.25, 0.5, 0.25});
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w += kOnsets[rng.below(kOnsets.size())];
    w += kNuclei[rng.below(kNuclei.size())];
    if (s + 1 == syllables || rng.bernoulli(0.3)) w += kCodas[rng.below(kCodas.size())];
  }
  return w;
}

inline std::string house_number(Rng& rng) {
  const std::size_t digits = 1 + rng.categorical(std::array<double, 5>{0.1, 0.3, 0.3, 0.25, 0.05});
  std::string n(1, static_cast<char>('1' + rng.below(9)));
  for (std::size_t i = 1; i < digits; ++i) n.push_back(static_cast<char>('0' + rng.below(10)));
  return n;
}

inline std::vector<double> zipf_weights(std::size_t n, double exponent) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), exponent);
  return w;
}

}  // namespace detail

/// Deterministic for fixed (seed, n_entities, grammar). Entities are unique
/// and already in normalized form.
inline Gazetteer generate_gazetteer(std::uint64_t seed, std::size_t n_entities, const NameGrammar& grammar = {}) {
  if (n_entities == 0) throw ConfigError("generate_gazetteer: n_entities must be >= 1");
  if (grammar.name_pool_size == 0) throw ConfigError("generate_gazetteer: name_pool_size must be >= 1");
  Rng rng(derive_seed(seed, 0x6761'7a65));

  std::vector<std::string> names;
  {
    std::set<std::string> seen;
    std::size_t guard = 0;
    while (names.size() < grammar.name_pool_size && guard++ < grammar.name_pool_size * 50) {
      std::string w = detail::pseudo_word(rng);
      if (w.size() >= 3 && seen.insert(w).second) names.push_back(std::move(w));
    }
  }
  const auto name_w = detail::zipf_weights(names.size(), grammar.name_zipf);
  const CumulativeSampler pick_name(name_w);
  auto name = [&] { return names[pick_name(rng)]; };
  auto from = [&](const auto& list) { return std::string(list[rng.below(list.size())]); };

  const std::array<double, 3> kind_w = {grammar.poi_share, grammar.address_share,
                                        std::max(0.0, 1.0 - grammar.poi_share - grammar.address_share)};
  Gazetteer g;
  std::set<std::string> seen;
  std::size_t guard = 0;
  while (g.entities.size() < n_entities) {
    if (guard++ > n_entities * 100 + 1000)
      throw ConfigError("generate_gazetteer: grammar cannot produce " + std::to_string(n_entities) + " unique entities");
    std::string e;
    switch (rng.categorical(kind_w)) {
      case 0: {  // point of interest
        const double r = rng.uniform();
        if (r < 0.65) e = name() + " " + from(detail::kCategories);
        else if (r < 0.85) e = name() + " " + name();
        else if (r < 0.93) e = "the " + name() + " " + from(detail::kCategories);
        else e = name() + " " + name() + " " + from(detail::kCategories);
        break;
      }
      case 1: {  // address
        const double r = rng.uniform();
        const std::string street = rng.bernoulli(0.7) ? name() : from(detail::kPlaceKinds);
        if (r < 0.4) e = detail::house_number(rng) + " " + street + " " + from(detail::kStreetSuffixes);
        else if (r < 0.75) e = detail::house_number(rng) + " " + from(detail::kDirections) + " " + street;
        else e = detail::house_number(rng) + " " + street;
        break;
      }
      default: {  // place
        const double r = rng.uniform();
        if (r < 0.4) e = name() + " " + from(detail::kPlaceKinds);
        else if (r < 0.6) e = from(detail::kDirections) + " " + name();
        else e = name();
        break;
      }
    }
    if (seen.insert(e).second) g.entities.push_back(std::move(e));
  }
  g.weights = detail::zipf_weights(g.entities.size(), grammar.zipf_exponent);
  return g;
}

/// Word salad standing in for general natural-language text (mixed-corpus pre-training).
inline std::vector<std::string> generate_general_text(std::uint64_t seed, std::size_t n_lines) {
  static constexpr std::array<const char*, 96> kWords = {
      "the",    "of",     "and",    "to",     "in",     "is",     "was",    "for",    "that",   "with",
      "as",     "on",     "by",     "it",     "from",   "at",     "his",    "her",    "an",     "are",
      "were",   "which",  "this",   "be",     "or",     "first",  "also",   "new",    "after",  "had",
      "has",    "their",  "who",    "one",    "two",    "year",   "city",   "world",  "time",   "state",
      "during", "school", "history", "people", "known",  "family", "music",  "film",   "series", "season",
      "team",   "game",   "league", "album",  "song",   "band",   "river",  "county", "church", "village",
      "war",    "army",   "party",  "member", "national", "government", "university", "district", "population", "species",
      "book",   "novel",  "company", "station", "road",   "park",   "island", "area",   "water",  "north",
      "south",  "early",  "later",  "most",   "many",   "other",  "some",   "would",  "could",  "between",
      "under",  "over",   "where",  "when",   "while",  "only"};
  Rng rng(derive_seed(seed, 0x67656e));
  const auto w = detail::zipf_weights(kWords.size(), 1.0);
  const CumulativeSampler pick(w);
  std::vector<std::string> lines;
  lines.reserve(n_lines);
  for (std::size_t i = 0; i < n_lines; ++i) {
    const std::size_t len = 2 + rng.below(5);
    std::string s;
    for (std::size_t k = 0; k < len; ++k) {
      if (k) s += ' ';
      s += kWords[pick(rng)];
    }
    lines.push_back(std::move(s));
  }
  return lines;
}

// ---------------------------------------------------------------------------
// Typo channel

enum class TypoOp : std::size_t { Substitution = 0, Transposition, Deletion, Insertion, Space };
inline constexpr std::size_t kTypoOpCount = 5;

struct TypoChannel {
  /// Probabilities over {substitution (keyboard-adjacent), transposition,
  /// deletion, insertion, space split/join}.
  std::array<double, kTypoOpCount> op_probabilities = {0.35, 0.15, 0.2, 0.2, 0.1};
  /// Budget in unit edits. Transposition consumes two units.
  std::size_t max_edits = 2;
  /// Chance of drawing one more edit, repeatedly, up to max_edits.
  double extra_edit_prob = 0.3;
  KeyboardLayout keyboard = KeyboardLayout::qwerty();

  static TypoChannel only(TypoOp op) {
    TypoChannel c;
    c.op_probabilities.fill(0.0);
    c.op_probabilities[static_cast<std::size_t>(op)] = 1.0;
    c.max_edits = 1;
    c.extra_edit_prob = 0.0;
    return c;
  }

  void validate() const {
    double sum = 0.0;
    for (double p : op_probabilities) {
      if (p < 0.0) throw ConfigError("typo channel: negative op probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("typo channel: op probabilities must sum to 1");
    if (max_edits < 1) throw ConfigError("typo channel: max_edits must be >= 1");
    if (extra_edit_prob < 0.0 || extra_edit_prob > 1.0) throw ConfigError("typo channel: extra_edit_prob outside [0,1]");
  }
};

struct TypoResult {
  std::string text;
  std::size_t edit_count = 0;  // unit Levenshtein edits applied
};

namespace detail {

inline bool is_space(char32_t c) { return c == U' '; }

inline std::size_t op_cost(TypoOp op) { return op == TypoOp::Transposition ? 2 : 1; }

// Candidate positions for each op on the current text; every op keeps the text
// normalized (no leading/trailing or doubled spaces).
struct OpSites {
  std::vector<std::size_t> positions;
};

inline OpSites sites(TypoOp op, const std::u32string& t, const KeyboardLayout& kb) {
  OpSites s;
  const std::size_t n = t.size();
  auto word_len_at = [&](std::size_t i) {
    std::size_t b = i, e = i;
    while (b > 0 && !is_space(t[b - 1])) --b;
    while (e < n && !is_space(t[e])) ++e;
    return e - b;
  };
  switch (op) {
    case TypoOp::Substitution:
      for (std::size_t i = 0; i < n; ++i)
        if (!is_space(t[i]) && !kb.neighbours(t[i]).empty()) s.positions.push_back(i);
      break;
    case TypoOp::Transposition:
      for (std::size_t i = 0; i + 1 < n; ++i)
        if (!is_space(t[i]) && !is_space(t[i + 1]) && t[i] != t[i + 1]) s.positions.push_back(i);
      break;
    case TypoOp::Deletion:
      for (std::size_t i = 0; i < n; ++i)
        if (!is_space(t[i]) && word_len_at(i) >= 2) s.positions.push_back(i);
      break;
    case TypoOp::Insertion:
      // Insert right after position i (a non-space character).
      for (std::size_t i = 0; i < n; ++i)
        if (!is_space(t[i])) s.positions.push_back(i);
      break;
    case TypoOp::Space:
      // Join: remove the space at i. Split: insert a space after i.
      for (std::size_t i = 0; i + 1 < n; ++i)
        if (is_space(t[i]) || !is_space(t[i + 1])) s.positions.push_back(i);
      break;
  }
  return s;
}

inline void apply_op(TypoOp op, std::u32string& t, std::size_t i, Rng& rng, const KeyboardLayout& kb) {
  switch (op) {
    case TypoOp::Substitution: {
      const auto& nb = kb.neighbours(t[i]);
      t[i] = nb[rng.below(nb.size())];
      break;
    }
    case TypoOp::Transposition:
      std::swap(t[i], t[i + 1]);
      break;
    case TypoOp::Deletion:
      t.erase(i, 1);
      break;
    case TypoOp::Insertion: {
      const auto& nb = kb.neighbours(t[i]);
      const char32_t c = (nb.empty() || rng.bernoulli(0.4)) ? t[i] : nb[rng.below(nb.size())];
      t.insert(t.begin() + static_cast<std::ptrdiff_t>(i) + 1, c);
      break;
    }
    case TypoOp::Space:
      if (is_space(t[i])) t.erase(i, 1);
      else t.insert(t.begin() + static_cast<std::ptrdiff_t>(i) + 1, U' ');
      break;
  }
}

}  // namespace detail

/// Applies 1..max_edits channel edits to `text`. The result differs from the
/// input and lies within edit_count Levenshtein edits of it. Throws
/// ConfigError when no enabled op can be applied to the text.
inline TypoResult inject_typo(const std::string& text, const TypoChannel& channel, std::uint64_t seed) {
  channel.validate();
  if (text.empty()) throw ContractError("inject_typo: empty text");
  Rng rng(seed);
  const std::u32string original = to_u32(text);

  std::size_t budget = 1;
  while (budget < channel.max_edits && rng.bernoulli(channel.extra_edit_prob)) ++budget;

  bool any_applicable = false;
  for (int attempt = 0; attempt < 32; ++attempt) {
    std::u32string cur = original;
    std::size_t used = 0;
    while (used < budget) {
      std::array<double, kTypoOpCount> w{};
      std::array<detail::OpSites, kTypoOpCount> op_sites;
      bool any = false;
      for (std::size_t k = 0; k < kTypoOpCount; ++k) {
        const auto op = static_cast<TypoOp>(k);
        if (channel.op_probabilities[k] <= 0.0 || used + detail::op_cost(op) > budget) continue;
        op_sites[k] = detail::sites(op, cur, channel.keyboard);
        if (op_sites[k].positions.empty()) continue;
        w[k] = channel.op_probabilities[k];
        any = true;
      }
      if (!any) break;
      any_applicable = true;
      const std::size_t k = rng.categorical(w);
      const auto& pos = op_sites[k].positions;
      detail::apply_op(static_cast<TypoOp>(k), cur, pos[rng.below(pos.size())], rng, channel.keyboard);
      used += detail::op_cost(static_cast<TypoOp>(k));
    }
    if (used > 0 && cur != original) return {to_utf8(cur), used};
  }
  if (!any_applicable) throw ConfigError("inject_typo: no enabled typo op applies to '" + text + "'");
  throw ConfigError("inject_typo: channel could not change '" + text + "'");
}

// ---------------------------------------------------------------------------
// Sessions

enum class SessionKind { Clean, SelfCorrect, Select, Transfer };

struct BehaviorConfig {
  double typo_rate = 0.2;            // sessions carrying an injected misspelling
  double transfer_share = 0.2;       // of typo sessions: auto-corrected by the existing system
  double self_correct_share = 0.5;   // of remaining typo sessions: backspace and retype
  double case_noise = 0.1;           // sessions typed with a capitalized first letter

  void validate() const {
    for (double p : {typo_rate, transfer_share, self_correct_share, case_noise})
      if (p < 0.0 || p > 1.0) throw ConfigError("behavior: probabilities must lie in [0,1]");
  }
};

struct GroundTruthPair {
  std::string misspelt;
  std::string correction;
  std::string session_id;
  friend bool operator==(const GroundTruthPair&, const GroundTruthPair&) = default;
};

namespace detail {

inline std::string capitalized(std::u32string t) {
  if (!t.empty() && t[0] >= U'a' && t[0] <= U'z') t[0] = t[0] - U'a' + U'A';
  return to_utf8(t);
}

}  // namespace detail

/// Builds the snapshot sequence for one scripted behavior. `typo` is ignored for Clean.
inline KeystrokeSession script_session(std::string session_id, const std::string& entity, SessionKind kind,
                                       const std::string& typo = {}, bool capitalize = false) {
  KeystrokeSession s;
  s.session_id = std::move(session_id);
  std::int64_t tick = 0;
  auto push = [&](const std::u32string& t) {
    s.snapshots.push_back({++tick, capitalize ? detail::capitalized(t) : to_utf8(t)});
  };
  const std::u32string target = to_u32(entity);
  const std::u32string typed = kind == SessionKind::Clean ? target : to_u32(typo);
  for (std::size_t i = 1; i <= typed.size(); ++i) push(typed.substr(0, i));

  switch (kind) {
    case SessionKind::Clean:
    case SessionKind::Select:
      s.engagement = entity;
      break;
    case SessionKind::SelfCorrect: {
      std::size_t common = 0;
      while (common < typed.size() && common < target.size() && typed[common] == target[common]) ++common;
      for (std::size_t len = typed.size(); len-- > common;) push(typed.substr(0, len));
      for (std::size_t len = common + 1; len <= target.size(); ++len) push(target.substr(0, len));
      s.engagement = entity;
      break;
    }
    case SessionKind::Transfer:
      s.transfer_correction = TransferCorrection{to_utf8(typed), entity};
      break;
  }
  return s;
}

struct SimulatedSession {
  KeystrokeSession session;
  std::optional<GroundTruthPair> truth;
};

/// One session for `entity`; the behavior is drawn from `behavior`. Typo
/// sessions whose text admits no channel edit degrade to clean typing.
inline SimulatedSession simulate_session(const std::string& entity, const TypoChannel& channel,
                                         const BehaviorConfig& behavior, std::uint64_t seed,
                                         std::string session_id = "s0") {
  if (entity.empty()) throw ContractError("simulate_session: empty entity");
  Rng rng(seed);
  SessionKind kind = SessionKind::Clean;
  if (rng.bernoulli(behavior.typo_rate)) {
    if (rng.bernoulli(behavior.transfer_share)) kind = SessionKind::Transfer;
    else kind = rng.bernoulli(behavior.self_correct_share) ? SessionKind::SelfCorrect : SessionKind::Select;
  }
  const bool capitalize = rng.bernoulli(behavior.case_noise);
  const std::uint64_t typo_seed = rng.next();

  SimulatedSession out;
  if (kind != SessionKind::Clean) {
    try {
      TypoResult typo = inject_typo(entity, channel, typo_seed);
      out.session = script_session(session_id, entity, kind, typo.text, capitalize);
      out.truth = GroundTruthPair{typo.text, entity, std::move(session_id)};
      return out;
    } catch (const ConfigError&) {
      // fall through to clean typing
    }
  }
  out.session = script_session(std::move(session_id), entity, SessionKind::Clean, {}, capitalize);
  return out;
}

struct SyntheticLog {
  std::vector<KeystrokeSession> sessions;
  std::vector<GroundTruthPair> truth;
};

inline std::string session_id_for(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%08zu", index);
  return buf;
}

/// Session i is a pure function of (seed, i), so the log does not depend on `shards`.
inline SyntheticLog generate_log(const Gazetteer& gazetteer, const TypoChannel& channel, const BehaviorConfig& behavior,
                                 std::size_t n_sessions, std::uint64_t seed, std::size_t shards = 1) {
  if (n_sessions == 0) throw ConfigError("generate_log: n_sessions must be >= 1");
  if (gazetteer.entities.empty()) throw ConfigError("generate_log: empty gazetteer");
  channel.validate();
  behavior.validate();
  const CumulativeSampler pick(gazetteer.weights);

  std::vector<SimulatedSession> sims(n_sessions);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(derive_seed(seed, i));
      const std::string& entity = gazetteer.entities[pick(rng)];
      sims[i] = simulate_session(entity, channel, behavior, rng.next(), session_id_for(i));
    }
  };
  shards = std::max<std::size_t>(1, std::min(shards, n_sessions));
  std::vector<std::thread> pool;
  const std::size_t chunk = (n_sessions + shards - 1) / shards;
  for (std::size_t s = 0; s < shards; ++s) {
    const std::size_t b = s * chunk, e = std::min(n_sessions, b + chunk);
    if (b < e) pool.emplace_back(work, b, e);
  }
  for (auto& t : pool) t.join();

  SyntheticLog log;
  log.sessions.reserve(n_sessions);
  for (auto& sim : sims) {
    if (sim.truth) log.truth.push_back(std::move(*sim.truth));
    log.sessions.push_back(std::move(sim.session));
  }
  return log;
}

// ---------------------------------------------------------------------------
// Files

inline void write_ground_truth(const std::vector<GroundTruthPair>& truth, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  for (const auto& t : truth) out << t.misspelt << '\t' << t.correction << '\t' << t.session_id << '\n';
  if (!out) throw IoError(path, "write failed");
}

inline std::vector<GroundTruthPair> read_ground_truth(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open ground-truth file");
  std::vector<GroundTruthPair> truth;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos || line.find('\t', b + 1) != std::string::npos)
      throw ParseError(path, lineno, "expected 3 tab-separated columns");
    truth.push_back({line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1)});
  }
  return truth;
}

inline void write_gazetteer(const Gazetteer& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  char buf[64];
  for (std::size_t i = 0; i < g.entities.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", g.weights[i]);
    out << g.entities[i] << '\t' << buf << '\n';
  }
  if (!out) throw IoError(path, "write failed");
}

}  // namespace mapspell
