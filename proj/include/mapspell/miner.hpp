#pragma once

// Misspelling -> correction pair mining over keystroke sessions.
//
//   recall      backtrack_mine (keystroke divergence before an engaged result)
//               transfer_mine  (corrections the existing system already made)
//   precision   DistanceBand on edit distance, LCS and length
//   ambiguity   resolve_conflicts (majority vote on pair counts)
//               calibrate (correction must mostly survive as an uncorrected query)
//   output      emit_labeled -> query / correction / is_misspelt rows

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mapspell/dataset.hpp"
#include "mapspell/distance.hpp"
#include "mapspell/error.hpp"
#include "mapspell/normalizer.hpp"
#include "mapspell/session.hpp"
#include "mapspell/unicode.hpp"

namespace mapspell {

enum class PairSource { Backtrack, Transfer };

inline const char* to_string(PairSource s) { return s == PairSource::Backtrack ? "backtrack" : "transfer"; }

struct MinedPair {
  std::string q;
  std::string c;
  std::int64_t count = 1;
  PairSource source = PairSource::Backtrack;
  friend bool operator==(const MinedPair&, const MinedPair&) = default;
};

/// Morphological-distance gate between a candidate Q and its correction C.
/// Relative thresholds scale with len(C) in code points and are rounded up.
struct DistanceBand {
  std::size_t min_dist = 1;
  double max_rel_dist = 0.4;
  double min_lcs_rel = 0.5;
  double min_len_rel = 0.8;  // near-complete queries only

  void validate() const {
    if (min_dist < 1) throw ConfigError("band: min_dist must be >= 1");
    if (!(max_rel_dist > 0.0 && max_rel_dist <= 1.0)) throw ConfigError("band: max_rel_dist must lie in (0,1]");
    if (!(min_lcs_rel >= 0.0 && min_lcs_rel <= 1.0)) throw ConfigError("band: min_lcs_rel must lie in [0,1]");
    if (!(min_len_rel >= 0.0 && min_len_rel <= 1.0)) throw ConfigError("band: min_len_rel must lie in [0,1]");
  }

  /// Sets one knob from "key=value"; keys are the member names.
  void set(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("band: expected key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    try {
      if (key == "min_dist") min_dist = std::stoul(value);
      else if (key == "max_rel_dist") max_rel_dist = std::stod(value);
      else if (key == "min_lcs_rel") min_lcs_rel = std::stod(value);
      else if (key == "min_len_rel") min_len_rel = std::stod(value);
      else throw ConfigError("band: unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw ConfigError("band: bad value for '" + key + "': " + value);
    }
  }

  bool accepts(const std::u32string& q, const std::u32string& c) const {
    const double lc = static_cast<double>(c.size());
    const auto ceil_rel = [lc](double r) { return static_cast<std::size_t>(std::ceil(r * lc - 1e-9)); };
    if (q.size() < ceil_rel(min_len_rel)) return false;
    const std::size_t d = edit_distance(q, c);
    if (d < min_dist || d > ceil_rel(max_rel_dist)) return false;
    return lcs_len(q, c) >= ceil_rel(min_lcs_rel);
  }
};

/// Backward scan over an engaged session. Snapshots whose normalized text is
/// a prefix of the engaged text C are steps of typing C itself and carry no
/// evidence; of the rest, the longest one inside the band is Q (ties go to
/// the latest tick).
inline std::vector<MinedPair> backtrack_mine(const KeystrokeSession& session, const DistanceBand& band = {}) {
  if (!session.engagement) return {};
  const std::string c = normalize_text(*session.engagement);
  if (c.empty()) return {};
  const std::u32string c32 = to_u32(c);

  std::optional<std::u32string> best;
  for (auto it = session.snapshots.rbegin(); it != session.snapshots.rend(); ++it) {
    const std::u32string s = to_u32(normalize_text(it->text));
    if (s.empty() || c32.starts_with(s)) continue;
    if (best && s.size() <= best->size()) continue;
    if (band.accepts(s, c32)) best = s;
  }
  if (!best) return {};
  return {MinedPair{to_utf8(*best), c, 1, PairSource::Backtrack}};
}

inline std::vector<MinedPair> transfer_mine(const KeystrokeSession& session) {
  if (!session.transfer_correction) return {};
  std::string q = normalize_text(session.transfer_correction->typed);
  std::string c = normalize_text(session.transfer_correction->system_corrected);
  if (q.empty() || c.empty() || q == c) return {};
  return {MinedPair{std::move(q), std::move(c), 1, PairSource::Transfer}};
}

struct Resolved {
  std::string c;
  std::int64_t count = 0;
  friend bool operator==(const Resolved&, const Resolved&) = default;
};

using ResolvedPairs = std::map<std::string, Resolved>;

/// Majority vote per misspelt query: highest total count wins, ties go to the
/// lexicographically smallest correction.
inline ResolvedPairs resolve_conflicts(const std::vector<MinedPair>& pairs) {
  std::map<std::string, std::map<std::string, std::int64_t>> votes;
  for (const auto& p : pairs) votes[p.q][p.c] += p.count;
  ResolvedPairs out;
  for (const auto& [q, by_c] : votes) {
    Resolved best;
    for (const auto& [c, n] : by_c)  // ascending c, so strict > keeps the smallest on ties
      if (n > best.count) best = {c, n};
    out.emplace(q, std::move(best));
  }
  return out;
}

struct CalibrationStats {
  std::unordered_map<std::string, std::int64_t> final_query_count;     // engaged and left uncorrected
  std::unordered_map<std::string, std::int64_t> corrected_away_count;  // appeared as Q of a mined pair

  void merge(const CalibrationStats& other) {
    for (const auto& [k, v] : other.final_query_count) final_query_count[k] += v;
    for (const auto& [k, v] : other.corrected_away_count) corrected_away_count[k] += v;
  }
};

/// The normalized engaged text when the session ended on it unchanged.
inline std::optional<std::string> clean_final_query(const KeystrokeSession& s) {
  if (!s.engagement || s.snapshots.empty()) return std::nullopt;
  std::string c = normalize_text(*s.engagement);
  if (c.empty() || normalize_text(s.snapshots.back().text) != c) return std::nullopt;
  return c;
}

inline void accumulate_stats(const KeystrokeSession& s, const std::vector<MinedPair>& mined, CalibrationStats& stats) {
  if (auto c = clean_final_query(s)) ++stats.final_query_count[*c];
  for (const auto& p : mined) stats.corrected_away_count[p.q] += p.count;
}

/// Keeps q -> c when c stands on its own as a query often enough:
/// final(c) / (final(c) + corrected_away(c)) >= theta. Corrections with no
/// evidence either way are kept.
inline ResolvedPairs calibrate(const ResolvedPairs& resolved, const CalibrationStats& stats, double theta) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("calibrate: theta must lie in [0,1]");
  auto lookup = [](const auto& m, const std::string& k) -> std::int64_t {
    auto it = m.find(k);
    return it == m.end() ? 0 : it->second;
  };
  ResolvedPairs out;
  for (const auto& [q, r] : resolved) {
    const std::int64_t fin = lookup(stats.final_query_count, r.c);
    const std::int64_t away = lookup(stats.corrected_away_count, r.c);
    if (fin + away == 0 || static_cast<double>(fin) / static_cast<double>(fin + away) >= theta) out.emplace(q, r);
  }
  return out;
}

/// True rows for surviving pairs, False rows for clean engaged finals.
/// Deduplicated by query; a query that is both keeps its True row. Sorted by
/// (query, correction).
inline std::vector<LabeledExample> emit_labeled(const ResolvedPairs& pairs, const std::vector<KeystrokeSession>& sessions) {
  std::map<std::string, LabeledExample> rows;
  for (const auto& [q, r] : pairs) rows[q] = LabeledExample{q, r.c, true};
  for (const auto& s : sessions) {
    if (auto c = clean_final_query(s); c && !rows.contains(*c)) rows[*c] = LabeledExample{*c, *c, false};
  }
  std::vector<LabeledExample> out;
  out.reserve(rows.size());
  for (auto& [q, row] : rows) out.push_back(std::move(row));
  return out;
}

struct MinerConfig {
  DistanceBand band;
  double theta = 0.5;
  std::size_t shards = 1;
};

struct MiningResult {
  std::vector<MinedPair> pairs;  // map-phase output, session order
  CalibrationStats stats;
  ResolvedPairs resolved;
  ResolvedPairs calibrated;
  std::vector<LabeledExample> labeled;
};

/// Full pipeline. The map phase runs over `shards` contiguous session ranges;
/// the reduce phase is order independent, so results do not depend on shards.
inline MiningResult mine_sessions(const std::vector<KeystrokeSession>& sessions, const MinerConfig& cfg = {}) {
  cfg.band.validate();
  const std::size_t shards = std::max<std::size_t>(1, std::min(cfg.shards, std::max<std::size_t>(1, sessions.size())));
  struct Partial {
    std::vector<MinedPair> pairs;
    CalibrationStats stats;
  };
  std::vector<Partial> parts(shards);
  const std::size_t chunk = (sessions.size() + shards - 1) / shards;
  auto work = [&](std::size_t s) {
    const std::size_t b = s * chunk, e = std::min(sessions.size(), b + chunk);
    for (std::size_t i = b; i < e; ++i) {
      auto mined = backtrack_mine(sessions[i], cfg.band);
      auto transferred = transfer_mine(sessions[i]);
      mined.insert(mined.end(), transferred.begin(), transferred.end());
      accumulate_stats(sessions[i], mined, parts[s].stats);
      parts[s].pairs.insert(parts[s].pairs.end(), mined.begin(), mined.end());
    }
  };
  if (shards == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t s = 0; s < shards; ++s) pool.emplace_back(work, s);
    for (auto& t : pool) t.join();
  }

  MiningResult res;
  for (auto& p : parts) {
    res.pairs.insert(res.pairs.end(), p.pairs.begin(), p.pairs.end());
    res.stats.merge(p.stats);
  }
  res.resolved = resolve_conflicts(res.pairs);
  res.calibrated = calibrate(res.resolved, res.stats, cfg.theta);
  res.labeled = emit_labeled(res.calibrated, sessions);
  return res;
}

}  // namespace mapspell
