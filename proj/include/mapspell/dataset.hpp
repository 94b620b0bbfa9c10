#pragma once

// Labeled examples, misspelling-ratio control and disjoint splits.
//
// TSV row format (no header): query<TAB>correction<TAB>True|False

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "mapspell/error.hpp"
#include "mapspell/rng.hpp"

namespace mapspell {

struct LabeledExample {
  std::string query;
  std::string correction;  // reference only; may be empty
  bool is_misspelt = false;
  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

inline void validate(const LabeledExample& ex) {
  if (ex.query.empty()) throw ContractError("labeled example with empty query");
  if (!ex.correction.empty() && ex.is_misspelt != (ex.query != ex.correction))
    throw ContractError("labeled example '" + ex.query + "': label disagrees with correction");
}

inline void write_tsv(const std::vector<LabeledExample>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  for (const auto& r : rows)
    out << r.query << '\t' << r.correction << '\t' << (r.is_misspelt ? "True" : "False") << '\n';
  if (!out) throw IoError(path, "write failed");
}

inline std::vector<LabeledExample> read_tsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open TSV file");
  std::vector<LabeledExample> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos || line.find('\t', b + 1) != std::string::npos)
      throw ParseError(path, lineno, "expected 3 tab-separated columns");
    LabeledExample ex{line.substr(0, a), line.substr(a + 1, b - a - 1), false};
    const std::string label = line.substr(b + 1);
    if (label == "True") ex.is_misspelt = true;
    else if (label != "False") throw ParseError(path, lineno, "label must be True or False, got '" + label + "'");
    try {
      validate(ex);
    } catch (const ContractError& e) {
      throw ParseError(path, lineno, e.what());
    }
    rows.push_back(std::move(ex));
  }
  return rows;
}

inline std::size_t count_misspelt(const std::vector<LabeledExample>& rows) {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.is_misspelt; }));
}

namespace detail {

// Keeps `keep` of the given indices, chosen uniformly; returns them ascending.
inline std::vector<std::size_t> sample_indices(std::vector<std::size_t> idx, std::size_t keep, Rng& rng) {
  rng.shuffle(idx);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

/// Downsamples the over-represented class so the misspelt fraction equals
/// `target` to within one example. Never duplicates. Original order is kept.
inline std::vector<LabeledExample> enforce_ratio(const std::vector<LabeledExample>& pool, double target,
                                                 std::uint64_t seed) {
  if (!(target >= 0.0 && target <= 1.0)) throw ConfigError("enforce_ratio: target must lie in [0,1]");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < pool.size(); ++i) (pool[i].is_misspelt ? pos : neg).push_back(i);
  const std::size_t m = pos.size(), k = neg.size();

  std::size_t keep_pos = 0, keep_neg = 0;
  if (target == 0.0) {
    if (k == 0) throw DataError("enforce_ratio: insufficient class 'clean' (0 examples) for target 0");
    keep_neg = k;
  } else if (target == 1.0) {
    if (m == 0) throw DataError("enforce_ratio: insufficient class 'misspelt' (0 examples) for target 1");
    keep_pos = m;
  } else {
    if (m == 0) throw DataError("enforce_ratio: insufficient class 'misspelt' (0 examples)");
    if (k == 0) throw DataError("enforce_ratio: insufficient class 'clean' (0 examples)");
    const auto want_pos = static_cast<std::size_t>(std::llround(target * static_cast<double>(k) / (1.0 - target)));
    if (want_pos <= m) {
      keep_pos = want_pos;
      keep_neg = k;
    } else {
      keep_pos = m;
      keep_neg = static_cast<std::size_t>(std::llround(static_cast<double>(m) * (1.0 - target) / target));
      keep_neg = std::min(keep_neg, k);
    }
  }

  Rng rng(derive_seed(seed, 0x7261));
  std::vector<std::size_t> kept = detail::sample_indices(pos, keep_pos, rng);
  const auto kept_neg = detail::sample_indices(neg, keep_neg, rng);
  kept.insert(kept.end(), kept_neg.begin(), kept_neg.end());
  std::sort(kept.begin(), kept.end());
  std::vector<LabeledExample> out;
  out.reserve(kept.size());
  for (std::size_t i : kept) out.push_back(pool[i]);
  return out;
}

struct SplitSpec {
  std::size_t train_n = 0;
  std::size_t dev_n = 0;
  std::size_t test_n = 0;
  double misspell_ratio = 0.2;
  std::uint64_t seed = 0;
};

struct Splits {
  std::vector<LabeledExample> train, dev, test;
};

/// Drops repeated query texts, keeping the first occurrence.
inline std::vector<LabeledExample> dedup_by_query(const std::vector<LabeledExample>& pool) {
  std::unordered_set<std::string> seen;
  std::vector<LabeledExample> out;
  out.reserve(pool.size());
  for (const auto& ex : pool)
    if (seen.insert(ex.query).second) out.push_back(ex);
  return out;
}

/// Query-disjoint train/dev/test with exact sizes. Each class is shuffled
/// once and sliced contiguously, so every split holds round(ratio * n)
/// misspelt rows; rows within a split are then shuffled.
inline Splits split(const std::vector<LabeledExample>& pool, const SplitSpec& spec) {
  if (!(spec.misspell_ratio >= 0.0 && spec.misspell_ratio <= 1.0))
    throw ConfigError("split: misspell_ratio must lie in [0,1]");
  const auto unique = dedup_by_query(pool);
  const std::size_t total = spec.train_n + spec.dev_n + spec.test_n;
  if (unique.size() < total)
    throw DataError("split: pool has " + std::to_string(unique.size()) + " unique queries, need " +
                    std::to_string(total));

  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < unique.size(); ++i) (unique[i].is_misspelt ? pos : neg).push_back(i);
  const std::size_t sizes[3] = {spec.train_n, spec.dev_n, spec.test_n};
  std::size_t need_pos = 0, need_neg = 0;
  std::size_t want_pos[3];
  for (int s = 0; s < 3; ++s) {
    want_pos[s] = static_cast<std::size_t>(std::llround(spec.misspell_ratio * static_cast<double>(sizes[s])));
    need_pos += want_pos[s];
    need_neg += sizes[s] - want_pos[s];
  }
  if (pos.size() < need_pos || neg.size() < need_neg)
    throw DataError("split: need " + std::to_string(need_pos) + " misspelt + " + std::to_string(need_neg) +
                    " clean, pool has " + std::to_string(pos.size()) + " + " + std::to_string(neg.size()));

  Rng rng(derive_seed(spec.seed, 0x73706c));
  rng.shuffle(pos);
  rng.shuffle(neg);
  Splits out;
  std::vector<LabeledExample>* dst[3] = {&out.train, &out.dev, &out.test};
  std::size_t pi = 0, ni = 0;
  for (int s = 0; s < 3; ++s) {
    auto& d = *dst[s];
    d.reserve(sizes[s]);
    for (std::size_t j = 0; j < want_pos[s]; ++j) d.push_back(unique[pos[pi++]]);
    for (std::size_t j = want_pos[s]; j < sizes[s]; ++j) d.push_back(unique[neg[ni++]]);
    rng.shuffle(d);
  }
  return out;
}

}  // namespace mapspell
