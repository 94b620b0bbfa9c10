#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "mapspell/error.hpp"
#include "mapspell/vocab.hpp"

namespace mapspell {

/// B padded sequences, trimmed to the longest non-PAD length in the batch.
struct TokenBatch {
  std::size_t B = 0;
  std::size_t T = 0;
  std::vector<TokenId> ids;  // B*T, row-major
  std::vector<std::size_t> lengths;

  TokenId at(std::size_t b, std::size_t t) const { return ids[b * T + t]; }

  /// 1 for real tokens, 0 for PAD; row-major B*T.
  std::vector<std::uint8_t> valid_mask() const {
    std::vector<std::uint8_t> m(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) m[i] = ids[i] != kPad;
    return m;
  }
};

inline TokenBatch make_batch(const std::vector<const std::vector<TokenId>*>& seqs) {
  TokenBatch b;
  b.B = seqs.size();
  for (const auto* s : seqs) {
    b.lengths.push_back(unpadded_length(*s));
    b.T = std::max(b.T, b.lengths.back());
  }
  b.T = std::max<std::size_t>(b.T, 1);
  b.ids.assign(b.B * b.T, kPad);
  for (std::size_t i = 0; i < b.B; ++i)
    std::copy_n(seqs[i]->begin(), std::min(b.T, seqs[i]->size()), b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.T));
  return b;
}

inline TokenBatch make_batch(const std::vector<std::vector<TokenId>>& seqs) {
  std::vector<const std::vector<TokenId>*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  return make_batch(ptrs);
}

/// Train/eval switch plus the keys that make dropout masks reproducible.
struct ForwardCtx {
  bool train = false;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

}  // namespace mapspell
