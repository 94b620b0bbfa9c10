#pragma once

// String dynamic programming used by the miner's precision band.
// Both functions work on any random-access sequence; the string_view
// overloads measure in Unicode code points.

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <ranges>
#include <string_view>
#include <type_traits>
#include <vector>

#include "mapspell/unicode.hpp"

namespace mapspell {

namespace detail {
// Text goes through the code-point overloads below, never the generic ones.
template <class R>
concept Sequence = std::ranges::random_access_range<R> && !std::is_convertible_v<const R&, std::string_view>;
}  // namespace detail

/// Levenshtein distance with unit insert/delete/substitute costs.
/// Two-row DP, O(|a|·|b|) time, O(min) memory.
template <detail::Sequence A, detail::Sequence B>
std::size_t edit_distance(const A& a, const B& b) {
  const std::size_t n = std::ranges::size(a);
  const std::size_t m = std::ranges::size(b);
  if (n < m) return edit_distance(b, a);
  if (m == 0) return n;

  std::vector<std::size_t> row(m + 1);
  for (std::size_t j = 0; j <= m; ++j) row[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[m];
}

/// Length of the longest common subsequence.
template <detail::Sequence A, detail::Sequence B>
std::size_t lcs_len(const A& a, const B& b) {
  const std::size_t n = std::ranges::size(a);
  const std::size_t m = std::ranges::size(b);
  if (n < m) return lcs_len(b, a);
  if (m == 0) return 0;

  std::vector<std::size_t> row(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t up = row[j];
      row[j] = a[i - 1] == b[j - 1] ? diag + 1 : std::max(up, row[j - 1]);
      diag = up;
    }
  }
  return row[m];
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  return edit_distance(to_u32(a), to_u32(b));
}

inline std::size_t lcs_len(std::string_view a, std::string_view b) {
  return lcs_len(to_u32(a), to_u32(b));
}

}  // namespace mapspell
