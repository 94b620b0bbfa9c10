#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <string_view>

#include "mapspell/error.hpp"

namespace mapspell {

/// Key-adjacency table for the typo channel's substitution and insertion ops.
class KeyboardLayout {
 public:
  /// US QWERTY with staggered rows; identical to data/qwerty_adjacency.tsv.
  static KeyboardLayout qwerty() {
    static constexpr std::string_view rows[] = {"1234567890", "qwertyuiop", "asdfghjkl", "zxcvbnm"};
    constexpr int n_rows = 4;
    KeyboardLayout kb;
    for (int r = 0; r < n_rows; ++r) {
      for (int c = 0; c < static_cast<int>(rows[r].size()); ++c) {
        // Each row sits half a key right of the one above it.
        const int cand[6][2] = {{r, c - 1}, {r, c + 1}, {r - 1, c}, {r - 1, c + 1}, {r + 1, c - 1}, {r + 1, c}};
        std::string adj;
        for (const auto& rc : cand) {
          if (rc[0] < 0 || rc[0] >= n_rows) continue;
          if (rc[1] < 0 || rc[1] >= static_cast<int>(rows[rc[0]].size())) continue;
          adj.push_back(rows[rc[0]][static_cast<std::size_t>(rc[1])]);
        }
        std::sort(adj.begin(), adj.end());
        kb.adjacent_[static_cast<char32_t>(rows[r][static_cast<std::size_t>(c)])] =
            std::u32string(adj.begin(), adj.end());
      }
    }
    return kb;
  }

  /// Reads `key<TAB>neighbours` lines; `#` starts a comment line. ASCII keys only.
  static KeyboardLayout load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open keyboard table");
    KeyboardLayout kb;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab != 1 || line.size() < 3) throw ParseError(path, lineno, "expected 'key<TAB>neighbours'");
      kb.adjacent_[static_cast<char32_t>(line[0])] = std::u32string(line.begin() + 2, line.end());
    }
    if (kb.adjacent_.empty()) throw ParseError(path, 0, "empty keyboard table");
    return kb;
  }

  /// Neighbours of `key`, empty for keys not on the layout.
  const std::u32string& neighbours(char32_t key) const {
    static const std::u32string none;
    auto it = adjacent_.find(key);
    return it == adjacent_.end() ? none : it->second;
  }

  friend bool operator==(const KeyboardLayout&, const KeyboardLayout&) = default;

 private:
  std::map<char32_t, std::u32string> adjacent_;
};

}  // namespace mapspell
