#pragma once

// Pre-trained word vectors in the whitespace-separated text format
// "word v1 ... vd", one word per line.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mapspell/error.hpp"
#include "mapspell/rng.hpp"
#include "mapspell/vocab.hpp"

namespace mapspell {

struct ExternalEmbeddings {
  std::size_t dim = 0;
  std::vector<double> table;  // vocab.size() x dim, row-major
  std::size_t found = 0;      // vocabulary rows taken from the file
};

/// Rows for words present in the file come from the file; every other row
/// (specials included) is drawn uniformly from +-oov_range with `seed`.
inline ExternalEmbeddings load_external_embeddings(const std::string& path, const Vocabulary& vocab, std::uint64_t seed,
                                                   double oov_range = 0.05) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open embeddings file");
  ExternalEmbeddings out;
  std::vector<std::vector<double>> rows(vocab.size());
  std::string line, word;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ss >> word;
    std::vector<double> v;
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::logic_error&) {
        throw ParseError(path, lineno, "bad number '" + tok + "'");
      }
    }
    if (v.empty()) throw ParseError(path, lineno, "word without a vector");
    if (out.dim == 0) out.dim = v.size();
    else if (v.size() != out.dim)
      throw ParseError(path, lineno, "vector has " + std::to_string(v.size()) + " values, expected " + std::to_string(out.dim));
    if (vocab.contains(word)) {
      const auto id = static_cast<std::size_t>(vocab.id(word));
      if (id >= kNumSpecial && rows[id].empty()) {
        rows[id] = std::move(v);
        ++out.found;
      }
    }
  }
  if (out.dim == 0) throw ParseError(path, 0, "no vectors in file");
  Rng rng(derive_seed(seed, 0x00f));
  out.table.reserve(vocab.size() * out.dim);
  for (auto& r : rows) {
    if (r.empty())
      for (std::size_t j = 0; j < out.dim; ++j) out.table.push_back(rng.uniform(-oov_range, oov_range));
    else
      out.table.insert(out.table.end(), r.begin(), r.end());
  }
  return out;
}

}  // namespace mapspell
