#pragma once

// Query canonicalization. Every consumer of query text (miner, dataset,
// tokenizers, predict) goes through normalize() so there is one text form.
//
// Pipeline: NFC -> lowercase -> per-code-point classification -> NFC.
//   letters, decimal digits          kept
//   combining marks after a letter   kept (stray marks are junk)
//   punctuation, whitespace          replaced by one space
//   symbols, controls, format chars,
//   emoji, U+FFFD, unassigned, other  deleted
// Runs of spaces collapse to one; leading/trailing spaces are trimmed.

#include <string>
#include <string_view>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "mapspell/error.hpp"

namespace mapspell {

struct NormalizerOptions {
  /// Remove combining diacritics ("café" -> "cafe"). Off by default.
  bool strip_diacritics = false;
};

class NormalizedQuery;
NormalizedQuery normalize(std::string_view raw, const NormalizerOptions& opts = {});

/// Text that satisfies the normalization invariants. Only normalize() builds one.
class NormalizedQuery {
 public:
  const std::string& text() const noexcept { return text_; }
  bool empty() const noexcept { return text_.empty(); }
  friend bool operator==(const NormalizedQuery&, const NormalizedQuery&) = default;

 private:
  friend NormalizedQuery normalize(std::string_view, const NormalizerOptions&);
  explicit NormalizedQuery(std::string text) : text_(std::move(text)) {}
  std::string text_;
};

namespace detail {

inline const icu::Normalizer2& nfc() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(std::string("ICU NFC unavailable: ") + u_errorName(status));
  return *n;
}

inline const icu::Normalizer2& nfd() {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFDInstance(status);
  if (U_FAILURE(status)) throw Error(std::string("ICU NFD unavailable: ") + u_errorName(status));
  return *n;
}

inline icu::UnicodeString apply(const icu::Normalizer2& n, const icu::UnicodeString& s) {
  UErrorCode status = U_ZERO_ERROR;
  icu::UnicodeString out = n.normalize(s, status);
  if (U_FAILURE(status)) throw Error(std::string("ICU normalization failed: ") + u_errorName(status));
  return out;
}

enum class CharClass { Keep, Mark, Space, Junk };

inline bool is_variation_selector(UChar32 c) {
  return (c >= 0xFE00 && c <= 0xFE0F) || (c >= 0xE0100 && c <= 0xE01EF) ||
         (c >= 0x180B && c <= 0x180D);
}

inline CharClass classify(UChar32 c) {
  if (c == 0xFFFD) return CharClass::Junk;
  if (u_isUWhiteSpace(c)) return CharClass::Space;
  const std::uint32_t mask = U_GET_GC_MASK(c);
  if (mask & U_GC_L_MASK) return CharClass::Keep;
  if (mask & U_GC_ND_MASK) return CharClass::Keep;
  if (mask & U_GC_P_MASK) return CharClass::Space;
  if (mask & U_GC_M_MASK) return is_variation_selector(c) ? CharClass::Junk : CharClass::Mark;
  // S*, C*, Z* other than whitespace, Nl, No
  return CharClass::Junk;
}

}  // namespace detail

/// Canonicalizes a raw query. Never throws on content; all-junk input yields
/// an empty query.
inline NormalizedQuery normalize(std::string_view raw, const NormalizerOptions& opts) {
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
  s = detail::apply(detail::nfc(), s);
  s.toLower(icu::Locale::getRoot());
  if (opts.strip_diacritics) s = detail::apply(detail::nfd(), s);

  icu::UnicodeString kept;
  bool pending_space = false;
  bool after_letter = false;  // previous kept code point is a letter or an attached mark
  for (int32_t i = 0; i < s.length(); i = s.moveIndex32(i, 1)) {
    const UChar32 c = s.char32At(i);
    switch (detail::classify(c)) {
      case detail::CharClass::Keep:
        if (pending_space && kept.length() > 0) kept.append(UChar(0x20));
        pending_space = false;
        kept.append(c);
        after_letter = (U_GET_GC_MASK(c) & U_GC_L_MASK) != 0;
        break;
      case detail::CharClass::Mark:
        if (after_letter && !pending_space && !opts.strip_diacritics) kept.append(c);
        break;
      case detail::CharClass::Space:
        pending_space = true;
        after_letter = false;
        break;
      case detail::CharClass::Junk:
        break;
    }
  }
  kept = detail::apply(detail::nfc(), kept);
  std::string out;
  kept.toUTF8String(out);
  return NormalizedQuery(std::move(out));
}

/// Convenience: normalized text as a plain string.
inline std::string normalize_text(std::string_view raw, const NormalizerOptions& opts = {}) {
  return normalize(raw, opts).text();
}

}  // namespace mapspell
