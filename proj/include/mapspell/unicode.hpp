#pragma once

#include <string>
#include <string_view>

#include <unicode/unistr.h>

namespace mapspell {

/// Decodes UTF-8 into code points. Ill-formed sequences become U+FFFD.
inline std::u32string to_u32(std::string_view utf8) {
  const icu::UnicodeString us = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  std::u32string out(static_cast<std::size_t>(us.countChar32()), U'\0');
  UErrorCode status = U_ZERO_ERROR;
  const int32_t n =
      us.toUTF32(reinterpret_cast<UChar32*>(out.data()), static_cast<int32_t>(out.size()), status);
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::string to_utf8(std::u32string_view cps) {
  const icu::UnicodeString us = icu::UnicodeString::fromUTF32(
      reinterpret_cast<const UChar32*>(cps.data()), static_cast<int32_t>(cps.size()));
  std::string out;
  us.toUTF8String(out);
  return out;
}

/// Length in code points.
inline std::size_t u32_length(std::string_view utf8) { return to_u32(utf8).size(); }

}  // namespace mapspell
