#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace promptsense::unicode {

/// True if the code point belongs to one of the Unicode punctuation general categories
/// (Pc, Pd, Ps, Pe, Pi, Pf, Po).
bool is_punctuation(char32_t cp) noexcept;

/// Removes every punctuation code point from UTF-8 text. Bytes that do not form a valid
/// UTF-8 sequence are passed through untouched.
std::string strip_punctuation(std::string_view text);

/// ASCII lowercase; other bytes are left alone.
std::string ascii_lower(std::string_view text);

/// Collapses runs of ASCII whitespace to a single space and trims both ends.
std::string collapse_whitespace(std::string_view text);

}  // namespace promptsense::unicode
