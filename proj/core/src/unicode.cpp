#include "promptsense/unicode.hpp"

#include <algorithm>
#include <array>
#include <optional>
#include <utility>

namespace promptsense::unicode {
namespace {

struct Range {
  char32_t first;
  char32_t last;
};

constexpr Range kPunctuation[] = {
#include "punctuation_table.inc"
};

struct Decoded {
  char32_t cp;
  std::size_t length;
};

// Decodes one UTF-8 sequence at the start of text; nullopt for malformed input.
std::optional<Decoded> decode(std::string_view text) {
  const auto b0 = static_cast<unsigned char>(text[0]);
  if (b0 < 0x80) return Decoded{b0, 1};
  std::size_t len;
  char32_t cp;
  char32_t min;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2, cp = b0 & 0x1F, min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3, cp = b0 & 0x0F, min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4, cp = b0 & 0x07, min = 0x10000;
  } else {
    return std::nullopt;
  }
  if (text.size() < len) return std::nullopt;
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(text[i]);
    if ((b & 0xC0) != 0x80) return std::nullopt;
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return std::nullopt;
  return Decoded{cp, len};
}

bool is_ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

bool is_punctuation(char32_t cp) noexcept {
  const auto* end = std::end(kPunctuation);
  const auto* it = std::upper_bound(std::begin(kPunctuation), end, cp,
                                    [](char32_t value, const Range& r) { return value < r.first; });
  if (it == std::begin(kPunctuation)) return false;
  --it;
  return cp <= it->last;
}

std::string strip_punctuation(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    auto decoded = decode(text.substr(i));
    if (!decoded) {
      out.push_back(text[i]);
      ++i;
      continue;
    }
    if (!is_punctuation(decoded->cp)) out.append(text.substr(i, decoded->length));
    i += decoded->length;
  }
  return out;
}

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_ascii_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace promptsense::unicode
