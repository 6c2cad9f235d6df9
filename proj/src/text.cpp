#include "qebias/text.hpp"

#include <cstdint>

namespace qebias {

namespace {

struct Decoded {
  char32_t cp;
  std::size_t length;
};

// Decodes one code point at `pos`. Malformed sequences decode as a single
// byte with cp 0xFFFD so callers keep the original bytes.
Decoded decode_utf8(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return {b0, 1};
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return {0xFFFD, 1};
  }
  if (pos + len > s.size()) return {0xFFFD, 1};
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return {0xFFFD, 1};
    cp = (cp << 6) | (b & 0x3F);
  }
  return {cp, len};
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

}  // namespace

bool is_unicode_whitespace(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

bool is_unicode_punctuation(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
  }
  switch (cp) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB:
    case 0xBF: case 0x37E: case 0x387: case 0x55D: case 0x589:
    case 0x5BE: case 0x5C0: case 0x5C3: case 0x5F3: case 0x5F4:
    case 0x60C: case 0x60D: case 0x61B: case 0x61F: case 0x6D4:
    case 0x964: case 0x965: case 0x970:
      return true;
    default:
      break;
  }
  return (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) ||
         (cp >= 0x3001 && cp <= 0x3003) || (cp >= 0x3008 && cp <= 0x3011) ||
         (cp >= 0x3014 && cp <= 0x301F) || (cp >= 0xFF01 && cp <= 0xFF0F) ||
         (cp >= 0xFF1A && cp <= 0xFF20) || (cp >= 0xFE50 && cp <= 0xFE6B);
}

Tokens tokenize(std::string_view text) {
  Tokens tokens;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto [cp, len] = decode_utf8(text, pos);
    const std::string_view bytes = text.substr(pos, len);
    pos += len;
    if (is_unicode_whitespace(cp)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else if (is_unicode_punctuation(cp)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
      tokens.emplace_back(bytes);
    } else {
      current.append(bytes);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string fold_case(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto [cp, len] = decode_utf8(text, pos);
    if (cp == 0xFFFD && len == 1 && static_cast<unsigned char>(text[pos]) >= 0x80) {
      out += text[pos];
      ++pos;
      continue;
    }
    pos += len;
    char32_t lower = cp;
    if (cp >= 'A' && cp <= 'Z') {
      lower = cp + 32;
    } else if ((cp >= 0xC0 && cp <= 0xDE && cp != 0xD7)) {
      lower = cp + 32;
    } else if (cp >= 0x100 && cp <= 0x17F && cp != 0x130 && cp != 0x131 && cp != 0x138 &&
               cp != 0x149 && cp != 0x17F) {
      // Latin Extended-A alternates upper/lower, with a parity shift after U+0138.
      const bool shifted = (cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E);
      const bool is_upper = shifted ? (cp % 2 == 1) : (cp % 2 == 0);
      if (is_upper) lower = cp + 1;
    } else if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) {
      lower = cp + 32;
    } else if (cp >= 0x410 && cp <= 0x42F) {
      lower = cp + 32;
    } else if (cp >= 0x400 && cp <= 0x40F) {
      lower = cp + 80;
    }
    append_utf8(out, lower);
  }
  return out;
}

}  // namespace qebias
