#pragma once

// UTF-8 decoding, Unicode word classes, simple case folding and whitespace
// normalization. All offsets exposed by the library count Unicode scalar
// values, so the helpers here work on std::u32string.

#include <openssl/evp.h>

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vigil/error.hpp"

namespace vigil::text {

inline constexpr char32_t kReplacement = 0xFFFD;

namespace detail {

/// Decodes one scalar value at `pos`; returns false on an invalid sequence.
inline bool decode_one(std::string_view in, std::size_t& pos, char32_t& out) {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(in[i]); };
  const unsigned char lead = byte(pos);
  if (lead < 0x80) {
    out = lead;
    ++pos;
    return true;
  }
  std::size_t len = 0;
  char32_t cp = 0;
  char32_t min = 0;
  if ((lead & 0xE0) == 0xC0) {
    len = 2, cp = lead & 0x1F, min = 0x80;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3, cp = lead & 0x0F, min = 0x800;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4, cp = lead & 0x07, min = 0x10000;
  } else {
    return false;
  }
  if (pos + len > in.size()) return false;
  for (std::size_t i = 1; i < len; ++i) {
    const unsigned char c = byte(pos + i);
    if ((c & 0xC0) != 0x80) return false;
    cp = (cp << 6) | (c & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
  out = cp;
  pos += len;
  return true;
}

}  // namespace detail

inline bool is_valid_utf8(std::string_view in) {
  std::size_t pos = 0;
  char32_t cp = 0;
  while (pos < in.size()) {
    if (!detail::decode_one(in, pos, cp)) return false;
  }
  return true;
}

/// Strict decoding throws `malformed`; lenient decoding substitutes U+FFFD
/// for each invalid byte.
inline std::u32string decode_utf8(std::string_view in, bool strict = true) {
  std::u32string out;
  out.reserve(in.size());
  std::size_t pos = 0;
  while (pos < in.size()) {
    char32_t cp = 0;
    if (detail::decode_one(in, pos, cp)) {
      out.push_back(cp);
    } else if (strict) {
      throw Error(ErrorCode::malformed, "invalid UTF-8 at byte " + std::to_string(pos));
    } else {
      out.push_back(kReplacement);
      ++pos;
    }
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string encode_utf8(std::u32string_view in) {
  std::string out;
  out.reserve(in.size());
  for (char32_t cp : in) append_utf8(out, cp);
  return out;
}

inline std::size_t length(std::string_view utf8) { return decode_utf8(utf8, false).size(); }

inline bool is_space(char32_t c) {
  switch (c) {
    case U' ': case U'\t': case U'\n': case U'\v': case U'\f': case U'\r':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

/// Letters, digits and combining marks. Range-based approximation of the
/// Unicode L*, Nd and M* categories, exact for Latin, Greek and Cyrillic.
inline bool is_word_char(char32_t c) {
  if (c < 0x80) {
    return (c >= U'0' && c <= U'9') || (c >= U'A' && c <= U'Z') || (c >= U'a' && c <= U'z');
  }
  if (c < 0xC0) return c == 0xAA || c == 0xB5 || c == 0xBA;
  if (c <= 0x24F) return c != 0xD7 && c != 0xF7;
  if (c <= 0x36F) return true;
  if (c <= 0x3FF) return c != 0x37E && c != 0x387 && c != 0x375 && c != 0x384 && c != 0x385 && c != 0x3F6;
  if (c <= 0x52F) return c != 0x482;
  if (c <= 0x58F) return !(c >= 0x55A && c <= 0x55F) && c != 0x589 && c != 0x58A;
  if (c <= 0x5FF) return c != 0x5BE && c != 0x5C0 && c != 0x5C3 && c != 0x5C6 && c != 0x5F3 && c != 0x5F4;
  if (c <= 0x6FF) {
    return c != 0x60C && c != 0x61B && c != 0x61F && !(c >= 0x66A && c <= 0x66D) && c != 0x6D4;
  }
  if (c <= 0xDFF) return c != 0x964 && c != 0x965;
  if (c <= 0xE7F) return c != 0xE3F && c != 0xE4F && c != 0xE5A && c != 0xE5B;
  if (c < 0x1E00) return true;
  if (c <= 0x1FFF) return !(c >= 0x1FBD && c <= 0x1FC1) && !(c >= 0x1FCD && c <= 0x1FCF) &&
                          !(c >= 0x1FDD && c <= 0x1FDF) && !(c >= 0x1FED && c <= 0x1FEF) &&
                          c != 0x1FFD && c != 0x1FFE;
  if (c < 0x2C00) return false;
  if (c <= 0x2DFF) return true;
  if (c < 0x3040) return c == 0x3005 || c == 0x3006 || c == 0x3007 || (c >= 0x3021 && c <= 0x3029);
  if (c < 0x3200) return c != 0x30FB;
  if (c < 0x3400) return false;
  if (c <= 0xD7FF) return true;
  if (c < 0xF900) return false;
  if (c <= 0xFAFF) return true;
  if (c <= 0xFDFF) return c != 0xFD3E && c != 0xFD3F;
  if (c <= 0xFE0F) return false;
  if (c <= 0xFE2F) return true;
  if (c <= 0xFE6F) return false;
  if (c <= 0xFEFE) return true;
  if (c <= 0xFFEF) {
    return (c >= 0xFF10 && c <= 0xFF19) || (c >= 0xFF21 && c <= 0xFF3A) ||
           (c >= 0xFF41 && c <= 0xFF5A) || (c >= 0xFF66 && c <= 0xFFDC);
  }
  if (c < 0x10000) return false;
  if (c < 0x1F000) return true;
  if (c < 0x20000) return false;
  return c <= 0x3FFFF;
}

/// One-to-one lowercase mapping; never changes string length so offsets
/// computed on folded text remain valid for the original.
inline char32_t fold_case(char32_t c) {
  if (c < 0x80) return (c >= U'A' && c <= U'Z') ? c + 32 : c;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  if (c < 0x100) return c;
  if (c <= 0x137) return (c % 2 == 0) ? c + 1 : c;
  if (c >= 0x139 && c <= 0x148) return (c % 2 == 1) ? c + 1 : c;
  if (c >= 0x14A && c <= 0x177) return (c % 2 == 0) ? c + 1 : c;
  if (c == 0x178) return 0xFF;
  if (c >= 0x179 && c <= 0x17E) return (c % 2 == 1) ? c + 1 : c;
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 32;
  if (c == 0x3C2) return 0x3C3;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c == 0x1E9E) return 0xDF;
  if ((c >= 0x1E00 && c <= 0x1E95) || (c >= 0x1EA0 && c <= 0x1EFF)) return (c % 2 == 0) ? c + 1 : c;
  return c;
}

inline std::u32string fold_case(std::u32string_view in) {
  std::u32string out(in);
  for (auto& c : out) c = fold_case(c);
  return out;
}

/// Text with whitespace runs collapsed to a single U+0020, plus the map from
/// each normalized index back to the original index it came from.
struct NormalizedText {
  std::u32string text;
  std::vector<std::size_t> origin;
};

inline NormalizedText collapse_whitespace(std::u32string_view in, bool trim = false) {
  NormalizedText out;
  out.text.reserve(in.size());
  out.origin.reserve(in.size());
  bool in_run = false;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (is_space(in[i])) {
      if (!in_run) {
        out.text.push_back(U' ');
        out.origin.push_back(i);
      }
      in_run = true;
    } else {
      out.text.push_back(in[i]);
      out.origin.push_back(i);
      in_run = false;
    }
  }
  if (trim) {
    while (!out.text.empty() && out.text.back() == U' ') {
      out.text.pop_back();
      out.origin.pop_back();
    }
    std::size_t lead = 0;
    while (lead < out.text.size() && out.text[lead] == U' ') ++lead;
    out.text.erase(0, lead);
    out.origin.erase(out.origin.begin(), out.origin.begin() + static_cast<std::ptrdiff_t>(lead));
  }
  return out;
}

/// Maps a half-open range on normalized text back onto the original.
inline std::pair<std::size_t, std::size_t> to_original(const NormalizedText& n, std::size_t begin,
                                                       std::size_t end) {
  return {n.origin[begin], n.origin[end - 1] + 1};
}

inline std::string trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
  }
  return out;
}

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::io, "sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0x0F]);
  }
  return out;
}

}  // namespace vigil::text
