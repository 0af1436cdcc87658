#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "morphinfo/errors.hpp"

namespace morphinfo::utf8 {

// Splits a UTF-8 string into one std::string per Unicode codepoint. Digraphs
// such as "għ" or "ie" come out as two symbols.
inline std::vector<std::string> split_codepoints(std::string_view text) {
  std::vector<std::string> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    if (lead < 0x80) {
      len = 1;
    } else if ((lead & 0xE0) == 0xC0) {
      len = 2;
    } else if ((lead & 0xF0) == 0xE0) {
      len = 3;
    } else if ((lead & 0xF8) == 0xF0) {
      len = 4;
    } else {
      throw Error("invalid UTF-8 lead byte");
    }
    if (i + len > text.size()) throw Error("truncated UTF-8 sequence");
    for (std::size_t j = 1; j < len; ++j) {
      if ((static_cast<unsigned char>(text[i + j]) & 0xC0) != 0x80) {
        throw Error("invalid UTF-8 continuation byte");
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

inline bool is_valid(std::string_view text) {
  try {
    split_codepoints(text);
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace morphinfo::utf8
