#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include "morphinfo/lexicon.hpp"

namespace morphinfo {

// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Hash of the canonical TSV rendering, so formatting differences in the
// source file (CRLF, label spellings, trailing blank lines) do not matter.
inline std::string dataset_hash(const Lexicon& lexicon) {
  return "fnv1a64:" + fnv1a_hex(write_lexicon(lexicon));
}

}  // namespace morphinfo
