#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "sopt/error.hpp"

namespace sopt::detail {

// Little-endian primitives shared by the TENS1 and checkpoint formats.
// Readers throw FormatError whose message starts with "truncated" on EOF.

inline void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

inline void put_u16(std::ostream& out, std::uint16_t v) {
  put_u8(out, v & 0xff);
  put_u8(out, v >> 8);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) put_u8(out, (v >> (8 * i)) & 0xff);
}

inline std::uint8_t get_u8(std::istream& in) {
  const int c = in.get();
  if (c == std::char_traits<char>::eof()) throw FormatError("truncated input");
  return static_cast<std::uint8_t>(c);
}

inline std::uint16_t get_u16(std::istream& in) {
  const std::uint16_t lo = get_u8(in);
  return static_cast<std::uint16_t>(lo | (get_u8(in) << 8));
}

inline std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(get_u8(in)) << (8 * i);
  return v;
}

}  // namespace sopt::detail
