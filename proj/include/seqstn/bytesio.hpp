#pragma once
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "seqstn/error.hpp"

namespace seqstn::bytesio {

// Explicit little/big-endian scalar I/O so every file format is bit-specified
// independently of the host.

inline void put_u16le(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32le(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64le(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64le(std::ostream& os, double v) { put_u64le(os, std::bit_cast<uint64_t>(v)); }

inline uint16_t get_u16le(std::istream& is) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) throw FormatError("truncated stream (u16)");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t get_u32le(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated stream (u32)");
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline uint64_t get_u64le(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("truncated stream (u64)");
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline double get_f64le(std::istream& is) { return std::bit_cast<double>(get_u64le(is)); }

inline uint32_t get_u32be(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated stream (u32be)");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | b[i];
  return v;
}

inline void put_u32be(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * (3 - i)));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

inline void expect_magic(std::istream& is, const char magic[4], const char* what) {
  char b[4];
  if (!is.read(b, 4) || std::memcmp(b, magic, 4) != 0)
    throw FormatError(std::string("bad magic for ") + what);
}

}  // namespace seqstn::bytesio
