#pragma once

// Little-endian binary file helpers shared by the container and checkpoint
// readers. Internal to the library; not installed.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "s2x/errors.hpp"

namespace s2x::detail {

struct Writer {
  std::ofstream out;
  std::string path;
  explicit Writer(const std::string& p) : out(p, std::ios::binary), path(p) {
    if (!out) throw FormatError(p + ": cannot open for writing");
  }
  void bytes(const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out) throw FormatError(path + ": write failed");
  }
  void u16(uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    bytes(b, 2);
  }
  void u32(uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    bytes(b, 4);
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
};

struct Reader {
  std::ifstream in;
  std::string path;
  uint64_t offset = 0;
  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw FormatError(p + ": cannot open for reading");
  }
  void bytes(void* p, size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
      throw FormatError(path + ": truncated while reading " + what + " at byte offset " +
                        std::to_string(offset) + " (wanted " + std::to_string(n) + " bytes, got " +
                        std::to_string(in.gcount()) + ")");
    offset += n;
  }
  uint16_t u16(const char* what) {
    unsigned char b[2];
    bytes(b, 2, what);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
  }
  uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(b, 4, what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  void expect_magic(const char magic[4]) {
    char got[4];
    bytes(got, 4, "magic");
    if (std::memcmp(got, magic, 4) != 0)
      throw FormatError(path + ": bad magic at byte offset 0 (expected \"" + std::string(magic, 4) + "\")");
  }
  void expect_eof() {
    char extra;
    in.read(&extra, 1);
    if (in.gcount() != 0)
      throw FormatError(path + ": trailing data at byte offset " + std::to_string(offset));
  }
};

}  // namespace s2x::detail
