#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

#include "kodm/errors.hpp"

namespace kodm::detail {

// Little-endian serialization primitives shared by the binary formats.

inline void put_u8(std::string& buf, std::uint8_t v) {
  buf.push_back(static_cast<char>(v));
}

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& buf, double v) {
  put_u64(buf, std::bit_cast<std::uint64_t>(v));
}

struct Reader {
  const std::string& buf;
  std::size_t off = 0;

  void need(std::size_t n) const {
    if (off + n > buf.size())
      throw DataError("truncated payload at byte offset " +
                      std::to_string(off));
  }
  std::uint8_t get_u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[off++]);
  }
  std::uint32_t get_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[off++]))
           << (8 * i);
    return v;
  }
  std::uint64_t get_u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[off++]))
           << (8 * i);
    return v;
  }
  double get_f64() { return std::bit_cast<double>(get_u64()); }
  void get_bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, buf.data() + off, n);
    off += n;
  }
  bool at_end() const { return off == buf.size(); }
};

} // namespace kodm::detail
