#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <ostream>

namespace ecgtext::detail {

inline void write_le_floats(std::ostream& out, const float* data, size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    for (size_t i = 0; i < n; ++i) {
      uint32_t u;
      std::memcpy(&u, data + i, 4);
      const char b[4] = {char(u & 0xff), char((u >> 8) & 0xff), char((u >> 16) & 0xff), char((u >> 24) & 0xff)};
      out.write(b, 4);
    }
  }
}

inline void decode_le_floats(const char* bytes, float* out, size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out, bytes, n * sizeof(float));
  } else {
    for (size_t i = 0; i < n; ++i) {
      const auto* b = reinterpret_cast<const unsigned char*>(bytes + 4 * i);
      const uint32_t u = uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
      std::memcpy(out + i, &u, 4);
    }
  }
}

}  // namespace ecgtext::detail
