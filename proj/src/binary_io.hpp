#pragma once

// Little-endian primitives shared by the .bags and .milmodel containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "miladv/errors.hpp"

namespace miladv::detail {

template <class T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_arithmetic_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& in, const std::string& path) {
  unsigned char bytes[sizeof(T)];
  const auto offset = static_cast<long long>(in.tellg());
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw FormatError(path + " @ offset " + std::to_string(offset) + ": truncated");
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& path) {
  char got[4] = {};
  if (!in.read(got, 4) || std::memcmp(got, magic, 4) != 0)
    throw FormatError(path + " @ offset 0: expected magic \"" + std::string(magic) + "\"");
}

}  // namespace miladv::detail
