#pragma once

// Little-endian primitives and the shared container framing:
//   magic (4 bytes) | version u16 | header length u32 | UTF-8 JSON header | records

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "specsense/errors.hpp"

namespace specsense::io {

static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T read_le(std::istream& in) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes{};
  if (!in.read(bytes.data(), bytes.size())) throw ValidationError("unexpected end of file");
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

struct ContainerHeader {
  std::string magic;
  std::uint16_t version = 0;
  std::string header;
};

inline void write_container_header(std::ostream& out, std::string_view magic, std::uint16_t version,
                                   std::string_view header) {
  require(magic.size() == 4, "container magic must be 4 bytes");
  out.write(magic.data(), 4);
  write_le<std::uint16_t>(out, version);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
}

inline ContainerHeader read_container_header(std::istream& in, std::string_view expected_magic) {
  ContainerHeader h;
  h.magic.resize(4);
  if (!in.read(h.magic.data(), 4)) throw ValidationError("file too short for container magic");
  if (h.magic != expected_magic) {
    throw ValidationError("bad magic: expected " + std::string(expected_magic) + ", got " + h.magic);
  }
  h.version = read_le<std::uint16_t>(in);
  const auto length = read_le<std::uint32_t>(in);
  h.header.resize(length);
  if (length > 0 && !in.read(h.header.data(), length)) throw ValidationError("truncated container header");
  return h;
}

}  // namespace specsense::io
