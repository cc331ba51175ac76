#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "malign/error.hpp"

// Little-endian primitives shared by the vector container and checkpoint formats.
namespace malign::binary {

template <typename U>
inline U to_little(U value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out = static_cast<U>((out << 8) | ((value >> (8 * i)) & 0xff));
    }
    return out;
  }
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("unexpected end of stream");
  return to_little(v);
}

inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("unexpected end of stream");
  return to_little(v);
}

inline void write_f32(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    for (float f : values) write_u32(out, std::bit_cast<std::uint32_t>(f));
  }
}

inline void read_f32(std::istream& in, std::span<float> values) {
  if (!in.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(float)))) {
    throw IoError("unexpected end of float32 payload");
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (float& f : values) f = std::bit_cast<float>(to_little(std::bit_cast<std::uint32_t>(f)));
  }
}

// Whole-file float32 container.
inline std::vector<float> read_f32_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open vector file: " + path);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % sizeof(float) != 0) {
    throw IoError("vector file size is not a multiple of 4 bytes: " + path);
  }
  in.seekg(0);
  std::vector<float> values(bytes / sizeof(float));
  read_f32(in, values);
  return values;
}

inline void write_f32_file(const std::string& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_f32(out, values);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace malign::binary
