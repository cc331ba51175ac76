#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "malign/binary_io.hpp"
#include "malign/error.hpp"

namespace malign {

// Decoded PCM audio, samples scaled to [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  std::uint32_t sample_rate = 16000;

  double duration() const {
    return sample_rate ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

namespace detail {

inline std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) throw IoError("truncated WAV header");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline void write_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

}  // namespace detail

// Reads uncompressed 16-bit PCM WAV, mono or stereo. Stereo is downmixed by
// averaging the two channels.
inline AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path);
  char tag[4];
  auto read_tag = [&]() {
    if (!in.read(tag, 4)) throw IoError("truncated WAV file: " + path);
  };
  read_tag();
  if (std::memcmp(tag, "RIFF", 4) != 0) throw ValidationError("not a RIFF file: " + path);
  binary::read_u32(in);
  read_tag();
  if (std::memcmp(tag, "WAVE", 4) != 0) throw ValidationError("not a WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (true) {
    read_tag();
    const std::uint32_t size = binary::read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = detail::read_u16(in);
      channels = detail::read_u16(in);
      rate = binary::read_u32(in);
      binary::read_u32(in);  // byte rate
      detail::read_u16(in);  // block align
      bits = detail::read_u16(in);
      if (size > 16) in.seekg(size - 16 + (size & 1), std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw ValidationError("WAV data chunk before fmt chunk: " + path);
      if ((format != 1 && format != 0xFFFE) || bits != 16) {
        throw ValidationError("unsupported WAV encoding (need 16-bit PCM): " + path);
      }
      if (channels != 1 && channels != 2) throw ValidationError("unsupported channel count: " + path);
      std::vector<char> raw(size);
      if (!in.read(raw.data(), size)) throw IoError("truncated WAV data: " + path);
      const std::size_t frames = size / (2u * channels);
      AudioClip clip;
      clip.sample_rate = rate;
      clip.samples.resize(frames);
      auto sample_at = [&](std::size_t i) {
        const auto lo = static_cast<unsigned char>(raw[2 * i]);
        const auto hi = static_cast<unsigned char>(raw[2 * i + 1]);
        return static_cast<double>(static_cast<std::int16_t>(lo | (hi << 8))) / 32768.0;
      };
      for (std::size_t f = 0; f < frames; ++f) {
        clip.samples[f] = channels == 1 ? sample_at(f) : 0.5 * (sample_at(2 * f) + sample_at(2 * f + 1));
      }
      return clip;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
}

// Writes mono 16-bit PCM; samples are clipped to [-1, 1] and rounded.
inline void write_wav(const std::string& path, const AudioClip& clip) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  out.write("RIFF", 4);
  binary::write_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  binary::write_u32(out, 16);
  detail::write_u16(out, 1);
  detail::write_u16(out, 1);
  binary::write_u32(out, clip.sample_rate);
  binary::write_u32(out, clip.sample_rate * 2);
  detail::write_u16(out, 2);
  detail::write_u16(out, 16);
  out.write("data", 4);
  binary::write_u32(out, data_bytes);
  for (double s : clip.samples) {
    const double clipped = s < -1.0 ? -1.0 : (s > 1.0 ? 1.0 : s);
    long v = std::lround(clipped * 32767.0);
    detail::write_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
}

}  // namespace malign
