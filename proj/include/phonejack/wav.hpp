#pragma once

// RIFF/WAVE writer and reader for exported audio: PCM (format 1), mono,
// 8000 Hz, 16-bit little-endian samples, canonical 44-octet header.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "phonejack/rtp.hpp"

namespace phonejack {

struct WavError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyAudio : WavError {
  EmptyAudio() : WavError("refusing to write empty audio buffer") {}
};
struct IoError : WavError {
  using WavError::WavError;
};
struct NotPcmWav : WavError {
  using WavError::WavError;
};

namespace wav_detail {
inline void put_u32le(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}
inline void put_u16le(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline std::uint32_t get_u32le(const std::string& s, std::size_t off) {
  return static_cast<std::uint8_t>(s[off]) |
         (static_cast<std::uint8_t>(s[off + 1]) << 8) |
         (static_cast<std::uint8_t>(s[off + 2]) << 16) |
         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[off + 3])) << 24);
}
inline std::uint16_t get_u16le(const std::string& s, std::size_t off) {
  return static_cast<std::uint16_t>(static_cast<std::uint8_t>(s[off]) |
                                    (static_cast<std::uint8_t>(s[off + 1]) << 8));
}
}  // namespace wav_detail

inline void write_wav(const AudioBuffer& a, const std::filesystem::path& path) {
  if (a.samples.empty()) throw EmptyAudio();
  const std::uint32_t data_len = static_cast<std::uint32_t>(a.samples.size() * 2);
  const std::uint32_t rate = static_cast<std::uint32_t>(a.sample_rate);
  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  wav_detail::put_u32le(out, 36 + data_len);
  out += "WAVE";
  out += "fmt ";
  wav_detail::put_u32le(out, 16);
  wav_detail::put_u16le(out, 1);  // PCM
  wav_detail::put_u16le(out, 1);  // mono
  wav_detail::put_u32le(out, rate);
  wav_detail::put_u32le(out, rate * 2);  // byte rate
  wav_detail::put_u16le(out, 2);         // block align
  wav_detail::put_u16le(out, 16);        // bits per sample
  out += "data";
  wav_detail::put_u32le(out, data_len);
  for (std::int16_t s : a.samples) {
    out.push_back(static_cast<char>(s & 0xff));
    out.push_back(static_cast<char>((s >> 8) & 0xff));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

inline AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path.string());
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  if (data.size() < 12 || data.compare(0, 4, "RIFF") != 0 ||
      data.compare(8, 4, "WAVE") != 0)
    throw NotPcmWav("not a RIFF/WAVE file: " + path.string());

  AudioBuffer a;
  bool have_fmt = false;
  std::size_t off = 12;
  while (off + 8 <= data.size()) {
    const std::string id = data.substr(off, 4);
    const std::uint32_t len = wav_detail::get_u32le(data, off + 4);
    const std::size_t body = off + 8;
    if (body + len > data.size()) throw NotPcmWav("truncated chunk: " + id);
    if (id == "fmt ") {
      if (len < 16) throw NotPcmWav("fmt chunk too short");
      if (wav_detail::get_u16le(data, body) != 1)
        throw NotPcmWav("format code is not PCM");
      if (wav_detail::get_u16le(data, body + 2) != 1)
        throw NotPcmWav("only mono supported");
      if (wav_detail::get_u16le(data, body + 14) != 16)
        throw NotPcmWav("only 16-bit samples supported");
      a.sample_rate = static_cast<int>(wav_detail::get_u32le(data, body + 4));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw NotPcmWav("data chunk before fmt");
      a.samples.resize(len / 2);
      for (std::size_t i = 0; i < a.samples.size(); ++i)
        a.samples[i] =
            static_cast<std::int16_t>(wav_detail::get_u16le(data, body + 2 * i));
      return a;
    }
    off = body + len + (len & 1);  // chunks are word-aligned
  }
  throw NotPcmWav("no data chunk found: " + path.string());
}

}  // namespace phonejack
