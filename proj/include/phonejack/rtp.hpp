#pragma once

// RTP packet model and codec plumbing: 12-octet big-endian header
// (version 2, no padding/extension/CSRC on encode), G.711 u-law at 8 kHz
// with 160-octet (20 ms) packets, and sequence-number reassembly with
// silence fill for losses.

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "phonejack/net.hpp"

namespace phonejack {

struct RtpError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TooShort : RtpError {
  using RtpError::RtpError;
};
struct BadVersion : RtpError {
  using RtpError::RtpError;
};
struct EmptyStream : RtpError {
  EmptyStream() : RtpError("no packets in stream") {}
};

constexpr int kSampleRate = 8000;
constexpr std::size_t kSamplesPerPacket = 160;  // 20 ms at 8 kHz
constexpr std::uint64_t kPacketIntervalMicros = 20'000;
constexpr std::uint16_t kRtpPortMin = 16384;
constexpr std::uint16_t kRtpPortMax = 32767;

struct RtpPacket {
  std::uint8_t version = 2;
  std::uint8_t payload_type = 0;  // 0 = G.711 u-law
  std::uint16_t sequence = 0;
  std::uint32_t timestamp = 0;
  std::uint32_t ssrc = 0;
  Bytes payload;

  friend bool operator==(const RtpPacket&, const RtpPacket&) = default;
};

struct RtpStreamKey {
  std::uint32_t ssrc = 0;
  Ipv4 src_ip;
  Ipv4 dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;

  friend bool operator==(const RtpStreamKey&, const RtpStreamKey&) = default;
  friend auto operator<=>(const RtpStreamKey&, const RtpStreamKey&) = default;

  std::string str() const {
    char ssrc_hex[12];
    std::snprintf(ssrc_hex, sizeof(ssrc_hex), "%08x", ssrc);
    return std::string(ssrc_hex) + " " + src_ip.str() + ":" +
           std::to_string(src_port) + " -> " + dst_ip.str() + ":" +
           std::to_string(dst_port);
  }
};

inline Bytes encode_rtp(const RtpPacket& p) {
  Bytes b;
  b.reserve(12 + p.payload.size());
  b.push_back(static_cast<std::uint8_t>(p.version << 6));  // P=X=CC=0
  b.push_back(static_cast<std::uint8_t>(p.payload_type & 0x7f));  // M=0
  detail::put16(b, p.sequence);
  detail::put32(b, p.timestamp);
  detail::put32(b, p.ssrc);
  b.insert(b.end(), p.payload.begin(), p.payload.end());
  return b;
}

inline RtpPacket decode_rtp(std::span<const std::uint8_t> raw) {
  if (raw.size() < 12)
    throw TooShort("RTP packet of " + std::to_string(raw.size()) + " octets");
  RtpPacket p;
  p.version = raw[0] >> 6;
  if (p.version != 2)
    throw BadVersion("RTP version " + std::to_string(p.version));
  const std::size_t csrc_count = raw[0] & 0x0f;
  const std::size_t header_len = 12 + 4 * csrc_count;
  if (raw.size() < header_len) throw TooShort("RTP header truncated by CSRC list");
  p.payload_type = raw[1] & 0x7f;
  p.sequence = detail::get16(raw, 2);
  p.timestamp = detail::get32(raw, 4);
  p.ssrc = detail::get32(raw, 8);
  p.payload.assign(raw.begin() + static_cast<long>(header_len), raw.end());
  return p;
}

// ---------------------------------------------------------------------------
// G.711 u-law

namespace g711 {
constexpr int kBias = 0x84;
constexpr int kClip = 32635;
}  // namespace g711

inline std::uint8_t ulaw_encode(std::int16_t sample) {
  int value = sample;
  int sign = 0;
  if (value < 0) {
    value = -value;
    sign = 0x80;
  }
  if (value > g711::kClip) value = g711::kClip;
  value += g711::kBias;
  int exponent = 7;
  for (int mask = 0x4000; (value & mask) == 0 && exponent > 0; mask >>= 1)
    --exponent;
  const int mantissa = (value >> (exponent + 3)) & 0x0f;
  return static_cast<std::uint8_t>(~(sign | (exponent << 4) | mantissa));
}

inline std::int16_t ulaw_decode(std::uint8_t octet) {
  const std::uint8_t u = static_cast<std::uint8_t>(~octet);
  const int sign = u & 0x80;
  const int exponent = (u >> 4) & 0x07;
  const int mantissa = u & 0x0f;
  int value = ((mantissa << 3) + g711::kBias) << exponent;
  value -= g711::kBias;
  return static_cast<std::int16_t>(sign ? -value : value);
}

inline Bytes ulaw_encode_block(std::span<const std::int16_t> pcm) {
  Bytes out(pcm.size());
  for (std::size_t i = 0; i < pcm.size(); ++i) out[i] = ulaw_encode(pcm[i]);
  return out;
}

inline std::vector<std::int16_t> ulaw_decode_block(std::span<const std::uint8_t> in) {
  std::vector<std::int16_t> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = ulaw_decode(in[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Reassembly

struct AudioBuffer {
  int sample_rate = kSampleRate;
  std::vector<std::int16_t> samples;
  // [start, length) sample ranges filled as silence for missing packets.
  std::vector<std::pair<std::size_t, std::size_t>> gap_map;

  friend bool operator==(const AudioBuffer&, const AudioBuffer&) = default;
};

// Serial comparison with a 32768 wraparound window.
inline bool seq_less(std::uint16_t a, std::uint16_t b) {
  return a != b && static_cast<std::uint16_t>(b - a) < 0x8000;
}

// Orders packets by sequence number (16-bit wraparound), keeps the first
// occurrence of duplicates, decodes u-law payloads, and fills missing
// sequence numbers with silence recorded in gap_map.
inline AudioBuffer reassemble(std::span<const RtpPacket> packets,
                              const RtpStreamKey& key) {
  if (packets.empty()) throw EmptyStream();

  // First occurrence per sequence number, first-arrival wins.
  std::map<std::uint16_t, const RtpPacket*> by_seq;
  for (const auto& p : packets) {
    if (p.ssrc != key.ssrc)
      throw RtpError("packet ssrc does not match stream key");
    by_seq.emplace(p.sequence, &p);
  }

  // Serially-least sequence number is the stream start (desk-scale streams
  // span well under half the sequence space).
  std::uint16_t start = by_seq.begin()->first;
  for (const auto& [seq, p] : by_seq)
    if (seq_less(seq, start)) start = seq;
  std::uint16_t last = start;
  for (const auto& [seq, p] : by_seq)
    if (seq_less(last, seq)) last = seq;

  const std::size_t span = static_cast<std::uint16_t>(last - start) + 1u;
  AudioBuffer out;
  out.samples.reserve(span * kSamplesPerPacket);
  for (std::size_t i = 0; i < span; ++i) {
    const auto seq = static_cast<std::uint16_t>(start + i);
    auto it = by_seq.find(seq);
    if (it == by_seq.end()) {
      out.gap_map.emplace_back(out.samples.size(), kSamplesPerPacket);
      out.samples.insert(out.samples.end(), kSamplesPerPacket, 0);
    } else {
      auto pcm = ulaw_decode_block(it->second->payload);
      out.samples.insert(out.samples.end(), pcm.begin(), pcm.end());
    }
  }
  return out;
}

}  // namespace phonejack
