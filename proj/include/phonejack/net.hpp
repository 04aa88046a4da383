#pragma once

// Link-level packet model: MAC / IPv4 addresses, the captured-frame record
// used throughout the lab, the Internet checksum, and the Ethernet/IPv4/UDP
// frame codec. Only UDP over IPv4 over Ethernet is modeled.

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace phonejack {

using Bytes = std::vector<std::uint8_t>;

struct NetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PayloadTooLarge : NetError {
  using NetError::NetError;
};
struct UnknownHost : NetError {
  using NetError::NetError;
};
struct BadFrame : NetError {
  using NetError::NetError;
};

// ---------------------------------------------------------------------------
// Addresses

struct Mac {
  std::array<std::uint8_t, 6> octets{};

  friend bool operator==(const Mac&, const Mac&) = default;
  friend auto operator<=>(const Mac&, const Mac&) = default;

  std::string str() const {
    char buf[18];
    std::snprintf(buf, sizeof(buf), "%02x:%02x:%02x:%02x:%02x:%02x", octets[0],
                  octets[1], octets[2], octets[3], octets[4], octets[5]);
    return buf;
  }

  static Mac from_u64(std::uint64_t v) {
    Mac m;
    for (int i = 5; i >= 0; --i) {
      m.octets[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v & 0xff);
      v >>= 8;
    }
    return m;
  }

  static std::optional<Mac> parse(const std::string& s) {
    Mac m;
    unsigned b[6];
    if (std::sscanf(s.c_str(), "%x:%x:%x:%x:%x:%x", &b[0], &b[1], &b[2], &b[3],
                    &b[4], &b[5]) != 6)
      return std::nullopt;
    for (int i = 0; i < 6; ++i) {
      if (b[i] > 0xff) return std::nullopt;
      m.octets[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(b[i]);
    }
    return m;
  }
};

struct Ipv4 {
  std::uint32_t value = 0;  // host byte order

  friend bool operator==(const Ipv4&, const Ipv4&) = default;
  friend auto operator<=>(const Ipv4&, const Ipv4&) = default;

  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", (value >> 24) & 0xff,
                  (value >> 16) & 0xff, (value >> 8) & 0xff, value & 0xff);
    return buf;
  }

  static std::optional<Ipv4> parse(const std::string& s) {
    unsigned a, b, c, d;
    char tail;
    if (std::sscanf(s.c_str(), "%u.%u.%u.%u%c", &a, &b, &c, &d, &tail) != 4)
      return std::nullopt;
    if (a > 255 || b > 255 || c > 255 || d > 255) return std::nullopt;
    return Ipv4{(a << 24) | (b << 16) | (c << 8) | d};
  }
};

struct HostId {
  Ipv4 ip;
  Mac mac;
  std::string label;
};

// ---------------------------------------------------------------------------
// Internet checksum (RFC 1071): ones-complement sum of 16-bit words, odd
// trailing octet zero-padded, result complemented. Empty input gives 0xffff.

inline std::uint16_t checksum16(std::span<const std::uint8_t> data) {
  std::uint32_t sum = 0;
  std::size_t i = 0;
  for (; i + 1 < data.size(); i += 2)
    sum += (static_cast<std::uint32_t>(data[i]) << 8) | data[i + 1];
  if (i < data.size()) sum += static_cast<std::uint32_t>(data[i]) << 8;
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum & 0xffff);
}

// ---------------------------------------------------------------------------
// PacketRecord: one captured Ethernet/IPv4/UDP frame. All IPv4 header fields
// that the 20-octet option-less header carries are kept so a parsed frame can
// be re-emitted byte-identically.

constexpr std::size_t kEthHeaderLen = 14;
constexpr std::size_t kIpHeaderLen = 20;
constexpr std::size_t kUdpHeaderLen = 8;
constexpr std::size_t kMaxUdpPayload = 65507;

struct PacketRecord {
  std::uint64_t ts_micros = 0;
  Mac eth_src;
  Mac eth_dst;
  std::uint8_t ip_tos = 0;
  std::uint16_t ip_id = 0;
  std::uint16_t ip_flags_frag = 0x4000;  // DF
  std::uint8_t ip_ttl = 64;
  std::uint16_t ip_checksum = 0;
  Ipv4 ip_src;
  Ipv4 ip_dst;
  std::uint16_t udp_src_port = 0;
  std::uint16_t udp_dst_port = 0;
  std::uint16_t udp_checksum = 0;
  Bytes payload;

  friend bool operator==(const PacketRecord&, const PacketRecord&) = default;
};

namespace detail {
inline void put16(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
}
inline void put32(Bytes& b, std::uint32_t v) {
  put16(b, static_cast<std::uint16_t>(v >> 16));
  put16(b, static_cast<std::uint16_t>(v & 0xffff));
}
inline std::uint16_t get16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>((b[off] << 8) | b[off + 1]);
}
inline std::uint32_t get32(std::span<const std::uint8_t> b, std::size_t off) {
  return (static_cast<std::uint32_t>(get16(b, off)) << 16) | get16(b, off + 2);
}
}  // namespace detail

// Serializes the record to raw frame bytes. Checksum fields are written as
// stored, so deliberately broken checksums survive the trip.
inline Bytes frame_bytes(const PacketRecord& r) {
  Bytes out;
  out.reserve(kEthHeaderLen + kIpHeaderLen + kUdpHeaderLen + r.payload.size());
  out.insert(out.end(), r.eth_dst.octets.begin(), r.eth_dst.octets.end());
  out.insert(out.end(), r.eth_src.octets.begin(), r.eth_src.octets.end());
  detail::put16(out, 0x0800);  // IPv4
  const auto ip_total =
      static_cast<std::uint16_t>(kIpHeaderLen + kUdpHeaderLen + r.payload.size());
  out.push_back(0x45);  // version 4, IHL 5
  out.push_back(r.ip_tos);
  detail::put16(out, ip_total);
  detail::put16(out, r.ip_id);
  detail::put16(out, r.ip_flags_frag);
  out.push_back(r.ip_ttl);
  out.push_back(17);  // UDP
  detail::put16(out, r.ip_checksum);
  detail::put32(out, r.ip_src.value);
  detail::put32(out, r.ip_dst.value);
  const auto udp_len = static_cast<std::uint16_t>(kUdpHeaderLen + r.payload.size());
  detail::put16(out, r.udp_src_port);
  detail::put16(out, r.udp_dst_port);
  detail::put16(out, udp_len);
  detail::put16(out, r.udp_checksum);
  out.insert(out.end(), r.payload.begin(), r.payload.end());
  return out;
}

inline PacketRecord parse_frame(std::span<const std::uint8_t> raw,
                                std::uint64_t ts_micros = 0) {
  if (raw.size() < kEthHeaderLen + kIpHeaderLen + kUdpHeaderLen)
    throw BadFrame("frame shorter than Ethernet+IPv4+UDP headers");
  if (detail::get16(raw, 12) != 0x0800)
    throw BadFrame("not an IPv4 frame");
  if (raw[14] != 0x45)
    throw BadFrame("IPv4 header with options or wrong version");
  if (raw[23] != 17)
    throw BadFrame("not a UDP packet");
  PacketRecord r;
  r.ts_micros = ts_micros;
  std::copy_n(raw.begin(), 6, r.eth_dst.octets.begin());
  std::copy_n(raw.begin() + 6, 6, r.eth_src.octets.begin());
  r.ip_tos = raw[15];
  const std::uint16_t ip_total = detail::get16(raw, 16);
  r.ip_id = detail::get16(raw, 18);
  r.ip_flags_frag = detail::get16(raw, 20);
  r.ip_ttl = raw[22];
  r.ip_checksum = detail::get16(raw, 24);
  r.ip_src.value = detail::get32(raw, 26);
  r.ip_dst.value = detail::get32(raw, 30);
  r.udp_src_port = detail::get16(raw, 34);
  r.udp_dst_port = detail::get16(raw, 36);
  const std::uint16_t udp_len = detail::get16(raw, 38);
  r.udp_checksum = detail::get16(raw, 40);
  if (ip_total != kIpHeaderLen + udp_len)
    throw BadFrame("IPv4 total length disagrees with UDP length");
  if (udp_len < kUdpHeaderLen ||
      raw.size() < kEthHeaderLen + kIpHeaderLen + udp_len)
    throw BadFrame("truncated UDP datagram");
  r.payload.assign(raw.begin() + 42, raw.begin() + 42 + (udp_len - kUdpHeaderLen));
  return r;
}

// Recomputes ip_checksum and udp_checksum in place. The UDP checksum covers
// the RFC 768 pseudo-header; a computed value of zero is sent as 0xffff.
inline void fix_checksums(PacketRecord& r) {
  r.ip_checksum = 0;
  r.udp_checksum = 0;
  Bytes frame = frame_bytes(r);
  auto ip_hdr = std::span<const std::uint8_t>(frame).subspan(kEthHeaderLen, kIpHeaderLen);
  r.ip_checksum = checksum16(ip_hdr);

  const auto udp_len = static_cast<std::uint16_t>(kUdpHeaderLen + r.payload.size());
  Bytes pseudo;
  detail::put32(pseudo, r.ip_src.value);
  detail::put32(pseudo, r.ip_dst.value);
  pseudo.push_back(0);
  pseudo.push_back(17);
  detail::put16(pseudo, udp_len);
  pseudo.insert(pseudo.end(), frame.begin() + kEthHeaderLen + kIpHeaderLen,
                frame.end());
  std::uint16_t c = checksum16(pseudo);
  r.udp_checksum = c == 0 ? 0xffff : c;
}

inline bool verify_ip_checksum(const PacketRecord& r) {
  Bytes frame = frame_bytes(r);
  auto ip_hdr = std::span<const std::uint8_t>(frame).subspan(kEthHeaderLen, kIpHeaderLen);
  // A header carrying its own correct checksum sums to all-ones; checksum16
  // then reports 0.
  return checksum16(ip_hdr) == 0;
}

inline PacketRecord make_datagram(const HostId& from, Mac eth_dst, Ipv4 to_ip,
                                  std::uint16_t to_port, std::uint16_t from_port,
                                  Bytes payload, std::uint64_t ts_micros = 0,
                                  std::uint16_t ip_id = 0) {
  if (payload.size() > kMaxUdpPayload)
    throw PayloadTooLarge("UDP payload of " + std::to_string(payload.size()) +
                          " octets exceeds " + std::to_string(kMaxUdpPayload));
  PacketRecord r;
  r.ts_micros = ts_micros;
  r.eth_src = from.mac;
  r.eth_dst = eth_dst;
  r.ip_src = from.ip;
  r.ip_dst = to_ip;
  r.ip_id = ip_id;
  r.udp_src_port = from_port;
  r.udp_dst_port = to_port;
  r.payload = std::move(payload);
  fix_checksums(r);
  return r;
}

}  // namespace phonejack
