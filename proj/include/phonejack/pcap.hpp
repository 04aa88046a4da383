#pragma once

// Classic pcap reader/writer, bit-exact: little-endian, linktype 1
// (Ethernet), 24-octet global header, 16-octet record headers. The
// nanosecond-magic variant (0xa1b23c4d) is accepted on read; files are
// always written with the microsecond magic 0xa1b2c3d4.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "phonejack/net.hpp"

namespace phonejack {

struct PcapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadMagic : PcapError {
  using PcapError::PcapError;
};
struct Truncated : PcapError {
  using PcapError::PcapError;
};
struct UnsupportedLinktype : PcapError {
  using PcapError::PcapError;
};

constexpr std::uint32_t kPcapMagicMicros = 0xa1b2c3d4;
constexpr std::uint32_t kPcapMagicNanos = 0xa1b23c4d;

struct CaptureFile {
  std::vector<PacketRecord> records;

  friend bool operator==(const CaptureFile&, const CaptureFile&) = default;
};

namespace pcap_detail {
inline void put_u32le(Bytes& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}
inline void put_u16le(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}
inline std::uint32_t get_u32le(const Bytes& b, std::size_t off) {
  return b[off] | (b[off + 1] << 8) | (b[off + 2] << 16) |
         (static_cast<std::uint32_t>(b[off + 3]) << 24);
}
}  // namespace pcap_detail

inline Bytes pcap_bytes(const CaptureFile& c) {
  Bytes out;
  pcap_detail::put_u32le(out, kPcapMagicMicros);
  pcap_detail::put_u16le(out, 2);   // version major
  pcap_detail::put_u16le(out, 4);   // version minor
  pcap_detail::put_u32le(out, 0);   // thiszone
  pcap_detail::put_u32le(out, 0);   // sigfigs
  pcap_detail::put_u32le(out, 65535);  // snaplen
  pcap_detail::put_u32le(out, 1);   // linktype: Ethernet
  for (const auto& r : c.records) {
    Bytes frame = frame_bytes(r);
    pcap_detail::put_u32le(out, static_cast<std::uint32_t>(r.ts_micros / 1'000'000));
    pcap_detail::put_u32le(out, static_cast<std::uint32_t>(r.ts_micros % 1'000'000));
    pcap_detail::put_u32le(out, static_cast<std::uint32_t>(frame.size()));
    pcap_detail::put_u32le(out, static_cast<std::uint32_t>(frame.size()));
    out.insert(out.end(), frame.begin(), frame.end());
  }
  return out;
}

inline void write_pcap(const std::filesystem::path& path, const CaptureFile& c) {
  Bytes out = pcap_bytes(c);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw PcapError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw PcapError("write failed: " + path.string());
}

inline CaptureFile parse_pcap(const Bytes& data) {
  if (data.size() < 24) throw Truncated("pcap global header incomplete");
  const std::uint32_t magic = pcap_detail::get_u32le(data, 0);
  bool nanos = false;
  if (magic == kPcapMagicNanos)
    nanos = true;
  else if (magic != kPcapMagicMicros)
    throw BadMagic("unrecognized pcap magic");
  const std::uint32_t linktype = pcap_detail::get_u32le(data, 20);
  if (linktype != 1)
    throw UnsupportedLinktype("linktype " + std::to_string(linktype) +
                              " (only Ethernet is supported)");
  CaptureFile c;
  std::size_t off = 24;
  while (off < data.size()) {
    if (off + 16 > data.size()) throw Truncated("pcap record header incomplete");
    const std::uint32_t ts_sec = pcap_detail::get_u32le(data, off);
    const std::uint32_t ts_frac = pcap_detail::get_u32le(data, off + 4);
    const std::uint32_t incl = pcap_detail::get_u32le(data, off + 8);
    off += 16;
    if (off + incl > data.size()) throw Truncated("pcap record body incomplete");
    PacketRecord r;
    try {
      r = parse_frame(std::span<const std::uint8_t>(data.data() + off, incl));
    } catch (const BadFrame& e) {
      throw UnsupportedLinktype(std::string("unsupported frame contents: ") +
                                e.what());
    }
    r.ts_micros = static_cast<std::uint64_t>(ts_sec) * 1'000'000 +
                  (nanos ? ts_frac / 1000 : ts_frac);
    c.records.push_back(std::move(r));
    off += incl;
  }
  return c;
}

inline CaptureFile read_pcap(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PcapError("cannot open for reading: " + path.string());
  Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_pcap(data);
}

}  // namespace phonejack
