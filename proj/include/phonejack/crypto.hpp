#pragma once

// Thin wrapper over libsodium: SHA-256 payload digests for the dedup filter
// and ChaCha20-Poly1305 (IETF, 96-bit nonce) for the relay tunnel. Nonces
// are a random 32-bit instance prefix plus a 64-bit counter, so they are
// unique under one key for any realistic run.

#include <sodium.h>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "phonejack/net.hpp"

namespace phonejack {

struct CryptoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AuthFailure : CryptoError {
  using CryptoError::CryptoError;
};
struct NonceExhausted : CryptoError {
  NonceExhausted() : CryptoError("tunnel nonce counter exhausted") {}
};

inline void crypto_init() {
  static const int rc = sodium_init();
  if (rc < 0) throw CryptoError("sodium_init failed");
}

constexpr std::size_t kKeyBytes = 32;
constexpr std::size_t kNonceBytes = 12;
constexpr std::size_t kTagBytes = 16;

using Digest256 = std::array<std::uint8_t, 32>;

inline Digest256 sha256(std::span<const std::uint8_t> data) {
  crypto_init();
  Digest256 out;
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

class Sha256Stream {
 public:
  Sha256Stream() {
    crypto_init();
    crypto_hash_sha256_init(&state_);
  }
  void update(std::span<const std::uint8_t> data) {
    crypto_hash_sha256_update(&state_, data.data(), data.size());
  }
  Digest256 finish() const {
    auto s = state_;  // keep the stream reusable for further updates
    Digest256 out;
    crypto_hash_sha256_final(&s, out.data());
    return out;
  }

 private:
  crypto_hash_sha256_state state_;
};

inline std::string hex(std::span<const std::uint8_t> data) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(data.size() * 2);
  for (auto b : data) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0x0f]);
  }
  return s;
}

inline std::optional<Bytes> from_hex(const std::string& s) {
  if (s.size() % 2) return std::nullopt;
  Bytes out(s.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto nib = [](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      return -1;
    };
    int hi = nib(s[2 * i]), lo = nib(s[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

struct TunnelKey {
  std::array<std::uint8_t, kKeyBytes> key{};
  std::uint32_t nonce_prefix = 0;
  std::uint64_t nonce_counter = 0;

  static TunnelKey from_hex_key(const std::string& hex_key,
                                std::uint32_t prefix = 0) {
    auto raw = from_hex(hex_key);
    if (!raw || raw->size() != kKeyBytes)
      throw CryptoError("pre-shared key must be 64 hex digits");
    TunnelKey k;
    std::copy(raw->begin(), raw->end(), k.key.begin());
    k.nonce_prefix = prefix;
    return k;
  }

  std::array<std::uint8_t, kNonceBytes> next_nonce() {
    if (nonce_counter == UINT64_MAX) throw NonceExhausted();
    std::array<std::uint8_t, kNonceBytes> n{};
    std::uint32_t p = nonce_prefix;
    for (int i = 3; i >= 0; --i) {
      n[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(p & 0xff);
      p >>= 8;
    }
    std::uint64_t c = nonce_counter++;
    for (int i = 11; i >= 4; --i) {
      n[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(c & 0xff);
      c >>= 8;
    }
    return n;
  }
};

// nonce || ciphertext+tag
inline Bytes aead_seal(TunnelKey& k, std::span<const std::uint8_t> plaintext) {
  crypto_init();
  auto nonce = k.next_nonce();
  Bytes out(kNonceBytes + plaintext.size() + kTagBytes);
  std::copy(nonce.begin(), nonce.end(), out.begin());
  unsigned long long clen = 0;
  crypto_aead_chacha20poly1305_ietf_encrypt(
      out.data() + kNonceBytes, &clen, plaintext.data(), plaintext.size(),
      nullptr, 0, nullptr, nonce.data(), k.key.data());
  out.resize(kNonceBytes + clen);
  return out;
}

inline Bytes aead_open(const TunnelKey& k, std::span<const std::uint8_t> sealed) {
  crypto_init();
  if (sealed.size() < kNonceBytes + kTagBytes)
    throw AuthFailure("sealed message too short");
  Bytes out(sealed.size() - kNonceBytes - kTagBytes);
  unsigned long long plen = 0;
  if (crypto_aead_chacha20poly1305_ietf_decrypt(
          out.data(), &plen, nullptr, sealed.data() + kNonceBytes,
          sealed.size() - kNonceBytes, nullptr, 0, sealed.data(),
          k.key.data()) != 0)
    throw AuthFailure("authentication failed");
  out.resize(plen);
  return out;
}

}  // namespace phonejack
