#pragma once

#include <sodium.h>

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "codec.hpp"

namespace recledger {

namespace detail {
inline void ensure_sodium() {
  static const bool ready = [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
    return true;
  }();
  (void)ready;
}
}  // namespace detail

/// 256-bit SHA-256 output.
struct Digest {
  std::array<std::uint8_t, 32> bytes{};

  std::string hex() const { return to_hex(bytes); }
  static std::optional<Digest> from_hex(std::string_view hex) {
    if (hex.size() != 64) return std::nullopt;
    auto raw = recledger::from_hex(hex);
    if (!raw) return std::nullopt;
    Digest d;
    std::copy(raw->begin(), raw->end(), d.bytes.begin());
    return d;
  }
  bool is_zero() const {
    for (auto b : bytes)
      if (b != 0) return false;
    return true;
  }

  friend auto operator<=>(const Digest&, const Digest&) = default;
};

inline Digest sha256(std::span<const std::uint8_t> data) {
  detail::ensure_sodium();
  Digest d;
  crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
  return d;
}

inline Digest sha256(std::string_view s) {
  return sha256(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

using PublicKey = std::array<std::uint8_t, crypto_sign_PUBLICKEYBYTES>;
using Signature = std::array<std::uint8_t, crypto_sign_BYTES>;

class KeyPair {
 public:
  /// Ed25519 key pair from a 32-byte seed.
  static KeyPair from_seed(const Digest& seed) {
    detail::ensure_sodium();
    KeyPair kp;
    crypto_sign_seed_keypair(kp.public_.data(), kp.secret_.data(), seed.bytes.data());
    return kp;
  }

  /// Deterministic simulation identity: seed = SHA-256("recledger-key:" || id).
  static KeyPair for_participant(std::string_view id) {
    std::string material = "recledger-key:";
    material.append(id);
    return from_seed(sha256(material));
  }

  const PublicKey& public_key() const { return public_; }

  Signature sign(std::span<const std::uint8_t> message) const {
    Signature sig;
    crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret_.data());
    return sig;
  }

 private:
  PublicKey public_{};
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> secret_{};
};

inline bool verify_signature(const PublicKey& key, std::span<const std::uint8_t> message,
                             const Signature& sig) {
  detail::ensure_sodium();
  return crypto_sign_verify_detached(sig.data(), message.data(), message.size(), key.data()) == 0;
}

}  // namespace recledger
