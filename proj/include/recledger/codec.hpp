#pragma once

// Canonical byte encoding shared by every digest and signature preimage:
// strings and byte fields are length-prefixed (4-byte big-endian length),
// integers are 8-byte big-endian.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace recledger {

using Bytes = std::vector<std::uint8_t>;

struct DecodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0x0f]);
  }
  return out;
}

inline std::optional<Bytes> from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) return std::nullopt;
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

inline bool is_lower_hex(std::string_view s, std::size_t length) {
  if (s.size() != length) return false;
  for (char c : s)
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  return true;
}

class Encoder {
 public:
  Encoder& u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8)
      buf_.push_back(static_cast<std::uint8_t>(v >> shift));
    return *this;
  }
  Encoder& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }
  Encoder& u8(std::uint8_t v) {
    buf_.push_back(v);
    return *this;
  }
  Encoder& bytes(std::span<const std::uint8_t> b) {
    length(b.size());
    buf_.insert(buf_.end(), b.begin(), b.end());
    return *this;
  }
  Encoder& str(std::string_view s) {
    length(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
    return *this;
  }
  Encoder& raw(std::span<const std::uint8_t> b) {
    buf_.insert(buf_.end(), b.begin(), b.end());
    return *this;
  }

  const Bytes& data() const& { return buf_; }
  Bytes data() && { return std::move(buf_); }

 private:
  void length(std::size_t n) {
    if (n > 0xffffffffu) throw std::length_error("field longer than 2^32-1 bytes");
    for (int shift = 24; shift >= 0; shift -= 8)
      buf_.push_back(static_cast<std::uint8_t>(n >> shift));
  }

  Bytes buf_;
};

// Strict reader: every accessor throws DecodeError on truncation.
class Decoder {
 public:
  explicit Decoder(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | data_[pos_++];
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  Bytes bytes() {
    auto n = length();
    need(n);
    Bytes out(data_.begin() + pos_, data_.begin() + pos_ + n);
    pos_ += n;
    return out;
  }
  std::string str() {
    auto n = length();
    need(n);
    std::string out(reinterpret_cast<const char*>(data_.data()) + pos_, n);
    pos_ += n;
    return out;
  }
  // Element counts are u64 on the wire; cap them by the bytes left so a
  // corrupted count cannot trigger a huge allocation.
  std::size_t count(std::size_t min_element_size = 1) {
    auto n = u64();
    if (min_element_size > 0 && n > remaining() / min_element_size)
      throw DecodeError("element count exceeds remaining input");
    return static_cast<std::size_t>(n);
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }
  void expect_done() const {
    if (!done()) throw DecodeError("trailing bytes");
  }

 private:
  std::size_t length() {
    need(4);
    std::size_t n = 0;
    for (int i = 0; i < 4; ++i) n = (n << 8) | data_[pos_++];
    return n;
  }
  void need(std::size_t n) const {
    if (remaining() < n) throw DecodeError("truncated input");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace recledger
