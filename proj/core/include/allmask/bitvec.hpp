#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "allmask/rng.hpp"

namespace allmask {

/// Fixed-width vector of logic values. Index 0 is the first (leftmost)
/// position in the textual form, matching port declaration order.
class BitVector {
public:
  BitVector() = default;
  explicit BitVector(std::size_t width, bool value = false)
      : bits_(width, value ? 1 : 0) {}

  static BitVector from_string(std::string_view text) {
    BitVector v;
    v.bits_.reserve(text.size());
    for (const char c : text) {
      if (c == '0') {
        v.bits_.push_back(0);
      } else if (c == '1') {
        v.bits_.push_back(1);
      } else {
        throw std::invalid_argument("bit string may contain only 0 and 1");
      }
    }
    return v;
  }

  /// Low `width` bits of `value`; index 0 receives the least significant bit.
  static BitVector from_u64(std::uint64_t value, std::size_t width) {
    if (width > 64) throw std::invalid_argument("width exceeds 64");
    BitVector v(width);
    for (std::size_t i = 0; i < width; ++i) v.bits_[i] = (value >> i) & 1;
    return v;
  }

  static BitVector random(Rng& rng, std::size_t width) {
    BitVector v(width);
    std::uint64_t pool = 0;
    for (std::size_t i = 0; i < width; ++i) {
      if (i % 64 == 0) pool = rng.next();
      v.bits_[i] = (pool >> (i % 64)) & 1;
    }
    return v;
  }

  std::string to_string() const {
    std::string s;
    s.reserve(bits_.size());
    for (const std::uint8_t b : bits_) s.push_back(b ? '1' : '0');
    return s;
  }

  std::uint64_t to_u64() const {
    if (bits_.size() > 64) throw std::length_error("vector wider than 64 bits");
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < bits_.size(); ++i) {
      value |= static_cast<std::uint64_t>(bits_[i]) << i;
    }
    return value;
  }

  std::size_t size() const { return bits_.size(); }
  bool empty() const { return bits_.empty(); }

  bool operator[](std::size_t i) const { return bits_[i] != 0; }

  bool at(std::size_t i) const {
    if (i >= bits_.size()) throw std::out_of_range("bit index out of range");
    return bits_[i] != 0;
  }

  void set(std::size_t i, bool value) {
    if (i >= bits_.size()) throw std::out_of_range("bit index out of range");
    bits_[i] = value ? 1 : 0;
  }

  void push_back(bool value) { bits_.push_back(value ? 1 : 0); }

  void flip(std::size_t i) {
    if (i >= bits_.size()) throw std::out_of_range("bit index out of range");
    bits_[i] ^= 1;
  }

  std::size_t hamming_distance(const BitVector& other) const {
    if (other.size() != size()) {
      throw std::invalid_argument("hamming_distance widths differ");
    }
    std::size_t count = 0;
    for (std::size_t i = 0; i < bits_.size(); ++i) {
      count += bits_[i] != other.bits_[i];
    }
    return count;
  }

  std::size_t count_ones() const {
    std::size_t count = 0;
    for (const std::uint8_t b : bits_) count += b;
    return count;
  }

  friend bool operator==(const BitVector&, const BitVector&) = default;

  struct Hash {
    std::size_t operator()(const BitVector& v) const {
      std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ v.size();
      for (const std::uint8_t b : v.bits_) {
        h ^= b + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      }
      return static_cast<std::size_t>(h);
    }
  };

private:
  std::vector<std::uint8_t> bits_;
};

}  // namespace allmask
