#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace allmask {

/// Deterministic 64-bit generator (xoshiro256** seeded via splitmix64).
///
/// Every randomized routine in the library draws from this generator so that
/// results are reproducible bit for bit across platforms and standard library
/// versions. std::mt19937 would fix the stream but not the distributions, so
/// the helpers below implement their own rejection sampling.
class Rng {
public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform integer in [0, bound). bound = 0 yields 0.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = bound * (~std::uint64_t{0} / bound);
    std::uint64_t draw;
    do {
      draw = next();
    } while (draw >= limit);
    return draw % bound;
  }

  bool coin() { return (next() >> 63) != 0; }

  /// Uniform double in [0, 1).
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Fisher-Yates shuffle with draws from this generator.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Derive an independent child stream (for parallel or per-item use).
  Rng fork(std::uint64_t salt) {
    std::uint64_t s = next() ^ (salt * 0x9e3779b97f4a7c15ULL);
    return Rng(splitmix64(s));
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

private:
  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }

  std::uint64_t state_[4];
};

/// Seeded bijection over [0, 2^bits), bits in [1, 63].
///
/// A four-round Feistel network keyed from the seed; values outside the
/// domain are cycle-walked back in. Used to visit a key space exactly once
/// in an order that carries no information about the key structure.
class SeededPermutation {
public:
  SeededPermutation(std::uint64_t seed, unsigned bits) : bits_(bits) {
    Rng rng(seed ^ 0x70652d726d757431ULL);
    for (auto& k : keys_) k = rng.next();
    half_ = (bits_ + 1) / 2;
    half_mask_ = (half_ >= 64) ? ~std::uint64_t{0} : ((std::uint64_t{1} << half_) - 1);
    domain_ = std::uint64_t{1} << bits_;
  }

  std::uint64_t size() const { return domain_; }

  std::uint64_t map(std::uint64_t value) const {
    std::uint64_t v = value;
    do {
      v = feistel(v);
    } while (v >= domain_);
    return v;
  }

private:
  std::uint64_t feistel(std::uint64_t v) const {
    std::uint64_t left = v >> half_;
    std::uint64_t right = v & half_mask_;
    for (const std::uint64_t key : keys_) {
      const std::uint64_t mixed = mix(right ^ key) & half_mask_;
      const std::uint64_t next_left = right;
      right = (left ^ mixed) & half_mask_;
      left = next_left;
    }
    return ((left << half_) | right) & ((domain_ << 1) - 1);
  }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
    z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
    return z ^ (z >> 33);
  }

  unsigned bits_;
  unsigned half_;
  std::uint64_t half_mask_;
  std::uint64_t domain_;
  std::uint64_t keys_[4];
};

}  // namespace allmask
