#include "allmask/rgate.hpp"

namespace allmask {

RGate::RGate(RGateKind kind,
             std::vector<NetId> f_inputs,
             std::vector<NetId> g_inputs,
             std::uint32_t endurance_budget)
    : kind_(kind),
      f_inputs_(std::move(f_inputs)),
      g_inputs_(std::move(g_inputs)),
      endurance_budget_(endurance_budget) {
  if (f_inputs_.empty()) {
    throw std::invalid_argument("rGate needs at least one F input");
  }
  if (g_inputs_.empty()) {
    throw std::invalid_argument("rGate needs at least one G input");
  }
}

void RGate::reconfigure(bool key_bit) {
  if (failed_) {
    throw DeviceFailed("rGate already failed; write " + std::to_string(write_count_ + 1) +
                       " rejected");
  }
  ++write_count_;
  if (write_count_ > endurance_budget_) {
    failed_ = true;
    throw DeviceFailed("rGate endurance budget of " + std::to_string(endurance_budget_) +
                       " writes exhausted at write " + std::to_string(write_count_));
  }
  state_ = polarization_for_key_bit(key_bit);
}

std::uint64_t RGate::combine_words(RGateKind kind,
                                   Polarization state,
                                   std::span<const std::uint64_t> f_words,
                                   std::span<const std::uint64_t> g_words) {
  if (kind == RGateKind::Type1) {
    std::uint64_t f = ~std::uint64_t{0};
    for (const std::uint64_t w : f_words) f &= w;
    if (state == Polarization::Lvt) return ~f;
    std::uint64_t g = ~std::uint64_t{0};
    for (const std::uint64_t w : g_words) g &= w;
    return ~(f & g);
  }
  std::uint64_t f = 0;
  for (const std::uint64_t w : f_words) f |= w;
  if (state == Polarization::Lvt) return ~f;
  std::uint64_t g = 0;
  for (const std::uint64_t w : g_words) g |= w;
  return ~(f | g);
}

bool RGate::eval(std::span<const bool> f_bits, std::span<const bool> g_bits) const {
  if (failed_) {
    throw DeviceFailed("rGate failed; compute rejected");
  }
  if (f_bits.size() != f_inputs_.size() || g_bits.size() != g_inputs_.size()) {
    throw WidthMismatch("rGate eval cone width mismatch");
  }
  std::vector<std::uint64_t> f_words(f_bits.size());
  std::vector<std::uint64_t> g_words(g_bits.size());
  for (std::size_t i = 0; i < f_bits.size(); ++i) f_words[i] = f_bits[i] ? ~std::uint64_t{0} : 0;
  for (std::size_t i = 0; i < g_bits.size(); ++i) g_words[i] = g_bits[i] ? ~std::uint64_t{0} : 0;
  return (combine_words(kind_, state_, f_words, g_words) & 1) != 0;
}

}  // namespace allmask
