#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "allmask/netlist.hpp"

namespace allmask {

/// Thrown when a reconfigurable gate is driven past its write endurance.
/// Failure is permanent: once raised, every later compute or write on the
/// same device raises it again.
class DeviceFailed : public std::runtime_error {
public:
  explicit DeviceFailed(const std::string& what) : std::runtime_error(what) {}
};

/// The two gate families. Type1 blends an inverted AND cone, Type2 an
/// inverted OR cone:
///   Type1  Lvt: NOT(AND(F))            Hvt: NOT(AND(F) AND AND(G))
///   Type2  Lvt: NOT(OR(F))             Hvt: NOT(OR(F)  OR  OR(G))
enum class RGateKind : std::uint8_t { Type1 = 1, Type2 = 2 };

/// Transistor polarization of the reconfigurable pair. Key bit 1 programs
/// Lvt (the gate computes NOT over F alone), key bit 0 programs Hvt (the G
/// cone joins the function).
enum class Polarization : std::uint8_t { Lvt, Hvt };

inline Polarization polarization_for_key_bit(bool key_bit) {
  return key_bit ? Polarization::Lvt : Polarization::Hvt;
}

constexpr std::uint32_t kDefaultEnduranceBudget = 100000;

/// One two-state reconfigurable gate with write accounting.
///
/// Computing never changes state. reconfigure() consumes one write from the
/// endurance budget whether or not the polarization actually changes; the
/// write that exceeds the budget leaves the device permanently failed.
class RGate {
public:
  RGate(RGateKind kind,
        std::vector<NetId> f_inputs,
        std::vector<NetId> g_inputs,
        std::uint32_t endurance_budget = kDefaultEnduranceBudget);

  RGateKind kind() const { return kind_; }
  const std::vector<NetId>& f_inputs() const { return f_inputs_; }
  const std::vector<NetId>& g_inputs() const { return g_inputs_; }
  Polarization state() const { return state_; }
  std::uint32_t write_count() const { return write_count_; }
  std::uint32_t endurance_budget() const { return endurance_budget_; }
  bool failed() const { return failed_; }

  /// Programs the polarization chosen by `key_bit`. Always consumes one
  /// write; throws DeviceFailed when the device is already failed or this
  /// write exhausts the budget.
  void reconfigure(bool key_bit);

  /// Computes the gate for one set of cone values. f_bits/g_bits follow
  /// f_inputs()/g_inputs() order. Throws DeviceFailed on a failed device.
  bool eval(std::span<const bool> f_bits, std::span<const bool> g_bits) const;

  /// Word-parallel core shared by the netlist evaluators; pure.
  static std::uint64_t combine_words(RGateKind kind,
                                     Polarization state,
                                     std::span<const std::uint64_t> f_words,
                                     std::span<const std::uint64_t> g_words);

private:
  RGateKind kind_;
  std::vector<NetId> f_inputs_;
  std::vector<NetId> g_inputs_;
  Polarization state_ = Polarization::Hvt;
  std::uint32_t write_count_ = 0;
  std::uint32_t endurance_budget_;
  bool failed_ = false;
};

}  // namespace allmask
