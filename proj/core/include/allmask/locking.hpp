#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "allmask/bitvec.hpp"
#include "allmask/netlist.hpp"
#include "allmask/rgate.hpp"

namespace allmask {

enum class LockErrorKind { NotEnoughEligibleGates, NoValidGChoice };

class LockError : public std::runtime_error {
public:
  LockError(LockErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  LockErrorKind kind() const { return kind_; }

private:
  LockErrorKind kind_;
};

class KeyNotStripped : public std::logic_error {
public:
  explicit KeyNotStripped(const std::string& what) : std::logic_error(what) {}
};

/// How an original gate was rebuilt around an rGate.
///   CutAnd:    AND-family target, G taken out of the gate's own inputs,
///              correct key bit 0 (Type1 Hvt restores the original cone).
///   ExpandOr:  OR-family target, G appended from elsewhere, correct bit 1.
///   ExpandAnd: AND-family target, G appended, correct bit 1.
///   CutOr:     OR-family target, G taken out of the inputs, correct bit 0.
enum class ReplacementType : std::uint8_t { CutAnd, ExpandOr, ExpandAnd, CutOr };

std::string_view replacement_type_name(ReplacementType type);
RGateKind rgate_kind_for(ReplacementType type);
bool correct_key_bit_for(ReplacementType type);

struct LockPolicy {
  std::size_t key_length = 1;
  std::uint64_t seed = 0;
  std::vector<ReplacementType> allowed_types = {
      ReplacementType::CutAnd, ReplacementType::ExpandOr,
      ReplacementType::ExpandAnd, ReplacementType::CutOr};
  std::size_t g_width = 1;
  int depth_margin = 1;
  std::uint32_t endurance_budget = kDefaultEnduranceBudget;
  /// Splittable files model one rGate group per core with per-group
  /// observable cones; the default models simultaneous whole-key masking.
  bool splittable = false;
  /// When non-empty, lock exactly these gates (by output net name) in the
  /// given order instead of sampling.
  std::vector<std::string> explicit_gates;
};

struct PlacementRecord {
  std::string rgate_net;
  GateKind original_kind = GateKind::Nand;
  std::vector<std::string> original_inputs;
  ReplacementType type = ReplacementType::CutAnd;
  std::vector<std::string> g_nets;
  int depth = 0;
  std::size_t key_index = 0;
  /// Set when the original gate was plain AND/OR and a NOT was appended to
  /// cancel the rGate's inverted output.
  std::string inverter_net;
};

/// A netlist whose selected gates were replaced by keyed rGates.
///
/// The structure (elements, cones, bindings) is immutable after
/// construction. Device state (polarization, write ledger, failure) changes
/// only through apply_key, which models one hardware write event per rGate.
/// The evaluate_with_key family is pure simulation and never touches the
/// devices.
class LockedNetlist {
public:
  struct Element {
    NetId output;
    GateKind kind = GateKind::And;
    std::vector<NetId> inputs;
    /// Index into rgates() or -1 for a plain gate. For rGate elements,
    /// `kind`/`inputs` are unused; the cones live in the rGate.
    std::int32_t rgate = -1;
  };

  struct DeviceState {
    Polarization state = Polarization::Hvt;
    std::uint32_t write_count = 0;
    bool failed = false;
  };

  LockedNetlist(std::string name,
                std::vector<std::string> net_names,
                std::vector<NetId> primary_inputs,
                std::vector<NetId> primary_outputs,
                std::vector<Element> elements,
                std::vector<RGate> rgates,
                std::uint32_t endurance_budget,
                bool splittable,
                std::optional<BitVector> correct_key,
                std::vector<PlacementRecord> placements);

  const std::string& name() const { return name_; }
  std::size_t net_count() const { return net_names_.size(); }
  std::size_t input_count() const { return primary_inputs_.size(); }
  std::size_t output_count() const { return primary_outputs_.size(); }
  std::size_t key_length() const { return rgates_.size(); }

  const std::vector<NetId>& primary_inputs() const { return primary_inputs_; }
  const std::vector<NetId>& primary_outputs() const { return primary_outputs_; }
  const std::vector<Element>& elements() const { return elements_; }
  const std::vector<RGate>& rgates() const { return rgates_; }
  const std::string& net_name(NetId id) const { return net_names_[id.index]; }
  std::optional<NetId> find_net(std::string_view name) const;

  bool splittable() const { return splittable_; }
  std::uint32_t endurance_budget() const { return endurance_budget_; }

  bool has_key() const { return correct_key_.has_value(); }
  /// Designer-side accessors; throw KeyNotStripped-adjacent logic errors
  /// when called on an attacker view.
  const BitVector& correct_key() const;
  const std::vector<PlacementRecord>& placements() const;

  /// Drops the key sidecar and placement log, keeping structure and
  /// bindings. This is the only view attack code accepts.
  LockedNetlist attacker_view() const;

  /// One hardware write event: reconfigures every rGate from the key, one
  /// write each, in binding order. Throws WidthMismatch without consuming
  /// writes; throws DeviceFailed after the event if any device is (or
  /// becomes) failed. Counters advance for every device that received the
  /// pulse, so the ledger stays consistent even across a failing event.
  void apply_key(const BitVector& key);

  /// Per-device write ledger, binding order.
  std::vector<std::uint32_t> write_ledger() const;
  bool any_device_failed() const;
  const std::vector<DeviceState>& device_states() const { return device_; }

  /// Evaluates with the polarizations programmed by earlier apply_key
  /// calls. Throws DeviceFailed if any device has failed.
  BitVector evaluate_configured(const BitVector& inputs) const;
  void evaluate_configured_block(std::span<const std::uint64_t> input_words,
                                 std::span<std::uint64_t> output_words) const;

  /// Pure functional simulation under a hypothetical key; no device writes.
  BitVector evaluate_with_key(const BitVector& key, const BitVector& inputs) const;
  void evaluate_block_with_key(const BitVector& key,
                               std::span<const std::uint64_t> input_words,
                               std::span<std::uint64_t> output_words) const;

  /// Rebuilds the original netlist from the placement log (designer only).
  Netlist reconstruct_original() const;

  /// Primary output indices structurally reachable from each rGate.
  std::vector<std::vector<std::size_t>> rgate_output_cones() const;

  /// Depth of every net with rGates treated as single-level gates.
  DepthInfo logic_depths() const;

private:
  void check_key_width(const BitVector& key) const;
  void eval_block_common(std::span<const std::uint64_t> input_words,
                         std::span<std::uint64_t> output_words,
                         std::span<const Polarization> states) const;

  std::string name_;
  std::vector<std::string> net_names_;
  std::unordered_map<std::string, NetId> net_index_;
  std::vector<NetId> primary_inputs_;
  std::vector<NetId> primary_outputs_;
  std::vector<Element> elements_;
  std::vector<RGate> rgates_;
  std::vector<std::uint32_t> topo_order_;
  std::uint32_t endurance_budget_;
  bool splittable_ = false;
  std::optional<BitVector> correct_key_;
  std::vector<PlacementRecord> placements_;
  std::vector<DeviceState> device_;
};

/// Replaces key_length eligible gates with rGates according to the policy.
/// Deterministic in (netlist, policy). Throws LockError when the netlist
/// cannot satisfy the policy.
LockedNetlist lock_netlist(const Netlist& netlist, const LockPolicy& policy);

/// Text form: a .bench-compatible body where each rGate appears as
///   RGATE <net> TYPE<1|2> F(<nets>) G(<nets>) BIND(<key index>)
/// plus #MODE/#ENDURANCE headers. With include_sidecar, #KEY and #PLACE
/// comment lines carry the designer data.
std::string serialize_locked(const LockedNetlist& locked, bool include_sidecar = true);

/// Parses serialize_locked output. Designer data is restored when sidecar
/// lines are present.
LockedNetlist parse_locked(std::string_view text, std::string_view name = "");

/// Parses and immediately strips designer data; the result never carries
/// the key even if the file did.
LockedNetlist parse_locked_attacker(std::string_view text, std::string_view name = "");

}  // namespace allmask
