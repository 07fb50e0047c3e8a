#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "allmask/bitvec.hpp"

namespace allmask {

/// Dense handle for a net inside one netlist.
struct NetId {
  std::uint32_t index = 0;
  friend bool operator==(const NetId&, const NetId&) = default;
  friend auto operator<=>(const NetId&, const NetId&) = default;
};

enum class GateKind : std::uint8_t { And, Or, Nand, Nor, Not, Xor, Xnor, Buf };

std::string_view gate_kind_name(GateKind kind);

struct Gate {
  NetId output;
  GateKind kind = GateKind::And;
  std::vector<NetId> inputs;

  friend bool operator==(const Gate&, const Gate&) = default;
};

enum class ParseErrorKind {
  SyntaxError,
  UnknownGateKind,
  UndrivenNet,
  MultipleDrivers,
  CombinationalLoop,
  DuplicateOutput,
  SequentialElement,
};

std::string_view parse_error_kind_name(ParseErrorKind kind);

class ParseError : public std::runtime_error {
public:
  ParseError(ParseErrorKind kind, int line, const std::string& detail);
  ParseErrorKind kind() const { return kind_; }
  int line() const { return line_; }

private:
  ParseErrorKind kind_;
  int line_;
};

class WidthMismatch : public std::invalid_argument {
public:
  explicit WidthMismatch(const std::string& what) : std::invalid_argument(what) {}
};

/// Combinational gate-level netlist.
///
/// Nets are interned into a dense table; primary inputs, primary outputs and
/// gates keep their declaration order, which is also the serialization order.
/// Construction validates single drivers, full coverage (every non-input net
/// driven) and acyclicity, and caches a topological gate order for
/// evaluation.
class Netlist {
public:
  Netlist() = default;
  Netlist(std::string name,
          std::vector<std::string> net_names,
          std::vector<NetId> primary_inputs,
          std::vector<NetId> primary_outputs,
          std::vector<Gate> gates);

  const std::string& name() const { return name_; }
  std::size_t net_count() const { return net_names_.size(); }
  std::size_t input_count() const { return primary_inputs_.size(); }
  std::size_t output_count() const { return primary_outputs_.size(); }
  std::size_t gate_count() const { return gates_.size(); }

  const std::vector<NetId>& primary_inputs() const { return primary_inputs_; }
  const std::vector<NetId>& primary_outputs() const { return primary_outputs_; }
  const std::vector<Gate>& gates() const { return gates_; }
  const std::vector<std::uint32_t>& topo_order() const { return topo_order_; }

  const std::string& net_name(NetId id) const { return net_names_[id.index]; }
  std::optional<NetId> find_net(std::string_view name) const;

  /// Index of the gate driving `id`, or -1 for a primary input.
  std::int32_t driver_of(NetId id) const { return drivers_[id.index]; }
  bool is_primary_input(NetId id) const { return drivers_[id.index] < 0; }

  /// Single-vector evaluation; input order follows primary_inputs().
  BitVector evaluate(const BitVector& inputs) const;

  /// 64 vectors at once: one word per primary input, bit lane b of every
  /// word belongs to vector b. Outputs are written in primary output order.
  void evaluate_block(std::span<const std::uint64_t> input_words,
                      std::span<std::uint64_t> output_words) const;

  bool structurally_equal(const Netlist& other) const;

private:
  std::string name_;
  std::vector<std::string> net_names_;
  std::unordered_map<std::string, NetId> net_index_;
  std::vector<NetId> primary_inputs_;
  std::vector<NetId> primary_outputs_;
  std::vector<Gate> gates_;
  std::vector<std::int32_t> drivers_;
  std::vector<std::uint32_t> topo_order_;
};

/// Parses the ISCAS-style .bench dialect described in docs/formats.md.
/// Only combinational primitives are accepted; DFF and friends raise
/// ParseError with kind SequentialElement.
Netlist parse_bench(std::string_view text, std::string_view name = "");

/// Inverse of parse_bench up to whitespace normalization: INPUT lines,
/// OUTPUT lines, then one gate per line, all in declaration order.
std::string serialize_bench(const Netlist& netlist);

struct DepthInfo {
  /// Levels from the primary inputs: inputs sit at 0, a gate output is one
  /// more than its deepest input.
  std::vector<int> net_depth;
  /// Longest level count from a net forward to any primary output;
  /// -1 for nets that reach no output.
  std::vector<int> downstream;
  /// Maximum net_depth over the primary outputs.
  int critical_path = 0;
};

DepthInfo logic_depths(const Netlist& netlist);

/// Single-gate evaluation helper shared by every evaluator in the library.
std::uint64_t fold_gate_words(GateKind kind, std::span<const std::uint64_t> inputs);

}  // namespace allmask
