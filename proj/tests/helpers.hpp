#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "allmask/bitvec.hpp"
#include "allmask/netlist.hpp"

namespace testutil {

inline std::string data_path(const std::string& name) {
  return std::string(ALLMASK_DATA_DIR) + "/" + name;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline allmask::Netlist load_bench(const std::string& name) {
  return allmask::parse_bench(read_file(data_path(name)), name);
}

/// Independent oracle: plain recursive evaluation with memoization, one
/// net at a time, no word packing and no shared topological order.
class RecursiveEvaluator {
 public:
  explicit RecursiveEvaluator(const allmask::Netlist& netlist) : netlist_(netlist) {}

  allmask::BitVector evaluate(const allmask::BitVector& inputs) {
    memo_.assign(netlist_.net_count(), -1);
    for (std::size_t i = 0; i < netlist_.input_count(); ++i) {
      memo_[netlist_.primary_inputs()[i].index] = inputs.at(i) ? 1 : 0;
    }
    allmask::BitVector out(netlist_.output_count());
    for (std::size_t i = 0; i < netlist_.output_count(); ++i) {
      out.set(i, value_of(netlist_.primary_outputs()[i]));
    }
    return out;
  }

 private:
  bool value_of(allmask::NetId net) {
    int& slot = memo_[net.index];
    if (slot >= 0) return slot != 0;
    const allmask::Gate& gate = netlist_.gates()[netlist_.driver_of(net)];
    bool conj = true;
    bool disj = false;
    bool parity = false;
    for (const allmask::NetId in : gate.inputs) {
      const bool v = value_of(in);
      conj = conj && v;
      disj = disj || v;
      parity = parity != v;
    }
    bool value = false;
    switch (gate.kind) {
      case allmask::GateKind::And: value = conj; break;
      case allmask::GateKind::Nand: value = !conj; break;
      case allmask::GateKind::Or: value = disj; break;
      case allmask::GateKind::Nor: value = !disj; break;
      case allmask::GateKind::Xor: value = parity; break;
      case allmask::GateKind::Xnor: value = !parity; break;
      case allmask::GateKind::Not: value = !disj; break;
      case allmask::GateKind::Buf: value = disj; break;
    }
    slot = value ? 1 : 0;
    return value;
  }

  const allmask::Netlist& netlist_;
  std::vector<int> memo_;
};

/// Independent oracle: explicit enumeration of every input-to-net path.
/// Exponential, only for small circuits.
inline int longest_path_to(const allmask::Netlist& netlist, allmask::NetId net) {
  if (netlist.is_primary_input(net)) return 0;
  const allmask::Gate& gate = netlist.gates()[netlist.driver_of(net)];
  int best = 0;
  for (const allmask::NetId in : gate.inputs) {
    best = std::max(best, longest_path_to(netlist, in));
  }
  return best + 1;
}

inline int brute_force_critical_path(const allmask::Netlist& netlist) {
  int best = 0;
  for (const allmask::NetId out : netlist.primary_outputs()) {
    best = std::max(best, longest_path_to(netlist, out));
  }
  return best;
}

}  // namespace testutil
