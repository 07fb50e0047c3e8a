#include "allmask/netlist.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <deque>
#include <sstream>

namespace allmask {
namespace {

constexpr std::array<std::string_view, 8> kKindNames = {
    "AND", "OR", "NAND", "NOR", "NOT", "XOR", "XNOR", "BUFF"};

constexpr std::array<std::string_view, 7> kSequentialKinds = {
    "DFF", "SDFF", "DFFSR", "LATCH", "DLAT", "FF", "REG"};

std::string upper(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool is_name_char(char c) {
  return !std::isspace(static_cast<unsigned char>(c)) && c != '(' && c != ')' &&
         c != ',' && c != '=' && c != '#';
}

struct RawGate {
  std::string output;
  std::string kind;
  std::vector<std::string> inputs;
  int line = 0;
};

}  // namespace

std::string_view gate_kind_name(GateKind kind) {
  return kKindNames[static_cast<std::size_t>(kind)];
}

std::string_view parse_error_kind_name(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::SyntaxError: return "SyntaxError";
    case ParseErrorKind::UnknownGateKind: return "UnknownGateKind";
    case ParseErrorKind::UndrivenNet: return "UndrivenNet";
    case ParseErrorKind::MultipleDrivers: return "MultipleDrivers";
    case ParseErrorKind::CombinationalLoop: return "CombinationalLoop";
    case ParseErrorKind::DuplicateOutput: return "DuplicateOutput";
    case ParseErrorKind::SequentialElement: return "SequentialElement";
  }
  return "ParseError";
}

ParseError::ParseError(ParseErrorKind kind, int line, const std::string& detail)
    : std::runtime_error(std::string(parse_error_kind_name(kind)) + " at line " +
                         std::to_string(line) + ": " + detail),
      kind_(kind),
      line_(line) {}

Netlist::Netlist(std::string name,
                 std::vector<std::string> net_names,
                 std::vector<NetId> primary_inputs,
                 std::vector<NetId> primary_outputs,
                 std::vector<Gate> gates)
    : name_(std::move(name)),
      net_names_(std::move(net_names)),
      primary_inputs_(std::move(primary_inputs)),
      primary_outputs_(std::move(primary_outputs)),
      gates_(std::move(gates)) {
  net_index_.reserve(net_names_.size());
  for (std::uint32_t i = 0; i < net_names_.size(); ++i) {
    net_index_.emplace(net_names_[i], NetId{i});
  }

  drivers_.assign(net_names_.size(), -1);
  std::vector<bool> is_input(net_names_.size(), false);
  for (const NetId id : primary_inputs_) is_input[id.index] = true;

  for (std::uint32_t g = 0; g < gates_.size(); ++g) {
    const NetId out = gates_[g].output;
    if (is_input[out.index] || drivers_[out.index] >= 0) {
      throw ParseError(ParseErrorKind::MultipleDrivers, 0,
                       "net " + net_names_[out.index] + " has more than one driver");
    }
    drivers_[out.index] = static_cast<std::int32_t>(g);
  }

  for (std::uint32_t n = 0; n < net_names_.size(); ++n) {
    if (drivers_[n] < 0 && !is_input[n]) {
      throw ParseError(ParseErrorKind::UndrivenNet, 0,
                       "net " + net_names_[n] + " is never driven");
    }
  }

  // Kahn topological sort over gates; leftovers indicate a loop.
  std::vector<std::uint32_t> pending(gates_.size(), 0);
  std::vector<std::vector<std::uint32_t>> consumers(gates_.size());
  for (std::uint32_t g = 0; g < gates_.size(); ++g) {
    for (const NetId in : gates_[g].inputs) {
      const std::int32_t src = drivers_[in.index];
      if (src >= 0) {
        ++pending[g];
        consumers[static_cast<std::uint32_t>(src)].push_back(g);
      }
    }
  }
  std::deque<std::uint32_t> ready;
  for (std::uint32_t g = 0; g < gates_.size(); ++g) {
    if (pending[g] == 0) ready.push_back(g);
  }
  topo_order_.reserve(gates_.size());
  while (!ready.empty()) {
    const std::uint32_t g = ready.front();
    ready.pop_front();
    topo_order_.push_back(g);
    for (const std::uint32_t next : consumers[g]) {
      if (--pending[next] == 0) ready.push_back(next);
    }
  }
  if (topo_order_.size() != gates_.size()) {
    std::string cycle_net;
    for (std::uint32_t g = 0; g < gates_.size(); ++g) {
      if (pending[g] != 0) {
        cycle_net = net_names_[gates_[g].output.index];
        break;
      }
    }
    throw ParseError(ParseErrorKind::CombinationalLoop, 0,
                     "gate driving " + cycle_net + " sits on a cycle");
  }
}

std::optional<NetId> Netlist::find_net(std::string_view name) const {
  const auto it = net_index_.find(std::string(name));
  if (it == net_index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t fold_gate_words(GateKind kind, std::span<const std::uint64_t> inputs) {
  std::uint64_t acc;
  switch (kind) {
    case GateKind::And:
    case GateKind::Nand:
      acc = ~std::uint64_t{0};
      for (const std::uint64_t w : inputs) acc &= w;
      return kind == GateKind::Nand ? ~acc : acc;
    case GateKind::Or:
    case GateKind::Nor:
      acc = 0;
      for (const std::uint64_t w : inputs) acc |= w;
      return kind == GateKind::Nor ? ~acc : acc;
    case GateKind::Xor:
    case GateKind::Xnor:
      acc = 0;
      for (const std::uint64_t w : inputs) acc ^= w;
      return kind == GateKind::Xnor ? ~acc : acc;
    case GateKind::Not:
      return ~inputs[0];
    case GateKind::Buf:
      return inputs[0];
  }
  return 0;
}

BitVector Netlist::evaluate(const BitVector& inputs) const {
  if (inputs.size() != primary_inputs_.size()) {
    throw WidthMismatch("evaluate expects " + std::to_string(primary_inputs_.size()) +
                        " input bits, got " + std::to_string(inputs.size()));
  }
  std::vector<std::uint64_t> in_words(primary_inputs_.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    in_words[i] = inputs[i] ? ~std::uint64_t{0} : 0;
  }
  std::vector<std::uint64_t> out_words(primary_outputs_.size());
  evaluate_block(in_words, out_words);
  BitVector out(primary_outputs_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out.set(i, out_words[i] & 1);
  return out;
}

void Netlist::evaluate_block(std::span<const std::uint64_t> input_words,
                             std::span<std::uint64_t> output_words) const {
  if (input_words.size() != primary_inputs_.size() ||
      output_words.size() != primary_outputs_.size()) {
    throw WidthMismatch("evaluate_block port width mismatch");
  }
  std::vector<std::uint64_t> value(net_names_.size(), 0);
  for (std::size_t i = 0; i < primary_inputs_.size(); ++i) {
    value[primary_inputs_[i].index] = input_words[i];
  }
  std::vector<std::uint64_t> operands;
  for (const std::uint32_t g : topo_order_) {
    const Gate& gate = gates_[g];
    operands.clear();
    for (const NetId in : gate.inputs) operands.push_back(value[in.index]);
    value[gate.output.index] = fold_gate_words(gate.kind, operands);
  }
  for (std::size_t i = 0; i < primary_outputs_.size(); ++i) {
    output_words[i] = value[primary_outputs_[i].index];
  }
}

bool Netlist::structurally_equal(const Netlist& other) const {
  if (net_names_ != other.net_names_) return false;
  if (primary_inputs_ != other.primary_inputs_) return false;
  if (primary_outputs_ != other.primary_outputs_) return false;
  return gates_ == other.gates_;
}

namespace {

class BenchBuilder {
public:
  NetId intern(const std::string& name) {
    const auto it = index_.find(name);
    if (it != index_.end()) return it->second;
    const NetId id{static_cast<std::uint32_t>(names_.size())};
    names_.push_back(name);
    index_.emplace(name, id);
    return id;
  }

  std::vector<std::string> names_;
  std::unordered_map<std::string, NetId> index_;
};

}  // namespace

Netlist parse_bench(std::string_view text, std::string_view name) {
  BenchBuilder builder;
  std::vector<NetId> inputs;
  std::vector<NetId> outputs;
  std::vector<bool> seen_input;
  std::vector<RawGate> raw_gates;
  std::vector<bool> seen_output;
  std::vector<int> output_line;

  auto mark_input = [&](NetId id, int line) {
    if (id.index >= seen_input.size()) seen_input.resize(id.index + 1, false);
    if (seen_input[id.index]) {
      throw ParseError(ParseErrorKind::MultipleDrivers, line,
                       "net " + builder.names_[id.index] + " declared INPUT twice");
    }
    seen_input[id.index] = true;
    inputs.push_back(id);
  };
  auto mark_output = [&](NetId id, int line) {
    if (id.index >= seen_output.size()) seen_output.resize(id.index + 1, false);
    if (seen_output[id.index]) {
      throw ParseError(ParseErrorKind::DuplicateOutput, line,
                       "net " + builder.names_[id.index] + " declared OUTPUT twice");
    }
    seen_output[id.index] = true;
    outputs.push_back(id);
    output_line.push_back(line);
  };

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);

    std::size_t cursor = 0;
    auto skip_ws = [&] {
      while (cursor < line.size() && std::isspace(static_cast<unsigned char>(line[cursor]))) ++cursor;
    };
    auto take_name = [&]() -> std::string {
      skip_ws();
      const std::size_t start = cursor;
      while (cursor < line.size() && is_name_char(line[cursor])) ++cursor;
      if (cursor == start) {
        throw ParseError(ParseErrorKind::SyntaxError, line_no, "expected a net name");
      }
      return std::string(line.substr(start, cursor - start));
    };
    auto expect = [&](char c) {
      skip_ws();
      if (cursor >= line.size() || line[cursor] != c) {
        throw ParseError(ParseErrorKind::SyntaxError, line_no,
                         std::string("expected '") + c + "'");
      }
      ++cursor;
    };
    auto at_end = [&] {
      skip_ws();
      return cursor >= line.size();
    };

    skip_ws();
    if (cursor >= line.size()) continue;

    const std::string first = take_name();
    const std::string first_upper = upper(first);
    skip_ws();

    if ((first_upper == "INPUT" || first_upper == "OUTPUT") && cursor < line.size() &&
        line[cursor] == '(') {
      expect('(');
      const std::string net = take_name();
      expect(')');
      if (!at_end()) {
        throw ParseError(ParseErrorKind::SyntaxError, line_no, "trailing text after declaration");
      }
      const NetId id = builder.intern(net);
      if (first_upper == "INPUT") {
        mark_input(id, line_no);
      } else {
        mark_output(id, line_no);
      }
      continue;
    }

    expect('=');
    const std::string kind_name = take_name();
    expect('(');
    RawGate gate;
    gate.output = first;
    gate.kind = upper(kind_name);
    gate.line = line_no;
    gate.inputs.push_back(take_name());
    skip_ws();
    while (cursor < line.size() && line[cursor] == ',') {
      ++cursor;
      gate.inputs.push_back(take_name());
      skip_ws();
    }
    expect(')');
    if (!at_end()) {
      throw ParseError(ParseErrorKind::SyntaxError, line_no, "trailing text after gate");
    }
    raw_gates.push_back(std::move(gate));
  }

  std::vector<Gate> gates;
  gates.reserve(raw_gates.size());
  for (const RawGate& raw : raw_gates) {
    for (const std::string_view seq : kSequentialKinds) {
      if (raw.kind == seq) {
        throw ParseError(ParseErrorKind::SequentialElement, raw.line,
                         "sequential element " + raw.kind +
                             " is not supported; only combinational netlists are accepted");
      }
    }
    GateKind kind;
    if (raw.kind == "AND") kind = GateKind::And;
    else if (raw.kind == "OR") kind = GateKind::Or;
    else if (raw.kind == "NAND") kind = GateKind::Nand;
    else if (raw.kind == "NOR") kind = GateKind::Nor;
    else if (raw.kind == "NOT" || raw.kind == "INV") kind = GateKind::Not;
    else if (raw.kind == "XOR") kind = GateKind::Xor;
    else if (raw.kind == "XNOR") kind = GateKind::Xnor;
    else if (raw.kind == "BUF" || raw.kind == "BUFF") kind = GateKind::Buf;
    else {
      throw ParseError(ParseErrorKind::UnknownGateKind, raw.line,
                       "unknown gate kind " + raw.kind);
    }
    if ((kind == GateKind::Not || kind == GateKind::Buf) && raw.inputs.size() != 1) {
      throw ParseError(ParseErrorKind::SyntaxError, raw.line,
                       raw.kind + " takes exactly one input");
    }
    Gate gate;
    gate.kind = kind;
    gate.output = builder.intern(raw.output);
    for (const std::string& in : raw.inputs) gate.inputs.push_back(builder.intern(in));
    gates.push_back(std::move(gate));
  }

  // Pre-check driver structure so errors carry source lines.
  std::unordered_map<std::string, int> driver_line;
  for (const RawGate& raw : raw_gates) {
    const auto [it, fresh] = driver_line.emplace(raw.output, raw.line);
    if (!fresh) {
      throw ParseError(ParseErrorKind::MultipleDrivers, raw.line,
                       "net " + raw.output + " is already driven at line " +
                           std::to_string(it->second));
    }
    const NetId id = builder.index_.at(raw.output);
    if (id.index < seen_input.size() && seen_input[id.index]) {
      throw ParseError(ParseErrorKind::MultipleDrivers, raw.line,
                       "net " + raw.output + " is declared INPUT and driven by a gate");
    }
  }
  auto check_driven = [&](const std::string& net, int line) {
    const NetId id = builder.index_.at(net);
    const bool is_input = id.index < seen_input.size() && seen_input[id.index];
    if (!is_input && !driver_line.contains(net)) {
      throw ParseError(ParseErrorKind::UndrivenNet, line, "net " + net + " is never driven");
    }
  };
  for (const RawGate& raw : raw_gates) {
    for (const std::string& in : raw.inputs) check_driven(in, raw.line);
  }
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    check_driven(builder.names_[outputs[i].index], output_line[i]);
  }

  try {
    return Netlist(std::string(name), builder.names_, inputs, outputs, gates);
  } catch (const ParseError& err) {
    if (err.line() != 0 || err.kind() != ParseErrorKind::CombinationalLoop) throw;
    const std::string what = err.what();
    int line = 0;
    for (const RawGate& raw : raw_gates) {
      if (what.find("driving " + raw.output + " ") != std::string::npos) {
        line = raw.line;
        break;
      }
    }
    throw ParseError(ParseErrorKind::CombinationalLoop, line, what);
  }
}

std::string serialize_bench(const Netlist& netlist) {
  std::ostringstream out;
  for (const NetId id : netlist.primary_inputs()) {
    out << "INPUT(" << netlist.net_name(id) << ")\n";
  }
  for (const NetId id : netlist.primary_outputs()) {
    out << "OUTPUT(" << netlist.net_name(id) << ")\n";
  }
  for (const Gate& gate : netlist.gates()) {
    out << netlist.net_name(gate.output) << " = " << gate_kind_name(gate.kind) << "(";
    for (std::size_t i = 0; i < gate.inputs.size(); ++i) {
      if (i) out << ", ";
      out << netlist.net_name(gate.inputs[i]);
    }
    out << ")\n";
  }
  return out.str();
}

DepthInfo logic_depths(const Netlist& netlist) {
  DepthInfo info;
  info.net_depth.assign(netlist.net_count(), 0);
  info.downstream.assign(netlist.net_count(), -1);

  const auto& gates = netlist.gates();
  for (const std::uint32_t g : netlist.topo_order()) {
    int depth = 0;
    for (const NetId in : gates[g].inputs) {
      depth = std::max(depth, info.net_depth[in.index]);
    }
    info.net_depth[gates[g].output.index] = depth + 1;
  }

  info.critical_path = 0;
  for (const NetId out : netlist.primary_outputs()) {
    info.critical_path = std::max(info.critical_path, info.net_depth[out.index]);
    info.downstream[out.index] = 0;
  }
  const auto& topo = netlist.topo_order();
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const Gate& gate = gates[*it];
    const int through = info.downstream[gate.output.index];
    if (through < 0) continue;
    for (const NetId in : gate.inputs) {
      info.downstream[in.index] = std::max(info.downstream[in.index], through + 1);
    }
  }
  return info;
}

}  // namespace allmask
