#include "allmask/keycore.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace allmask {

std::string_view opcode_name(Opcode op) {
  switch (op) {
    case Opcode::Ldi: return "LDI";
    case Opcode::Add: return "ADD";
    case Opcode::Sub: return "SUB";
    case Opcode::And: return "AND";
    case Opcode::Or: return "OR";
    case Opcode::Xor: return "XOR";
    case Opcode::Shl: return "SHL";
    case Opcode::Shr: return "SHR";
    case Opcode::Mov: return "MOV";
    case Opcode::Beqz: return "BEQZ";
  }
  return "?";
}

namespace {

void check_reg(std::uint8_t reg) {
  if (reg >= kRegisterCount) {
    throw std::out_of_range("register index " + std::to_string(reg) + " out of range");
  }
}

}  // namespace

CpuState step(CpuState state, const Instruction& instr) {
  check_reg(instr.dst);
  check_reg(instr.src1);
  check_reg(instr.src2);
  auto set_alu_flags = [&](std::uint16_t result, bool carry) {
    state.zero_flag = result == 0;
    state.carry_flag = carry;
  };
  const std::uint16_t a = state.regs[instr.src1];
  const std::uint16_t b = state.regs[instr.src2];
  switch (instr.op) {
    case Opcode::Ldi:
      state.regs[instr.dst] = instr.imm;
      state.pc += 1;
      break;
    case Opcode::Add: {
      const std::uint32_t wide = std::uint32_t{a} + b;
      const auto result = static_cast<std::uint16_t>(wide);
      state.regs[instr.dst] = result;
      set_alu_flags(result, wide > 0xFFFF);
      state.pc += 1;
      break;
    }
    case Opcode::Sub: {
      const auto result = static_cast<std::uint16_t>(a - b);
      state.regs[instr.dst] = result;
      set_alu_flags(result, a < b);
      state.pc += 1;
      break;
    }
    case Opcode::And: {
      const auto result = static_cast<std::uint16_t>(a & b);
      state.regs[instr.dst] = result;
      set_alu_flags(result, false);
      state.pc += 1;
      break;
    }
    case Opcode::Or: {
      const auto result = static_cast<std::uint16_t>(a | b);
      state.regs[instr.dst] = result;
      set_alu_flags(result, false);
      state.pc += 1;
      break;
    }
    case Opcode::Xor: {
      const auto result = static_cast<std::uint16_t>(a ^ b);
      state.regs[instr.dst] = result;
      set_alu_flags(result, false);
      state.pc += 1;
      break;
    }
    case Opcode::Shl: {
      const unsigned amount = b & 15u;
      const auto result = static_cast<std::uint16_t>(a << amount);
      const bool carry = amount > 0 && ((a >> (kRegisterWidth - amount)) & 1u) != 0;
      state.regs[instr.dst] = result;
      set_alu_flags(result, carry);
      state.pc += 1;
      break;
    }
    case Opcode::Shr: {
      const unsigned amount = b & 15u;
      const auto result = static_cast<std::uint16_t>(a >> amount);
      const bool carry = amount > 0 && ((a >> (amount - 1)) & 1u) != 0;
      state.regs[instr.dst] = result;
      set_alu_flags(result, carry);
      state.pc += 1;
      break;
    }
    case Opcode::Mov:
      state.regs[instr.dst] = a;
      state.pc += 1;
      break;
    case Opcode::Beqz:
      if (a == 0) {
        state.pc = static_cast<std::uint16_t>(
            static_cast<std::int32_t>(state.pc) + static_cast<std::int8_t>(instr.imm));
      } else {
        state.pc += 1;
      }
      break;
  }
  state.cycle += 1;
  return state;
}

NodeSelection::NodeSelection(std::vector<NodeCoord> nodes) : nodes_(std::move(nodes)) {
  std::set<NodeCoord> seen;
  for (const NodeCoord& node : nodes_) {
    if (node.kind == NodeCoord::Kind::RegBit) {
      if (node.reg >= kRegisterCount || node.bit >= kRegisterWidth) {
        throw std::out_of_range("node coordinate r" + std::to_string(node.reg) + "[" +
                                std::to_string(node.bit) + "] out of range");
      }
    }
    if (!seen.insert(node).second) {
      throw std::invalid_argument("node selection repeats a coordinate");
    }
  }
}

NodeSelection NodeSelection::sample(std::uint64_t seed, std::size_t key_length) {
  if (key_length > kRegisterCount * kRegisterWidth) {
    throw std::invalid_argument("selection longer than the register file");
  }
  std::vector<NodeCoord> universe;
  universe.reserve(kRegisterCount * kRegisterWidth);
  for (std::uint8_t r = 0; r < kRegisterCount; ++r) {
    for (std::uint8_t b = 0; b < kRegisterWidth; ++b) {
      universe.push_back(NodeCoord{NodeCoord::Kind::RegBit, r, b});
    }
  }
  Rng rng(seed ^ 0x73656c656374ULL);
  rng.shuffle(universe);
  universe.resize(key_length);
  return NodeSelection(std::move(universe));
}

BitVector extract_key(const CpuState& state, const NodeSelection& selection) {
  BitVector key(selection.size());
  for (std::size_t i = 0; i < selection.size(); ++i) {
    const NodeCoord& node = selection.nodes()[i];
    bool value = false;
    switch (node.kind) {
      case NodeCoord::Kind::RegBit:
        value = ((state.regs[node.reg] >> node.bit) & 1u) != 0;
        break;
      case NodeCoord::Kind::ZeroFlag:
        value = state.zero_flag;
        break;
      case NodeCoord::Kind::CarryFlag:
        value = state.carry_flag;
        break;
    }
    key.set(i, value);
  }
  return key;
}

std::vector<TraceEntry> run_iis(const std::vector<Instruction>& program,
                                const NodeSelection& selection,
                                const CpuState& start,
                                std::uint64_t max_steps) {
  std::vector<TraceEntry> trace;
  CpuState state = start;
  std::uint64_t steps = 0;
  while (state.pc < program.size()) {
    state = step(state, program[state.pc]);
    trace.push_back(TraceEntry{state.cycle, extract_key(state, selection)});
    if (++steps > max_steps) {
      throw std::runtime_error("program exceeded " + std::to_string(max_steps) + " cycles");
    }
  }
  return trace;
}

std::string serialize_iis(const std::vector<Instruction>& program) {
  std::ostringstream out;
  for (const Instruction& instr : program) {
    out << opcode_name(instr.op);
    switch (instr.op) {
      case Opcode::Ldi:
        out << " r" << int{instr.dst} << ", " << int{instr.imm};
        break;
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::And:
      case Opcode::Or:
      case Opcode::Xor:
      case Opcode::Shl:
      case Opcode::Shr:
        out << " r" << int{instr.dst} << ", r" << int{instr.src1} << ", r" << int{instr.src2};
        break;
      case Opcode::Mov:
        out << " r" << int{instr.dst} << ", r" << int{instr.src1};
        break;
      case Opcode::Beqz:
        out << " r" << int{instr.src1} << ", " << int{static_cast<std::int8_t>(instr.imm)};
        break;
    }
    out << "\n";
  }
  return out.str();
}

namespace {

class AsmCursor {
public:
  AsmCursor(std::string_view line, int line_no) : line_(line), line_no_(line_no) {}

  void skip_ws() {
    while (cursor_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[cursor_]))) {
      ++cursor_;
    }
  }
  bool at_end() {
    skip_ws();
    return cursor_ >= line_.size();
  }
  std::string word() {
    skip_ws();
    const std::size_t start = cursor_;
    while (cursor_ < line_.size() && !std::isspace(static_cast<unsigned char>(line_[cursor_])) &&
           line_[cursor_] != ',') {
      ++cursor_;
    }
    if (cursor_ == start) fail("expected a token");
    return std::string(line_.substr(start, cursor_ - start));
  }
  void comma() {
    skip_ws();
    if (cursor_ >= line_.size() || line_[cursor_] != ',') fail("expected ','");
    ++cursor_;
  }
  std::uint8_t reg() {
    const std::string tok = word();
    if (tok.size() < 2 || (tok[0] != 'r' && tok[0] != 'R')) {
      fail("expected a register, got " + tok);
    }
    const long value = to_long(tok.substr(1));
    if (value < 0 || value >= static_cast<long>(kRegisterCount)) {
      fail("register " + tok + " out of range");
    }
    return static_cast<std::uint8_t>(value);
  }
  long imm(long lo, long hi) {
    const std::string tok = word();
    const long value = to_long(tok);
    if (value < lo || value > hi) {
      fail("immediate " + tok + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) +
           "]");
    }
    return value;
  }
  [[noreturn]] void fail(const std::string& why) {
    throw std::invalid_argument("line " + std::to_string(line_no_) + ": " + why);
  }

private:
  long to_long(const std::string& text) {
    try {
      std::size_t used = 0;
      const long value = std::stol(text, &used, 0);
      if (used != text.size()) throw std::invalid_argument(text);
      return value;
    } catch (const std::exception&) {
      fail("expected a number, got " + text);
    }
  }

  std::string_view line_;
  std::size_t cursor_ = 0;
  int line_no_;
};

}  // namespace

std::vector<Instruction> parse_iis(std::string_view text) {
  std::vector<Instruction> program;
  std::vector<std::pair<int, int>> branch_checks;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);

    AsmCursor cur(line, line_no);
    if (cur.at_end()) continue;
    std::string mnemonic = cur.word();
    for (char& c : mnemonic) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));

    Instruction instr;
    if (mnemonic == "LDI") {
      instr.op = Opcode::Ldi;
      instr.dst = cur.reg();
      cur.comma();
      instr.imm = static_cast<std::uint8_t>(cur.imm(0, 255));
    } else if (mnemonic == "ADD" || mnemonic == "SUB" || mnemonic == "AND" ||
               mnemonic == "OR" || mnemonic == "XOR" || mnemonic == "SHL" ||
               mnemonic == "SHR") {
      if (mnemonic == "ADD") instr.op = Opcode::Add;
      else if (mnemonic == "SUB") instr.op = Opcode::Sub;
      else if (mnemonic == "AND") instr.op = Opcode::And;
      else if (mnemonic == "OR") instr.op = Opcode::Or;
      else if (mnemonic == "XOR") instr.op = Opcode::Xor;
      else if (mnemonic == "SHL") instr.op = Opcode::Shl;
      else instr.op = Opcode::Shr;
      instr.dst = cur.reg();
      cur.comma();
      instr.src1 = cur.reg();
      cur.comma();
      instr.src2 = cur.reg();
    } else if (mnemonic == "MOV") {
      instr.op = Opcode::Mov;
      instr.dst = cur.reg();
      cur.comma();
      instr.src1 = cur.reg();
    } else if (mnemonic == "BEQZ") {
      instr.op = Opcode::Beqz;
      instr.src1 = cur.reg();
      cur.comma();
      const long offset = cur.imm(-128, 127);
      instr.imm = static_cast<std::uint8_t>(static_cast<std::int8_t>(offset));
      branch_checks.emplace_back(static_cast<int>(program.size()), static_cast<int>(offset));
    } else {
      cur.fail("unknown mnemonic " + mnemonic);
    }
    if (!cur.at_end()) cur.fail("trailing text");
    program.push_back(instr);
  }
  for (const auto& [index, offset] : branch_checks) {
    const int target = index + offset;
    if (target < 0 || target > static_cast<int>(program.size())) {
      throw std::invalid_argument("BEQZ at instruction " + std::to_string(index) +
                                  " jumps outside the program");
    }
  }
  return program;
}

std::string serialize_selection(const NodeSelection& selection) {
  nlohmann::json list = nlohmann::json::array();
  for (const NodeCoord& node : selection.nodes()) {
    switch (node.kind) {
      case NodeCoord::Kind::RegBit:
        list.push_back({{"reg", node.reg}, {"bit", node.bit}});
        break;
      case NodeCoord::Kind::ZeroFlag:
        list.push_back({{"flag", "zero"}});
        break;
      case NodeCoord::Kind::CarryFlag:
        list.push_back({{"flag", "carry"}});
        break;
    }
  }
  return list.dump(2) + "\n";
}

NodeSelection parse_selection(std::string_view text) {
  nlohmann::json list;
  try {
    list = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& err) {
    throw std::invalid_argument(std::string("selection is not valid JSON: ") + err.what());
  }
  if (!list.is_array()) {
    throw std::invalid_argument("selection must be a JSON array");
  }
  std::vector<NodeCoord> nodes;
  for (const auto& item : list) {
    if (!item.is_object()) {
      throw std::invalid_argument("selection entries must be objects");
    }
    NodeCoord node;
    if (item.contains("flag")) {
      const std::string flag = item.at("flag").get<std::string>();
      if (flag == "zero") {
        node.kind = NodeCoord::Kind::ZeroFlag;
      } else if (flag == "carry") {
        node.kind = NodeCoord::Kind::CarryFlag;
      } else {
        throw std::invalid_argument("unknown flag " + flag);
      }
    } else {
      node.kind = NodeCoord::Kind::RegBit;
      const long reg = item.at("reg").get<long>();
      const long bit = item.at("bit").get<long>();
      if (reg < 0 || reg >= static_cast<long>(kRegisterCount) || bit < 0 ||
          bit >= static_cast<long>(kRegisterWidth)) {
        throw std::out_of_range("selection coordinate out of range");
      }
      node.reg = static_cast<std::uint8_t>(reg);
      node.bit = static_cast<std::uint8_t>(bit);
    }
    nodes.push_back(node);
  }
  return NodeSelection(std::move(nodes));
}

Instruction random_instruction(Rng& rng) {
  Instruction instr;
  instr.op = static_cast<Opcode>(rng.below(10));
  instr.dst = static_cast<std::uint8_t>(rng.below(kRegisterCount));
  instr.src1 = static_cast<std::uint8_t>(rng.below(kRegisterCount));
  instr.src2 = static_cast<std::uint8_t>(rng.below(kRegisterCount));
  instr.imm = static_cast<std::uint8_t>(rng.below(256));
  return instr;
}

}  // namespace allmask
