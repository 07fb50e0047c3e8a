#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "allmask/bitvec.hpp"
#include "allmask/rng.hpp"

namespace allmask {

/// Ten-opcode single-cycle core used as the key generator. 16 general
/// registers of 16 bits, a program counter and two ALU flags; every
/// instruction retires in one cycle.
enum class Opcode : std::uint8_t {
  Ldi,   // dst <- zero-extended imm8
  Add,   // dst <- src1 + src2, sets zero/carry
  Sub,   // dst <- src1 - src2, sets zero/carry (borrow)
  And,   // dst <- src1 & src2, sets zero, clears carry
  Or,    // dst <- src1 | src2, sets zero, clears carry
  Xor,   // dst <- src1 ^ src2, sets zero, clears carry
  Shl,   // dst <- src1 << (src2 & 15), sets zero/carry
  Shr,   // dst <- src1 >> (src2 & 15), sets zero/carry
  Mov,   // dst <- src1, flags untouched
  Beqz,  // if src1 == 0: pc += signed imm8, else fall through
};

std::string_view opcode_name(Opcode op);

struct Instruction {
  Opcode op = Opcode::Mov;
  std::uint8_t dst = 0;
  std::uint8_t src1 = 0;
  std::uint8_t src2 = 0;
  /// Immediate for Ldi; signed branch offset for Beqz.
  std::uint8_t imm = 0;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

constexpr std::size_t kRegisterCount = 16;
constexpr std::size_t kRegisterWidth = 16;

struct CpuState {
  std::array<std::uint16_t, kRegisterCount> regs{};
  std::uint16_t pc = 0;
  bool zero_flag = false;
  bool carry_flag = false;
  std::uint64_t cycle = 0;

  friend bool operator==(const CpuState&, const CpuState&) = default;
};

/// Executes one instruction; exactly one cycle elapses. Only the
/// destination register, the flags and the pc may change.
CpuState step(CpuState state, const Instruction& instr);

/// One observable state bit: a register bit or one of the flags.
struct NodeCoord {
  enum class Kind : std::uint8_t { RegBit, ZeroFlag, CarryFlag };
  Kind kind = Kind::RegBit;
  std::uint8_t reg = 0;
  std::uint8_t bit = 0;

  friend bool operator==(const NodeCoord&, const NodeCoord&) = default;
  friend auto operator<=>(const NodeCoord&, const NodeCoord&) = default;
};

/// Ordered list of distinct node coordinates; the key is read in this
/// order, first coordinate first.
class NodeSelection {
public:
  NodeSelection() = default;
  explicit NodeSelection(std::vector<NodeCoord> nodes);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<NodeCoord>& nodes() const { return nodes_; }

  /// Seeded uniform draw of `key_length` distinct register bits. Selections
  /// from the same seed nest: the k-long selection is a prefix of the
  /// (k+1)-long one.
  static NodeSelection sample(std::uint64_t seed, std::size_t key_length);

private:
  std::vector<NodeCoord> nodes_;
};

BitVector extract_key(const CpuState& state, const NodeSelection& selection);

struct TraceEntry {
  std::uint64_t cycle = 0;
  BitVector key;
};

constexpr std::uint64_t kDefaultRunLimit = 1u << 20;

/// Runs a program from `start` (reset state by default) until the pc falls
/// outside the program, collecting the key after every instruction. Throws
/// std::runtime_error if the program exceeds `max_steps` cycles.
std::vector<TraceEntry> run_iis(const std::vector<Instruction>& program,
                                const NodeSelection& selection,
                                const CpuState& start = CpuState{},
                                std::uint64_t max_steps = kDefaultRunLimit);

/// Assembler-style text, one instruction per line; see docs/formats.md.
std::string serialize_iis(const std::vector<Instruction>& program);
std::vector<Instruction> parse_iis(std::string_view text);

/// JSON list of {"reg": r, "bit": b} and {"flag": "zero"|"carry"} records.
std::string serialize_selection(const NodeSelection& selection);
NodeSelection parse_selection(std::string_view text);

/// Uniform random instruction, the distribution the streamed attacks use.
Instruction random_instruction(Rng& rng);

struct SynthesisResult {
  std::vector<Instruction> program;
  std::uint64_t expanded_states = 0;
};

constexpr std::size_t kDefaultSynthesisNodeCap = 200000;

/// Seeded best-first search for a program whose final state carries
/// `target` on `selection`, within `budget` cycles. Candidate moves mix
/// goal-directed constructions with random instructions; states are ranked
/// by Hamming distance to the target. Every hit is verified by replay
/// before it is returned. Returns nullopt when the cap is exhausted.
std::optional<SynthesisResult> synthesize_iis(const BitVector& target,
                                              const NodeSelection& selection,
                                              std::uint64_t budget,
                                              std::uint64_t seed,
                                              std::size_t node_cap = kDefaultSynthesisNodeCap);

}  // namespace allmask
