#include <algorithm>
#include <queue>
#include <set>
#include <unordered_map>
#include <vector>

#include "allmask/keycore.hpp"

namespace allmask {
namespace {

struct RegGoal {
  std::uint16_t mask = 0;
  std::uint16_t value = 0;
};

/// Per-register (mask, value) view of the target, flags separated out.
struct GoalView {
  std::array<RegGoal, kRegisterCount> regs{};
  bool zero_selected = false;
  bool zero_target = false;
  bool carry_selected = false;
  bool carry_target = false;
};

GoalView build_goal(const BitVector& target, const NodeSelection& selection) {
  GoalView goal;
  for (std::size_t i = 0; i < selection.size(); ++i) {
    const NodeCoord& node = selection.nodes()[i];
    switch (node.kind) {
      case NodeCoord::Kind::RegBit:
        goal.regs[node.reg].mask |= static_cast<std::uint16_t>(1u << node.bit);
        if (target[i]) {
          goal.regs[node.reg].value |= static_cast<std::uint16_t>(1u << node.bit);
        }
        break;
      case NodeCoord::Kind::ZeroFlag:
        goal.zero_selected = true;
        goal.zero_target = target[i];
        break;
      case NodeCoord::Kind::CarryFlag:
        goal.carry_selected = true;
        goal.carry_target = target[i];
        break;
    }
  }
  return goal;
}

std::size_t distance_to_goal(const CpuState& state, const GoalView& goal) {
  std::size_t distance = 0;
  for (std::size_t r = 0; r < kRegisterCount; ++r) {
    const std::uint16_t diff = (state.regs[r] ^ goal.regs[r].value) & goal.regs[r].mask;
    distance += static_cast<std::size_t>(__builtin_popcount(diff));
  }
  if (goal.zero_selected && state.zero_flag != goal.zero_target) ++distance;
  if (goal.carry_selected && state.carry_flag != goal.carry_target) ++distance;
  return distance;
}

std::uint64_t state_signature(const CpuState& state) {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (const std::uint16_t reg : state.regs) {
    h ^= reg;
    h *= 0x100000001b3ULL;
  }
  h ^= (state.zero_flag ? 2u : 0u) | (state.carry_flag ? 1u : 0u);
  h *= 0x100000001b3ULL;
  return h;
}

/// Two registers with the fewest selected bits, used as scratch space.
std::pair<std::uint8_t, std::uint8_t> pick_scratches(const GoalView& goal) {
  std::array<std::pair<int, std::uint8_t>, kRegisterCount> weights;
  for (std::uint8_t r = 0; r < kRegisterCount; ++r) {
    weights[r] = {__builtin_popcount(goal.regs[r].mask), r};
  }
  std::stable_sort(weights.begin(), weights.end());
  return {weights[0].second, weights[1].second};
}

class MoveSet {
public:
  MoveSet(const GoalView& goal) : goal_(goal) {
    std::tie(scratch_a_, scratch_b_) = pick_scratches(goal);
    for (std::uint8_t r = 0; r < kRegisterCount; ++r) {
      if (goal.regs[r].mask != 0) targeted_.push_back(r);
    }
  }

  std::vector<Instruction> candidates(const CpuState& state, Rng& rng) const {
    std::vector<Instruction> moves;
    auto push = [&](Instruction instr) {
      if (std::find(moves.begin(), moves.end(), instr) == moves.end()) {
        moves.push_back(instr);
      }
    };
    auto ldi = [](std::uint8_t dst, std::uint8_t imm) {
      Instruction i;
      i.op = Opcode::Ldi;
      i.dst = dst;
      i.imm = imm;
      return i;
    };
    auto alu = [](Opcode op, std::uint8_t dst, std::uint8_t a, std::uint8_t b) {
      Instruction i;
      i.op = op;
      i.dst = dst;
      i.src1 = a;
      i.src2 = b;
      return i;
    };

    for (const std::uint8_t r : targeted_) {
      const RegGoal& g = goal_.regs[r];
      const auto low = static_cast<std::uint8_t>(g.value & g.mask & 0xFF);
      const auto high = static_cast<std::uint8_t>((g.value & g.mask) >> 8);
      push(ldi(r, low));
      if (high != 0) push(ldi(r, high));
      for (const std::uint8_t s : {scratch_a_, scratch_b_}) {
        if (s == r) continue;
        if ((state.regs[s] & 15u) != 0) push(alu(Opcode::Shl, r, r, s));
        if (state.regs[s] != 0) push(alu(Opcode::Or, r, r, s));
      }
    }
    for (const std::uint8_t s : {scratch_a_, scratch_b_}) {
      push(ldi(s, 8));
      for (const std::uint8_t r : targeted_) {
        const RegGoal& g = goal_.regs[r];
        push(ldi(s, static_cast<std::uint8_t>(g.value & g.mask & 0xFF)));
      }
    }
    if (goal_.zero_selected || goal_.carry_selected) {
      const std::uint8_t s = scratch_a_;
      const std::uint8_t t = scratch_b_;
      push(alu(Opcode::Xor, s, s, s));
      push(ldi(s, 1));
      push(ldi(s, 0x80));
      push(ldi(t, 0x81));
      push(alu(Opcode::Or, s, s, s));
      push(alu(Opcode::Add, s, s, s));
      push(alu(Opcode::Add, s, s, t));
      push(alu(Opcode::Shl, s, s, t));
    }
    push(alu(Opcode::Mov, scratch_a_, scratch_a_, 0));
    for (int i = 0; i < 6; ++i) {
      Instruction instr = random_instruction(rng);
      if (instr.op == Opcode::Beqz) instr.op = Opcode::Xor;
      push(instr);
    }
    return moves;
  }

private:
  GoalView goal_;
  std::vector<std::uint8_t> targeted_;
  std::uint8_t scratch_a_ = 0;
  std::uint8_t scratch_b_ = 1;
};

struct SearchNode {
  CpuState state;
  std::int64_t parent = -1;
  Instruction via;
};

struct QueueEntry {
  std::size_t distance;
  std::uint64_t cycles;
  std::uint64_t order;
  std::size_t node;

  friend bool operator>(const QueueEntry& a, const QueueEntry& b) {
    if (a.distance != b.distance) return a.distance > b.distance;
    if (a.cycles != b.cycles) return a.cycles > b.cycles;
    return a.order > b.order;
  }
};

}  // namespace

std::optional<SynthesisResult> synthesize_iis(const BitVector& target,
                                              const NodeSelection& selection,
                                              std::uint64_t budget,
                                              std::uint64_t seed,
                                              std::size_t node_cap) {
  if (target.size() != selection.size()) {
    throw std::invalid_argument("target width does not match the node selection");
  }
  if (budget == 0) return std::nullopt;

  const GoalView goal = build_goal(target, selection);
  const MoveSet moves(goal);
  Rng rng(seed ^ 0x696973303137ULL);

  auto verified = [&](std::vector<Instruction> program,
                      std::uint64_t expanded) -> std::optional<SynthesisResult> {
    const std::vector<TraceEntry> trace = run_iis(program, selection);
    if (trace.empty() || trace.back().key != target) {
      throw std::logic_error("synthesized program failed replay verification");
    }
    return SynthesisResult{std::move(program), expanded};
  };

  const CpuState start{};
  if (distance_to_goal(start, goal) == 0) {
    Instruction nop;
    nop.op = Opcode::Mov;
    return verified({nop}, 0);
  }

  std::vector<SearchNode> nodes;
  nodes.push_back(SearchNode{start, -1, Instruction{}});
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>> frontier;
  std::uint64_t order = 0;
  frontier.push(QueueEntry{distance_to_goal(start, goal), 0, order++, 0});
  std::unordered_map<std::uint64_t, std::uint64_t> best_cycles;
  best_cycles.emplace(state_signature(start), 0);

  std::uint64_t expanded = 0;
  while (!frontier.empty() && expanded < node_cap) {
    const QueueEntry entry = frontier.top();
    frontier.pop();
    ++expanded;
    const CpuState state = nodes[entry.node].state;
    if (state.cycle >= budget) continue;

    for (const Instruction& instr : moves.candidates(state, rng)) {
      CpuState next = step(state, instr);
      const std::uint64_t signature = state_signature(next);
      const auto it = best_cycles.find(signature);
      if (it != best_cycles.end() && it->second <= next.cycle) continue;
      best_cycles[signature] = next.cycle;
      nodes.push_back(SearchNode{next, static_cast<std::int64_t>(entry.node), instr});
      const std::size_t distance = distance_to_goal(next, goal);
      if (distance == 0) {
        std::vector<Instruction> program;
        for (std::int64_t n = static_cast<std::int64_t>(nodes.size()) - 1; n >= 0;
             n = nodes[static_cast<std::size_t>(n)].parent) {
          if (nodes[static_cast<std::size_t>(n)].parent < 0) break;
          program.push_back(nodes[static_cast<std::size_t>(n)].via);
        }
        std::reverse(program.begin(), program.end());
        return verified(std::move(program), expanded);
      }
      if (next.cycle < budget) {
        frontier.push(QueueEntry{distance, next.cycle, order++, nodes.size() - 1});
      }
    }
  }
  return std::nullopt;
}

}  // namespace allmask
