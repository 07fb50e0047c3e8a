#include "allmask/benchgen.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "allmask/rng.hpp"

namespace allmask {

const std::vector<BenchProfile>& standard_profiles() {
  static const std::vector<BenchProfile> profiles = {
      {"c17", 5, 2, 6},        {"c432", 36, 7, 160},    {"c499", 41, 32, 202},
      {"c880", 60, 26, 383},   {"c1355", 41, 32, 546},  {"c1908", 33, 25, 880},
      {"c2670", 233, 140, 1193}, {"c3540", 50, 22, 1669}, {"c5315", 178, 123, 2307},
  };
  return profiles;
}

std::optional<BenchProfile> find_profile(std::string_view name) {
  for (const BenchProfile& profile : standard_profiles()) {
    if (profile.name == name) return profile;
  }
  return std::nullopt;
}

namespace {

struct GenGate {
  GateKind kind;
  std::vector<std::size_t> inputs;  // net indices
};

GateKind draw_kind(Rng& rng) {
  // Weighted toward inverted-output kinds so plenty of gates can host an
  // rGate without a cleanup inverter.
  const std::uint64_t roll = rng.below(92);
  if (roll < 34) return GateKind::Nand;
  if (roll < 48) return GateKind::Nor;
  if (roll < 60) return GateKind::And;
  if (roll < 68) return GateKind::Or;
  if (roll < 82) return GateKind::Not;
  if (roll < 88) return GateKind::Xor;
  if (roll < 90) return GateKind::Xnor;
  return GateKind::Buf;
}

std::size_t draw_arity(GateKind kind, Rng& rng) {
  if (kind == GateKind::Not || kind == GateKind::Buf) return 1;
  if (kind == GateKind::Xor || kind == GateKind::Xnor) return 2;
  const std::uint64_t roll = rng.below(100);
  if (roll < 75) return 2;
  if (roll < 95) return 3;
  return 4;
}

bool extensible(GateKind kind) {
  return kind == GateKind::And || kind == GateKind::Or || kind == GateKind::Nand ||
         kind == GateKind::Nor;
}

constexpr std::size_t kMaxArity = 6;
constexpr std::size_t kRecencyWindow = 24;

}  // namespace

std::string generate_bench(const BenchProfile& profile, std::uint64_t seed) {
  if (profile.inputs == 0 || profile.outputs == 0 || profile.gates == 0) {
    throw std::invalid_argument("profile needs inputs, outputs and gates");
  }
  Rng rng(seed ^ 0x62656e63686765ULL);
  const std::size_t total_nets = profile.inputs + profile.gates;

  std::vector<GenGate> gates;
  gates.reserve(profile.gates);
  for (std::size_t g = 0; g < profile.gates; ++g) {
    const std::size_t available = profile.inputs + g;
    GenGate gate;
    gate.kind = draw_kind(rng);
    const std::size_t arity = std::min(draw_arity(gate.kind, rng), available);
    std::set<std::size_t> chosen;
    while (chosen.size() < arity) {
      std::size_t pick;
      if (available > kRecencyWindow && rng.below(100) < 60) {
        pick = available - 1 - rng.below(kRecencyWindow);
      } else {
        pick = rng.below(available);
      }
      chosen.insert(pick);
    }
    gate.inputs.assign(chosen.begin(), chosen.end());
    gates.push_back(std::move(gate));
  }

  std::vector<std::size_t> fanout(total_nets, 0);
  for (const GenGate& gate : gates) {
    for (const std::size_t in : gate.inputs) ++fanout[in];
  }

  // Attach dangling gate outputs beyond the output budget to later gates so
  // every gate reaches a primary output.
  std::vector<std::size_t> sinks;
  for (std::size_t g = 0; g < profile.gates; ++g) {
    if (fanout[profile.inputs + g] == 0) sinks.push_back(g);
  }
  std::vector<bool> is_output(total_nets, false);
  std::vector<std::size_t> outputs;

  if (sinks.size() > profile.outputs) {
    std::vector<std::size_t> keep(sinks.end() - static_cast<std::ptrdiff_t>(profile.outputs),
                                  sinks.end());
    sinks.resize(sinks.size() - profile.outputs);
    for (auto it = sinks.rbegin(); it != sinks.rend(); ++it) {
      const std::size_t g = *it;
      const std::size_t net = profile.inputs + g;
      bool attached = false;
      for (std::size_t attempt = 0; attempt < 64 && g + 1 < profile.gates; ++attempt) {
        const std::size_t consumer = g + 1 + rng.below(profile.gates - g - 1);
        GenGate& target = gates[consumer];
        if (!extensible(target.kind) || target.inputs.size() >= kMaxArity) continue;
        if (std::find(target.inputs.begin(), target.inputs.end(), net) != target.inputs.end()) {
          continue;
        }
        target.inputs.push_back(net);
        ++fanout[net];
        attached = true;
        break;
      }
      if (!attached) {
        for (std::size_t consumer = g + 1; consumer < profile.gates && !attached; ++consumer) {
          GenGate& target = gates[consumer];
          if (!extensible(target.kind) || target.inputs.size() >= kMaxArity) continue;
          if (std::find(target.inputs.begin(), target.inputs.end(), net) !=
              target.inputs.end()) {
            continue;
          }
          target.inputs.push_back(net);
          ++fanout[net];
          attached = true;
        }
      }
      if (!attached) keep.push_back(g);
    }
    for (const std::size_t g : keep) {
      const std::size_t net = profile.inputs + g;
      if (!is_output[net]) {
        is_output[net] = true;
        outputs.push_back(net);
      }
    }
  } else {
    for (const std::size_t g : sinks) {
      const std::size_t net = profile.inputs + g;
      is_output[net] = true;
      outputs.push_back(net);
    }
  }

  while (outputs.size() < profile.outputs) {
    const std::size_t net = profile.inputs + rng.below(profile.gates);
    if (is_output[net]) continue;
    is_output[net] = true;
    outputs.push_back(net);
  }
  while (outputs.size() > profile.outputs) {
    const std::size_t net = outputs.back();
    outputs.pop_back();
    is_output[net] = false;
  }
  std::sort(outputs.begin(), outputs.end());

  auto net_name = [](std::size_t index) { return std::to_string(index + 1); };

  std::ostringstream text;
  text << "# " << profile.name << ": synthetic stand-in circuit\n";
  text << "# Interface profile of the classic module (" << profile.inputs << " inputs, "
       << profile.outputs << " outputs, " << profile.gates
       << " gates); the gate network itself is a seeded random DAG, not the\n";
  text << "# original netlist. Regenerate with: allmask gen --profile " << profile.name
       << " --seed " << seed << "\n";
  for (std::size_t i = 0; i < profile.inputs; ++i) {
    text << "INPUT(" << net_name(i) << ")\n";
  }
  for (const std::size_t net : outputs) {
    text << "OUTPUT(" << net_name(net) << ")\n";
  }
  for (std::size_t g = 0; g < profile.gates; ++g) {
    text << net_name(profile.inputs + g) << " = " << gate_kind_name(gates[g].kind) << "(";
    for (std::size_t i = 0; i < gates[g].inputs.size(); ++i) {
      if (i) text << ", ";
      text << net_name(gates[g].inputs[i]);
    }
    text << ")\n";
  }

  const std::string result = text.str();
  parse_bench(result, profile.name);
  return result;
}

}  // namespace allmask
