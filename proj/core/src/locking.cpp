#include "allmask/locking.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <set>
#include <sstream>

#include "allmask/rng.hpp"

namespace allmask {

std::string_view replacement_type_name(ReplacementType type) {
  switch (type) {
    case ReplacementType::CutAnd: return "A";
    case ReplacementType::ExpandOr: return "B";
    case ReplacementType::ExpandAnd: return "C";
    case ReplacementType::CutOr: return "D";
  }
  return "?";
}

RGateKind rgate_kind_for(ReplacementType type) {
  switch (type) {
    case ReplacementType::CutAnd:
    case ReplacementType::ExpandAnd:
      return RGateKind::Type1;
    case ReplacementType::ExpandOr:
    case ReplacementType::CutOr:
      return RGateKind::Type2;
  }
  return RGateKind::Type1;
}

bool correct_key_bit_for(ReplacementType type) {
  // Cut types restore the original cone in the composite (Hvt) state;
  // expand types restore it in the F-only (Lvt) state.
  switch (type) {
    case ReplacementType::CutAnd:
    case ReplacementType::CutOr:
      return false;
    case ReplacementType::ExpandOr:
    case ReplacementType::ExpandAnd:
      return true;
  }
  return false;
}

LockedNetlist::LockedNetlist(std::string name,
                             std::vector<std::string> net_names,
                             std::vector<NetId> primary_inputs,
                             std::vector<NetId> primary_outputs,
                             std::vector<Element> elements,
                             std::vector<RGate> rgates,
                             std::uint32_t endurance_budget,
                             bool splittable,
                             std::optional<BitVector> correct_key,
                             std::vector<PlacementRecord> placements)
    : name_(std::move(name)),
      net_names_(std::move(net_names)),
      primary_inputs_(std::move(primary_inputs)),
      primary_outputs_(std::move(primary_outputs)),
      elements_(std::move(elements)),
      rgates_(std::move(rgates)),
      endurance_budget_(endurance_budget),
      splittable_(splittable),
      correct_key_(std::move(correct_key)),
      placements_(std::move(placements)) {
  if (correct_key_ && correct_key_->size() != rgates_.size()) {
    throw std::invalid_argument("correct key width does not match rGate count");
  }
  net_index_.reserve(net_names_.size());
  for (std::uint32_t i = 0; i < net_names_.size(); ++i) {
    net_index_.emplace(net_names_[i], NetId{i});
  }

  std::vector<std::int32_t> drivers(net_names_.size(), -1);
  std::vector<bool> is_input(net_names_.size(), false);
  for (const NetId id : primary_inputs_) is_input[id.index] = true;
  for (std::uint32_t e = 0; e < elements_.size(); ++e) {
    const NetId out = elements_[e].output;
    if (is_input[out.index] || drivers[out.index] >= 0) {
      throw ParseError(ParseErrorKind::MultipleDrivers, 0,
                       "net " + net_names_[out.index] + " has more than one driver");
    }
    drivers[out.index] = static_cast<std::int32_t>(e);
  }
  for (std::uint32_t n = 0; n < net_names_.size(); ++n) {
    if (drivers[n] < 0 && !is_input[n]) {
      throw ParseError(ParseErrorKind::UndrivenNet, 0,
                       "net " + net_names_[n] + " is never driven");
    }
  }

  auto element_inputs = [&](const Element& e) -> std::vector<NetId> {
    if (e.rgate < 0) return e.inputs;
    const RGate& rg = rgates_[static_cast<std::size_t>(e.rgate)];
    std::vector<NetId> all(rg.f_inputs());
    all.insert(all.end(), rg.g_inputs().begin(), rg.g_inputs().end());
    return all;
  };

  std::vector<std::uint32_t> pending(elements_.size(), 0);
  std::vector<std::vector<std::uint32_t>> consumers(elements_.size());
  for (std::uint32_t e = 0; e < elements_.size(); ++e) {
    for (const NetId in : element_inputs(elements_[e])) {
      const std::int32_t src = drivers[in.index];
      if (src >= 0) {
        ++pending[e];
        consumers[static_cast<std::uint32_t>(src)].push_back(e);
      }
    }
  }
  std::deque<std::uint32_t> ready;
  for (std::uint32_t e = 0; e < elements_.size(); ++e) {
    if (pending[e] == 0) ready.push_back(e);
  }
  topo_order_.reserve(elements_.size());
  while (!ready.empty()) {
    const std::uint32_t e = ready.front();
    ready.pop_front();
    topo_order_.push_back(e);
    for (const std::uint32_t next : consumers[e]) {
      if (--pending[next] == 0) ready.push_back(next);
    }
  }
  if (topo_order_.size() != elements_.size()) {
    throw ParseError(ParseErrorKind::CombinationalLoop, 0, "locked netlist has a cycle");
  }

  std::vector<bool> bound(rgates_.size(), false);
  for (const Element& e : elements_) {
    if (e.rgate < 0) continue;
    const auto r = static_cast<std::size_t>(e.rgate);
    if (r >= rgates_.size() || bound[r]) {
      throw std::invalid_argument("rGate binding indices must cover 0..K-1 exactly once");
    }
    bound[r] = true;
  }
  for (const bool b : bound) {
    if (!b) throw std::invalid_argument("rGate binding indices must cover 0..K-1 exactly once");
  }
}

std::optional<NetId> LockedNetlist::find_net(std::string_view name) const {
  const auto it = net_index_.find(std::string(name));
  if (it == net_index_.end()) return std::nullopt;
  return it->second;
}

const BitVector& LockedNetlist::correct_key() const {
  if (!correct_key_) {
    throw KeyNotStripped("correct key requested on an attacker view");
  }
  return *correct_key_;
}

const std::vector<PlacementRecord>& LockedNetlist::placements() const {
  if (!correct_key_) {
    throw KeyNotStripped("placement log requested on an attacker view");
  }
  return placements_;
}

LockedNetlist LockedNetlist::attacker_view() const {
  std::vector<RGate> fresh;
  fresh.reserve(rgates_.size());
  for (const RGate& rg : rgates_) {
    fresh.emplace_back(rg.kind(), rg.f_inputs(), rg.g_inputs(), rg.endurance_budget());
  }
  return LockedNetlist(name_, net_names_, primary_inputs_, primary_outputs_, elements_,
                       std::move(fresh), endurance_budget_, splittable_, std::nullopt, {});
}

void LockedNetlist::check_key_width(const BitVector& key) const {
  if (key.size() != rgates_.size()) {
    throw WidthMismatch("key is " + std::to_string(key.size()) + " bits, device has " +
                        std::to_string(rgates_.size()) + " rGates");
  }
}

void LockedNetlist::apply_key(const BitVector& key) {
  check_key_width(key);
  std::size_t failures = 0;
  for (std::size_t i = 0; i < rgates_.size(); ++i) {
    try {
      rgates_[i].reconfigure(key[i]);
    } catch (const DeviceFailed&) {
      ++failures;
    }
  }
  if (failures > 0) {
    throw DeviceFailed(std::to_string(failures) +
                       " rGate(s) past their endurance budget; key write event failed");
  }
}

std::vector<std::uint32_t> LockedNetlist::write_ledger() const {
  std::vector<std::uint32_t> ledger;
  ledger.reserve(rgates_.size());
  for (const RGate& rg : rgates_) ledger.push_back(rg.write_count());
  return ledger;
}

bool LockedNetlist::any_device_failed() const {
  for (const RGate& rg : rgates_) {
    if (rg.failed()) return true;
  }
  return false;
}

void LockedNetlist::eval_block_common(std::span<const std::uint64_t> input_words,
                                      std::span<std::uint64_t> output_words,
                                      std::span<const Polarization> states) const {
  if (input_words.size() != primary_inputs_.size() ||
      output_words.size() != primary_outputs_.size()) {
    throw WidthMismatch("locked evaluate port width mismatch");
  }
  std::vector<std::uint64_t> value(net_names_.size(), 0);
  for (std::size_t i = 0; i < primary_inputs_.size(); ++i) {
    value[primary_inputs_[i].index] = input_words[i];
  }
  std::vector<std::uint64_t> f_words;
  std::vector<std::uint64_t> g_words;
  for (const std::uint32_t e : topo_order_) {
    const Element& elem = elements_[e];
    if (elem.rgate < 0) {
      f_words.clear();
      for (const NetId in : elem.inputs) f_words.push_back(value[in.index]);
      value[elem.output.index] = fold_gate_words(elem.kind, f_words);
      continue;
    }
    const auto r = static_cast<std::size_t>(elem.rgate);
    const RGate& rg = rgates_[r];
    f_words.clear();
    g_words.clear();
    for (const NetId in : rg.f_inputs()) f_words.push_back(value[in.index]);
    for (const NetId in : rg.g_inputs()) g_words.push_back(value[in.index]);
    value[elem.output.index] = RGate::combine_words(rg.kind(), states[r], f_words, g_words);
  }
  for (std::size_t i = 0; i < primary_outputs_.size(); ++i) {
    output_words[i] = value[primary_outputs_[i].index];
  }
}

void LockedNetlist::evaluate_configured_block(std::span<const std::uint64_t> input_words,
                                              std::span<std::uint64_t> output_words) const {
  std::vector<Polarization> states;
  states.reserve(rgates_.size());
  for (const RGate& rg : rgates_) {
    if (rg.failed()) {
      throw DeviceFailed("compute rejected: an rGate has failed");
    }
    states.push_back(rg.state());
  }
  eval_block_common(input_words, output_words, states);
}

BitVector LockedNetlist::evaluate_configured(const BitVector& inputs) const {
  if (inputs.size() != primary_inputs_.size()) {
    throw WidthMismatch("locked evaluate input width mismatch");
  }
  std::vector<std::uint64_t> in_words(primary_inputs_.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    in_words[i] = inputs[i] ? ~std::uint64_t{0} : 0;
  }
  std::vector<std::uint64_t> out_words(primary_outputs_.size());
  evaluate_configured_block(in_words, out_words);
  BitVector out(primary_outputs_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out.set(i, out_words[i] & 1);
  return out;
}

void LockedNetlist::evaluate_block_with_key(const BitVector& key,
                                            std::span<const std::uint64_t> input_words,
                                            std::span<std::uint64_t> output_words) const {
  check_key_width(key);
  std::vector<Polarization> states;
  states.reserve(rgates_.size());
  for (std::size_t i = 0; i < rgates_.size(); ++i) {
    states.push_back(polarization_for_key_bit(key[i]));
  }
  eval_block_common(input_words, output_words, states);
}

BitVector LockedNetlist::evaluate_with_key(const BitVector& key,
                                           const BitVector& inputs) const {
  check_key_width(key);
  if (inputs.size() != primary_inputs_.size()) {
    throw WidthMismatch("locked evaluate input width mismatch");
  }
  std::vector<std::uint64_t> in_words(primary_inputs_.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    in_words[i] = inputs[i] ? ~std::uint64_t{0} : 0;
  }
  std::vector<std::uint64_t> out_words(primary_outputs_.size());
  evaluate_block_with_key(key, in_words, out_words);
  BitVector out(primary_outputs_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out.set(i, out_words[i] & 1);
  return out;
}

Netlist LockedNetlist::reconstruct_original() const {
  const auto& records = placements();
  std::ostringstream text;
  for (const NetId id : primary_inputs_) text << "INPUT(" << net_name(id) << ")\n";
  for (const NetId id : primary_outputs_) text << "OUTPUT(" << net_name(id) << ")\n";

  std::set<std::string> inverter_nets;
  std::vector<const PlacementRecord*> by_rgate(rgates_.size(), nullptr);
  for (const PlacementRecord& rec : records) {
    by_rgate[rec.key_index] = &rec;
    if (!rec.inverter_net.empty()) inverter_nets.insert(rec.inverter_net);
  }
  for (const Element& elem : elements_) {
    if (elem.rgate < 0) {
      const std::string& out = net_name(elem.output);
      if (inverter_nets.contains(out)) continue;
      text << out << " = " << gate_kind_name(elem.kind) << "(";
      for (std::size_t i = 0; i < elem.inputs.size(); ++i) {
        if (i) text << ", ";
        text << net_name(elem.inputs[i]);
      }
      text << ")\n";
      continue;
    }
    const PlacementRecord* rec = by_rgate[static_cast<std::size_t>(elem.rgate)];
    if (rec == nullptr) {
      throw std::logic_error("placement log does not cover every rGate");
    }
    const std::string& out = rec->inverter_net.empty() ? rec->rgate_net : rec->inverter_net;
    text << out << " = " << gate_kind_name(rec->original_kind) << "(";
    for (std::size_t i = 0; i < rec->original_inputs.size(); ++i) {
      if (i) text << ", ";
      text << rec->original_inputs[i];
    }
    text << ")\n";
  }
  return parse_bench(text.str(), name_);
}

std::vector<std::vector<std::size_t>> LockedNetlist::rgate_output_cones() const {
  std::vector<std::int32_t> drivers(net_names_.size(), -1);
  for (std::uint32_t e = 0; e < elements_.size(); ++e) {
    drivers[elements_[e].output.index] = static_cast<std::int32_t>(e);
  }
  std::vector<std::vector<std::uint32_t>> consumers(elements_.size());
  auto element_inputs = [&](const Element& e) -> std::vector<NetId> {
    if (e.rgate < 0) return e.inputs;
    const RGate& rg = rgates_[static_cast<std::size_t>(e.rgate)];
    std::vector<NetId> all(rg.f_inputs());
    all.insert(all.end(), rg.g_inputs().begin(), rg.g_inputs().end());
    return all;
  };
  for (std::uint32_t e = 0; e < elements_.size(); ++e) {
    for (const NetId in : element_inputs(elements_[e])) {
      if (drivers[in.index] >= 0) {
        consumers[static_cast<std::uint32_t>(drivers[in.index])].push_back(e);
      }
    }
  }

  std::vector<std::vector<std::size_t>> cones(rgates_.size());
  for (std::uint32_t e = 0; e < elements_.size(); ++e) {
    if (elements_[e].rgate < 0) continue;
    std::vector<bool> reached(elements_.size(), false);
    std::deque<std::uint32_t> frontier{e};
    reached[e] = true;
    std::set<std::uint32_t> reach_nets;
    while (!frontier.empty()) {
      const std::uint32_t cur = frontier.front();
      frontier.pop_front();
      reach_nets.insert(elements_[cur].output.index);
      for (const std::uint32_t next : consumers[cur]) {
        if (!reached[next]) {
          reached[next] = true;
          frontier.push_back(next);
        }
      }
    }
    auto& cone = cones[static_cast<std::size_t>(elements_[e].rgate)];
    for (std::size_t o = 0; o < primary_outputs_.size(); ++o) {
      if (reach_nets.contains(primary_outputs_[o].index)) cone.push_back(o);
    }
  }
  return cones;
}

DepthInfo LockedNetlist::logic_depths() const {
  DepthInfo info;
  info.net_depth.assign(net_names_.size(), 0);
  info.downstream.assign(net_names_.size(), -1);
  auto element_inputs = [&](const Element& e) -> std::vector<NetId> {
    if (e.rgate < 0) return e.inputs;
    const RGate& rg = rgates_[static_cast<std::size_t>(e.rgate)];
    std::vector<NetId> all(rg.f_inputs());
    all.insert(all.end(), rg.g_inputs().begin(), rg.g_inputs().end());
    return all;
  };
  for (const std::uint32_t e : topo_order_) {
    int depth = 0;
    for (const NetId in : element_inputs(elements_[e])) {
      depth = std::max(depth, info.net_depth[in.index]);
    }
    info.net_depth[elements_[e].output.index] = depth + 1;
  }
  info.critical_path = 0;
  for (const NetId out : primary_outputs_) {
    info.critical_path = std::max(info.critical_path, info.net_depth[out.index]);
    info.downstream[out.index] = 0;
  }
  for (auto it = topo_order_.rbegin(); it != topo_order_.rend(); ++it) {
    const Element& elem = elements_[*it];
    const int through = info.downstream[elem.output.index];
    if (through < 0) continue;
    for (const NetId in : element_inputs(elem)) {
      info.downstream[in.index] = std::max(info.downstream[in.index], through + 1);
    }
  }
  return info;
}

namespace {

bool is_and_family(GateKind kind) {
  return kind == GateKind::And || kind == GateKind::Nand;
}
bool is_or_family(GateKind kind) {
  return kind == GateKind::Or || kind == GateKind::Nor;
}
bool is_inverted(GateKind kind) {
  return kind == GateKind::Nand || kind == GateKind::Nor;
}

struct Candidate {
  std::uint32_t gate = 0;
  int depth = 0;
  std::vector<ReplacementType> types;
};

/// Working view of the netlist while placements accumulate: expansion nets
/// join their gate's input list and every plain AND/OR target carries one
/// extra level for its cleanup inverter. Depths are recomputed on this view
/// after each placement so later placements are judged against the
/// structure they will actually ship in, not against stale slack.
struct LockWorkspace {
  const Netlist& netlist;
  const LockPolicy& policy;
  DepthInfo original;
  std::vector<std::vector<NetId>> inputs;
  std::vector<char> extra_level;
  DepthInfo eff;

  LockWorkspace(const Netlist& nl, const LockPolicy& pol)
      : netlist(nl), policy(pol), original(logic_depths(nl)), eff(original) {
    inputs.reserve(nl.gate_count());
    for (const Gate& gate : nl.gates()) inputs.push_back(gate.inputs);
    extra_level.assign(nl.gate_count(), 0);
  }

  int gate_levels(std::uint32_t g) const { return 1 + extra_level[g]; }

  void commit(std::uint32_t g, bool plain, const std::vector<NetId>& appended) {
    for (const NetId gn : appended) inputs[g].push_back(gn);
    if (plain) extra_level[g] = 1;
    recompute();
  }

  void recompute() {
    const std::size_t gate_count = netlist.gate_count();
    std::vector<std::uint32_t> remaining(gate_count, 0);
    std::vector<std::vector<std::uint32_t>> consumers(gate_count);
    for (std::uint32_t g = 0; g < gate_count; ++g) {
      for (const NetId in : inputs[g]) {
        const std::int32_t src = netlist.driver_of(in);
        if (src >= 0) {
          ++remaining[g];
          consumers[static_cast<std::size_t>(src)].push_back(g);
        }
      }
    }
    std::vector<std::uint32_t> topo;
    topo.reserve(gate_count);
    std::deque<std::uint32_t> ready;
    for (std::uint32_t g = 0; g < gate_count; ++g) {
      if (remaining[g] == 0) ready.push_back(g);
    }
    while (!ready.empty()) {
      const std::uint32_t g = ready.front();
      ready.pop_front();
      topo.push_back(g);
      for (const std::uint32_t next : consumers[g]) {
        if (--remaining[next] == 0) ready.push_back(next);
      }
    }
    eff.net_depth.assign(netlist.net_count(), 0);
    eff.downstream.assign(netlist.net_count(), -1);
    for (const std::uint32_t g : topo) {
      int depth = 0;
      for (const NetId in : inputs[g]) depth = std::max(depth, eff.net_depth[in.index]);
      eff.net_depth[netlist.gates()[g].output.index] = depth + gate_levels(g);
    }
    eff.critical_path = 0;
    for (const NetId out : netlist.primary_outputs()) {
      eff.critical_path = std::max(eff.critical_path, eff.net_depth[out.index]);
      eff.downstream[out.index] = 0;
    }
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      const int through = eff.downstream[netlist.gates()[*it].output.index];
      if (through < 0) continue;
      for (const NetId in : inputs[*it]) {
        eff.downstream[in.index] =
            std::max(eff.downstream[in.index], through + gate_levels(*it));
      }
    }
  }
};

/// Transitive input cone of a gate in the working view (net indices), used
/// to keep appended G nets functionally independent of the cone they join.
std::vector<bool> ancestor_nets(const LockWorkspace& ws, std::uint32_t gate_index) {
  std::vector<bool> seen(ws.netlist.net_count(), false);
  std::deque<NetId> frontier(ws.inputs[gate_index].begin(), ws.inputs[gate_index].end());
  while (!frontier.empty()) {
    const NetId net = frontier.front();
    frontier.pop_front();
    if (seen[net.index]) continue;
    seen[net.index] = true;
    const std::int32_t driver = ws.netlist.driver_of(net);
    if (driver >= 0) {
      for (const NetId in : ws.inputs[static_cast<std::size_t>(driver)]) {
        if (!seen[in.index]) frontier.push_back(in);
      }
    }
  }
  return seen;
}

/// G candidates for expand types: nets strictly shallower than the gate in
/// both the unlocked netlist and the working view, outside the gate's input
/// cone, ordered by (working depth, net index).
std::vector<NetId> expand_candidates(const LockWorkspace& ws, std::uint32_t gate_index) {
  const Gate& gate = ws.netlist.gates()[gate_index];
  const std::uint32_t out = gate.output.index;
  const std::vector<bool> ancestors = ancestor_nets(ws, gate_index);
  std::vector<NetId> result;
  for (std::uint32_t n = 0; n < ws.netlist.net_count(); ++n) {
    if (ancestors[n]) continue;
    if (n == out) continue;
    const NetId id{n};
    if (ws.original.net_depth[n] >= ws.original.net_depth[out]) continue;
    if (ws.eff.net_depth[n] >= ws.eff.net_depth[out]) continue;
    if (!ws.netlist.is_primary_input(id) && ws.netlist.driver_of(id) < 0) continue;
    result.push_back(id);
  }
  std::sort(result.begin(), result.end(), [&](NetId a, NetId b) {
    const int da = ws.eff.net_depth[a.index];
    const int db = ws.eff.net_depth[b.index];
    return da != db ? da < db : a.index < b.index;
  });
  return result;
}

std::vector<ReplacementType> valid_types(const LockWorkspace& ws, std::uint32_t gate_index) {
  const Gate& gate = ws.netlist.gates()[gate_index];
  std::vector<ReplacementType> result;
  const bool cut_ok = gate.inputs.size() >= 2;
  const bool expand_ok = !expand_candidates(ws, gate_index).empty();
  for (const ReplacementType type : ws.policy.allowed_types) {
    const bool and_target =
        type == ReplacementType::CutAnd || type == ReplacementType::ExpandAnd;
    if (and_target != is_and_family(gate.kind)) continue;
    const bool is_cut = type == ReplacementType::CutAnd || type == ReplacementType::CutOr;
    if (is_cut ? cut_ok : expand_ok) {
      if (std::find(result.begin(), result.end(), type) == result.end()) {
        result.push_back(type);
      }
    }
  }
  return result;
}

bool gate_eligible(const LockWorkspace& ws, std::uint32_t gate_index) {
  const Gate& gate = ws.netlist.gates()[gate_index];
  if (!is_and_family(gate.kind) && !is_or_family(gate.kind)) return false;
  const std::uint32_t out = gate.output.index;
  if (ws.eff.downstream[out] < 0) return false;
  if (ws.eff.critical_path - ws.eff.net_depth[out] < ws.policy.depth_margin) return false;
  if (!is_inverted(gate.kind)) {
    // A plain AND/OR target gains a cleanup inverter, one extra level on
    // every path through it; require slack on the longest such path in the
    // working view so stacked placements can never stretch the critical path.
    if (ws.eff.net_depth[out] + ws.eff.downstream[out] >= ws.eff.critical_path) return false;
  }
  return !valid_types(ws, gate_index).empty();
}

std::string fresh_net_name(const Netlist& netlist,
                           const std::set<std::string>& taken,
                           const std::string& base) {
  std::string name = base + "$rg";
  while (netlist.find_net(name) || taken.contains(name)) name += "x";
  return name;
}

}  // namespace

LockedNetlist lock_netlist(const Netlist& netlist, const LockPolicy& policy) {
  if (policy.g_width < 1) {
    throw std::invalid_argument("g_width must be at least 1");
  }
  if (policy.allowed_types.empty()) {
    throw std::invalid_argument("allowed_types must not be empty");
  }
  LockWorkspace ws(netlist, policy);
  Rng rng(policy.seed);

  const bool explicit_mode = !policy.explicit_gates.empty();
  std::vector<std::uint32_t> stream;
  if (explicit_mode) {
    if (policy.key_length != policy.explicit_gates.size()) {
      throw std::invalid_argument("key_length must match the explicit gate list size");
    }
    std::set<std::string> seen;
    for (const std::string& name : policy.explicit_gates) {
      if (!seen.insert(name).second) {
        throw std::invalid_argument("explicit gate list repeats net " + name);
      }
      const std::optional<NetId> net = netlist.find_net(name);
      if (!net || netlist.driver_of(*net) < 0) {
        throw LockError(LockErrorKind::NoValidGChoice,
                        "net " + name + " is not a gate output");
      }
      stream.push_back(static_cast<std::uint32_t>(netlist.driver_of(*net)));
    }
  } else {
    std::vector<Candidate> eligible;
    for (std::uint32_t g = 0; g < netlist.gate_count(); ++g) {
      if (!gate_eligible(ws, g)) continue;
      Candidate c;
      c.gate = g;
      c.depth = ws.original.net_depth[netlist.gates()[g].output.index];
      eligible.push_back(std::move(c));
    }
    if (eligible.size() < policy.key_length) {
      throw LockError(LockErrorKind::NotEnoughEligibleGates,
                      "policy asks for " + std::to_string(policy.key_length) +
                          " rGates but only " + std::to_string(eligible.size()) +
                          " gates are eligible");
    }
    std::sort(eligible.begin(), eligible.end(), [&](const Candidate& a, const Candidate& b) {
      if (a.depth != b.depth) return a.depth < b.depth;
      return netlist.gates()[a.gate].output.index < netlist.gates()[b.gate].output.index;
    });
    rng.shuffle(eligible);
    stream.reserve(eligible.size());
    for (const Candidate& c : eligible) stream.push_back(c.gate);
  }

  std::vector<std::string> net_names;
  net_names.reserve(netlist.net_count());
  for (std::uint32_t n = 0; n < netlist.net_count(); ++n) {
    net_names.push_back(netlist.net_name(NetId{n}));
  }
  std::set<std::string> extra_names;
  auto intern = [&](const std::string& name) -> NetId {
    for (std::uint32_t n = 0; n < net_names.size(); ++n) {
      if (net_names[n] == name) return NetId{n};
    }
    net_names.push_back(name);
    return NetId{static_cast<std::uint32_t>(net_names.size() - 1)};
  };

  std::vector<std::int32_t> locked_as(netlist.gate_count(), -1);
  std::vector<std::uint32_t> selected;
  std::vector<RGate> rgates;
  std::vector<PlacementRecord> placements;
  BitVector key(policy.key_length);
  selected.reserve(policy.key_length);
  rgates.reserve(policy.key_length);

  struct Pending {
    LockedNetlist::Element element;
    std::optional<LockedNetlist::Element> inverter;
  };
  std::vector<Pending> pending(netlist.gate_count());

  auto net_less = [&](NetId a, NetId b) {
    const int da = ws.eff.net_depth[a.index];
    const int db = ws.eff.net_depth[b.index];
    return da != db ? da < db : a.index < b.index;
  };

  for (const std::uint32_t g : stream) {
    if (selected.size() == policy.key_length) break;
    const Gate& gate = netlist.gates()[g];
    if (!gate_eligible(ws, g)) {
      if (explicit_mode) {
        throw LockError(LockErrorKind::NoValidGChoice,
                        "gate driving " + netlist.net_name(gate.output) +
                            " admits no valid replacement under the policy");
      }
      continue;
    }
    const std::vector<ReplacementType> types = valid_types(ws, g);
    const ReplacementType type = types[rng.below(types.size())];
    const bool is_cut = type == ReplacementType::CutAnd || type == ReplacementType::CutOr;

    std::vector<NetId> f_nets;
    std::vector<NetId> g_nets;
    if (is_cut) {
      const std::size_t g_count = std::min(policy.g_width, gate.inputs.size() - 1);
      std::vector<std::size_t> order(gate.inputs.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order);
      std::vector<bool> in_g(gate.inputs.size(), false);
      for (std::size_t i = 0; i < g_count; ++i) in_g[order[i]] = true;
      for (std::size_t i = 0; i < gate.inputs.size(); ++i) {
        (in_g[i] ? g_nets : f_nets).push_back(gate.inputs[i]);
      }
    } else {
      std::vector<NetId> candidates = expand_candidates(ws, g);
      rng.shuffle(candidates);
      const std::size_t g_count = std::min(policy.g_width, candidates.size());
      g_nets.assign(candidates.begin(), candidates.begin() + g_count);
      f_nets = gate.inputs;
    }
    std::sort(g_nets.begin(), g_nets.end(), net_less);

    const std::size_t slot = selected.size();
    key.set(slot, correct_key_bit_for(type));

    PlacementRecord rec;
    rec.original_kind = gate.kind;
    for (const NetId in : gate.inputs) rec.original_inputs.push_back(netlist.net_name(in));
    rec.type = type;
    for (const NetId gn : g_nets) rec.g_nets.push_back(netlist.net_name(gn));
    rec.depth = ws.original.net_depth[gate.output.index];
    rec.key_index = slot;

    Pending& p = pending[g];
    const std::string out_name = netlist.net_name(gate.output);
    const bool plain = !is_inverted(gate.kind);
    if (!plain) {
      rec.rgate_net = out_name;
      p.element.output = gate.output;
    } else {
      const std::string rg_name = fresh_net_name(netlist, extra_names, out_name);
      extra_names.insert(rg_name);
      rec.rgate_net = rg_name;
      rec.inverter_net = out_name;
      LockedNetlist::Element inv;
      inv.kind = GateKind::Not;
      inv.output = gate.output;
      p.inverter = inv;
      p.element.output = NetId{0};  // interned below, after name table copy
    }
    p.element.rgate = static_cast<std::int32_t>(slot);
    ws.commit(g, plain, is_cut ? std::vector<NetId>{} : g_nets);
    rgates.emplace_back(rgate_kind_for(type), std::move(f_nets), std::move(g_nets),
                        policy.endurance_budget);
    placements.push_back(std::move(rec));
    locked_as[g] = static_cast<std::int32_t>(slot);
    selected.push_back(g);
  }
  if (selected.size() < policy.key_length) {
    throw LockError(LockErrorKind::NotEnoughEligibleGates,
                    "policy asks for " + std::to_string(policy.key_length) +
                        " rGates but only " + std::to_string(selected.size()) +
                        " placements fit within the critical path");
  }

  std::vector<LockedNetlist::Element> elements;
  elements.reserve(netlist.gate_count() + selected.size());
  for (std::uint32_t g = 0; g < netlist.gate_count(); ++g) {
    const Gate& gate = netlist.gates()[g];
    if (locked_as[g] < 0) {
      LockedNetlist::Element e;
      e.output = gate.output;
      e.kind = gate.kind;
      e.inputs = gate.inputs;
      elements.push_back(std::move(e));
      continue;
    }
    Pending& p = pending[g];
    const PlacementRecord& rec = placements[static_cast<std::size_t>(locked_as[g])];
    if (p.inverter) {
      const NetId rg_net = intern(rec.rgate_net);
      p.element.output = rg_net;
      p.inverter->inputs = {rg_net};
      elements.push_back(p.element);
      elements.push_back(*p.inverter);
    } else {
      elements.push_back(p.element);
    }
  }

  return LockedNetlist(netlist.name(), std::move(net_names),
                       netlist.primary_inputs(), netlist.primary_outputs(),
                       std::move(elements), std::move(rgates), policy.endurance_budget,
                       policy.splittable, std::move(key), std::move(placements));
}

std::string serialize_locked(const LockedNetlist& locked, bool include_sidecar) {
  std::ostringstream out;
  out << "#MODE " << (locked.splittable() ? "SPLIT" : "ALLMASK") << "\n";
  out << "#ENDURANCE " << locked.endurance_budget() << "\n";
  for (const NetId id : locked.primary_inputs()) {
    out << "INPUT(" << locked.net_name(id) << ")\n";
  }
  for (const NetId id : locked.primary_outputs()) {
    out << "OUTPUT(" << locked.net_name(id) << ")\n";
  }
  auto write_list = [&](const std::vector<NetId>& nets) {
    for (std::size_t i = 0; i < nets.size(); ++i) {
      if (i) out << ", ";
      out << locked.net_name(nets[i]);
    }
  };
  for (const LockedNetlist::Element& elem : locked.elements()) {
    if (elem.rgate < 0) {
      out << locked.net_name(elem.output) << " = " << gate_kind_name(elem.kind) << "(";
      write_list(elem.inputs);
      out << ")\n";
      continue;
    }
    const RGate& rg = locked.rgates()[static_cast<std::size_t>(elem.rgate)];
    out << "RGATE " << locked.net_name(elem.output) << " TYPE"
        << (rg.kind() == RGateKind::Type1 ? 1 : 2) << " F(";
    write_list(rg.f_inputs());
    out << ") G(";
    write_list(rg.g_inputs());
    out << ") BIND(" << elem.rgate << ")\n";
  }
  if (include_sidecar && locked.has_key()) {
    out << "#KEY " << locked.correct_key().to_string() << "\n";
    for (const PlacementRecord& rec : locked.placements()) {
      out << "#PLACE " << rec.rgate_net << " TYPE " << replacement_type_name(rec.type)
          << " KEY " << rec.key_index << " DEPTH " << rec.depth << " ORIG "
          << gate_kind_name(rec.original_kind) << "(";
      for (std::size_t i = 0; i < rec.original_inputs.size(); ++i) {
        if (i) out << ", ";
        out << rec.original_inputs[i];
      }
      out << ") G(";
      for (std::size_t i = 0; i < rec.g_nets.size(); ++i) {
        if (i) out << ", ";
        out << rec.g_nets[i];
      }
      out << ") INV " << (rec.inverter_net.empty() ? "-" : rec.inverter_net) << "\n";
    }
  }
  return out.str();
}

namespace {

struct LockedLine {
  enum class Kind { Input, Output, Gate, RGate } kind;
  std::string output;
  std::string gate_kind;
  std::vector<std::string> inputs;
  int rgate_type = 0;
  std::vector<std::string> f_nets;
  std::vector<std::string> g_nets;
  long bind = -1;
  int line = 0;
};

class TokenCursor {
public:
  TokenCursor(std::string_view line, int line_no) : line_(line), line_no_(line_no) {}

  void skip_ws() {
    while (cursor_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[cursor_]))) {
      ++cursor_;
    }
  }
  bool at_end() {
    skip_ws();
    return cursor_ >= line_.size();
  }
  char peek() {
    skip_ws();
    return cursor_ < line_.size() ? line_[cursor_] : '\0';
  }
  void expect(char c) {
    skip_ws();
    if (cursor_ >= line_.size() || line_[cursor_] != c) {
      throw ParseError(ParseErrorKind::SyntaxError, line_no_,
                       std::string("expected '") + c + "'");
    }
    ++cursor_;
  }
  std::string name() {
    skip_ws();
    const std::size_t start = cursor_;
    while (cursor_ < line_.size()) {
      const char c = line_[cursor_];
      if (std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' || c == ',' ||
          c == '=' || c == '#') {
        break;
      }
      ++cursor_;
    }
    if (cursor_ == start) {
      throw ParseError(ParseErrorKind::SyntaxError, line_no_, "expected a name");
    }
    return std::string(line_.substr(start, cursor_ - start));
  }
  std::vector<std::string> paren_list() {
    expect('(');
    std::vector<std::string> items{name()};
    skip_ws();
    while (peek() == ',') {
      expect(',');
      items.push_back(name());
    }
    expect(')');
    return items;
  }
  long integer() {
    const std::string text = name();
    try {
      std::size_t used = 0;
      const long value = std::stol(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return value;
    } catch (const std::exception&) {
      throw ParseError(ParseErrorKind::SyntaxError, line_no_,
                       "expected an integer, got " + text);
    }
  }
  int line_no() const { return line_no_; }

private:
  std::string_view line_;
  std::size_t cursor_ = 0;
  int line_no_;
};

GateKind gate_kind_from_name(const std::string& upper_name, int line_no) {
  if (upper_name == "AND") return GateKind::And;
  if (upper_name == "OR") return GateKind::Or;
  if (upper_name == "NAND") return GateKind::Nand;
  if (upper_name == "NOR") return GateKind::Nor;
  if (upper_name == "NOT" || upper_name == "INV") return GateKind::Not;
  if (upper_name == "XOR") return GateKind::Xor;
  if (upper_name == "XNOR") return GateKind::Xnor;
  if (upper_name == "BUF" || upper_name == "BUFF") return GateKind::Buf;
  for (const char* seq : {"DFF", "SDFF", "DFFSR", "LATCH", "DLAT", "FF", "REG"}) {
    if (upper_name == seq) {
      throw ParseError(ParseErrorKind::SequentialElement, line_no,
                       "sequential element " + upper_name + " is not supported");
    }
  }
  throw ParseError(ParseErrorKind::UnknownGateKind, line_no,
                   "unknown gate kind " + upper_name);
}

std::string to_upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

ReplacementType replacement_type_from_name(const std::string& text, int line_no) {
  if (text == "A") return ReplacementType::CutAnd;
  if (text == "B") return ReplacementType::ExpandOr;
  if (text == "C") return ReplacementType::ExpandAnd;
  if (text == "D") return ReplacementType::CutOr;
  throw ParseError(ParseErrorKind::SyntaxError, line_no,
                   "unknown replacement type " + text);
}

}  // namespace

LockedNetlist parse_locked(std::string_view text, std::string_view name) {
  std::vector<LockedLine> lines;
  std::optional<bool> splittable;
  std::uint32_t endurance = kDefaultEnduranceBudget;
  std::optional<std::string> key_text;
  int key_line = 0;
  std::vector<PlacementRecord> placements;
  std::vector<int> placement_lines;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    std::string_view trimmed = line;
    while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.front()))) {
      trimmed.remove_prefix(1);
    }
    if (trimmed.empty()) continue;

    if (trimmed.front() == '#') {
      TokenCursor cur(trimmed.substr(1), line_no);
      if (cur.at_end()) continue;
      const std::string tag = to_upper(cur.name());
      if (tag == "MODE") {
        const std::string mode = to_upper(cur.name());
        if (mode == "SPLIT") {
          splittable = true;
        } else if (mode == "ALLMASK") {
          splittable = false;
        } else {
          throw ParseError(ParseErrorKind::SyntaxError, line_no, "unknown mode " + mode);
        }
      } else if (tag == "ENDURANCE") {
        const long value = cur.integer();
        if (value < 0) {
          throw ParseError(ParseErrorKind::SyntaxError, line_no, "endurance must be >= 0");
        }
        endurance = static_cast<std::uint32_t>(value);
      } else if (tag == "KEY") {
        key_text = cur.name();
        key_line = line_no;
      } else if (tag == "PLACE") {
        PlacementRecord rec;
        rec.rgate_net = cur.name();
        if (to_upper(cur.name()) != "TYPE") {
          throw ParseError(ParseErrorKind::SyntaxError, line_no, "expected TYPE");
        }
        rec.type = replacement_type_from_name(to_upper(cur.name()), line_no);
        if (to_upper(cur.name()) != "KEY") {
          throw ParseError(ParseErrorKind::SyntaxError, line_no, "expected KEY");
        }
        rec.key_index = static_cast<std::size_t>(cur.integer());
        if (to_upper(cur.name()) != "DEPTH") {
          throw ParseError(ParseErrorKind::SyntaxError, line_no, "expected DEPTH");
        }
        rec.depth = static_cast<int>(cur.integer());
        if (to_upper(cur.name()) != "ORIG") {
          throw ParseError(ParseErrorKind::SyntaxError, line_no, "expected ORIG");
        }
        rec.original_kind = gate_kind_from_name(to_upper(cur.name()), line_no);
        rec.original_inputs = cur.paren_list();
        if (to_upper(cur.name()) != "G") {
          throw ParseError(ParseErrorKind::SyntaxError, line_no, "expected G");
        }
        rec.g_nets = cur.paren_list();
        if (to_upper(cur.name()) != "INV") {
          throw ParseError(ParseErrorKind::SyntaxError, line_no, "expected INV");
        }
        const std::string inv = cur.name();
        rec.inverter_net = inv == "-" ? "" : inv;
        placements.push_back(std::move(rec));
        placement_lines.push_back(line_no);
      }
      continue;
    }

    TokenCursor cur(trimmed, line_no);
    const std::string first = cur.name();
    const std::string first_upper = to_upper(first);
    LockedLine parsed;
    parsed.line = line_no;
    if ((first_upper == "INPUT" || first_upper == "OUTPUT") && cur.peek() == '(') {
      cur.expect('(');
      parsed.kind = first_upper == "INPUT" ? LockedLine::Kind::Input : LockedLine::Kind::Output;
      parsed.output = cur.name();
      cur.expect(')');
      if (!cur.at_end()) {
        throw ParseError(ParseErrorKind::SyntaxError, line_no, "trailing text");
      }
      lines.push_back(std::move(parsed));
      continue;
    }
    if (first_upper == "RGATE") {
      parsed.kind = LockedLine::Kind::RGate;
      parsed.output = cur.name();
      const std::string type_tok = to_upper(cur.name());
      if (type_tok == "TYPE1") {
        parsed.rgate_type = 1;
      } else if (type_tok == "TYPE2") {
        parsed.rgate_type = 2;
      } else {
        throw ParseError(ParseErrorKind::SyntaxError, line_no,
                         "expected TYPE1 or TYPE2, got " + type_tok);
      }
      if (to_upper(cur.name()) != "F") {
        throw ParseError(ParseErrorKind::SyntaxError, line_no, "expected F cone");
      }
      parsed.f_nets = cur.paren_list();
      if (to_upper(cur.name()) != "G") {
        throw ParseError(ParseErrorKind::SyntaxError, line_no, "expected G cone");
      }
      parsed.g_nets = cur.paren_list();
      if (to_upper(cur.name()) != "BIND") {
        throw ParseError(ParseErrorKind::SyntaxError, line_no, "expected BIND");
      }
      cur.expect('(');
      parsed.bind = cur.integer();
      cur.expect(')');
      if (!cur.at_end()) {
        throw ParseError(ParseErrorKind::SyntaxError, line_no, "trailing text");
      }
      if (parsed.bind < 0) {
        throw ParseError(ParseErrorKind::SyntaxError, line_no, "BIND index must be >= 0");
      }
      lines.push_back(std::move(parsed));
      continue;
    }
    parsed.kind = LockedLine::Kind::Gate;
    parsed.output = first;
    cur.expect('=');
    parsed.gate_kind = to_upper(cur.name());
    parsed.inputs = cur.paren_list();
    if (!cur.at_end()) {
      throw ParseError(ParseErrorKind::SyntaxError, line_no, "trailing text");
    }
    lines.push_back(std::move(parsed));
  }

  std::vector<std::string> net_names;
  std::unordered_map<std::string, NetId> index;
  auto intern = [&](const std::string& net) -> NetId {
    const auto it = index.find(net);
    if (it != index.end()) return it->second;
    const NetId id{static_cast<std::uint32_t>(net_names.size())};
    net_names.push_back(net);
    index.emplace(net, id);
    return id;
  };

  std::vector<NetId> inputs;
  std::vector<NetId> outputs;
  std::vector<LockedNetlist::Element> elements;
  struct RawRGate {
    RGateKind kind;
    std::vector<NetId> f;
    std::vector<NetId> g;
    std::size_t bind;
    int line;
    std::size_t element;
  };
  std::vector<RawRGate> raw_rgates;
  std::set<std::string> seen_inputs;
  std::set<std::string> seen_outputs;

  for (const LockedLine& line : lines) {
    switch (line.kind) {
      case LockedLine::Kind::Input:
        if (!seen_inputs.insert(line.output).second) {
          throw ParseError(ParseErrorKind::MultipleDrivers, line.line,
                           "net " + line.output + " declared INPUT twice");
        }
        inputs.push_back(intern(line.output));
        break;
      case LockedLine::Kind::Output:
        if (!seen_outputs.insert(line.output).second) {
          throw ParseError(ParseErrorKind::DuplicateOutput, line.line,
                           "net " + line.output + " declared OUTPUT twice");
        }
        outputs.push_back(intern(line.output));
        break;
      case LockedLine::Kind::Gate: {
        LockedNetlist::Element e;
        e.kind = gate_kind_from_name(line.gate_kind, line.line);
        if ((e.kind == GateKind::Not || e.kind == GateKind::Buf) && line.inputs.size() != 1) {
          throw ParseError(ParseErrorKind::SyntaxError, line.line,
                           line.gate_kind + " takes exactly one input");
        }
        e.output = intern(line.output);
        for (const std::string& in : line.inputs) e.inputs.push_back(intern(in));
        elements.push_back(std::move(e));
        break;
      }
      case LockedLine::Kind::RGate: {
        LockedNetlist::Element e;
        e.output = intern(line.output);
        RawRGate raw;
        raw.kind = line.rgate_type == 1 ? RGateKind::Type1 : RGateKind::Type2;
        for (const std::string& in : line.f_nets) raw.f.push_back(intern(in));
        for (const std::string& in : line.g_nets) raw.g.push_back(intern(in));
        raw.bind = static_cast<std::size_t>(line.bind);
        raw.line = line.line;
        raw.element = elements.size();
        elements.push_back(std::move(e));
        raw_rgates.push_back(std::move(raw));
        break;
      }
    }
  }

  const std::size_t key_length = raw_rgates.size();
  std::vector<const RawRGate*> by_bind(key_length, nullptr);
  for (const RawRGate& raw : raw_rgates) {
    if (raw.bind >= key_length || by_bind[raw.bind] != nullptr) {
      throw ParseError(ParseErrorKind::SyntaxError, raw.line,
                       "BIND indices must cover 0.." + std::to_string(key_length - 1) +
                           " exactly once");
    }
    by_bind[raw.bind] = &raw;
  }
  std::vector<RGate> rgates;
  rgates.reserve(key_length);
  for (std::size_t i = 0; i < key_length; ++i) {
    const RawRGate& raw = *by_bind[i];
    rgates.emplace_back(raw.kind, raw.f, raw.g, endurance);
    elements[raw.element].rgate = static_cast<std::int32_t>(i);
  }

  std::optional<BitVector> key;
  if (key_text) {
    BitVector parsed_key;
    try {
      parsed_key = BitVector::from_string(*key_text);
    } catch (const std::invalid_argument& err) {
      throw ParseError(ParseErrorKind::SyntaxError, key_line, err.what());
    }
    if (parsed_key.size() != key_length) {
      throw ParseError(ParseErrorKind::SyntaxError, key_line,
                       "key width " + std::to_string(parsed_key.size()) +
                           " does not match rGate count " + std::to_string(key_length));
    }
    key = std::move(parsed_key);
  }
  if (!key && !placements.empty()) {
    throw ParseError(ParseErrorKind::SyntaxError, placement_lines.front(),
                     "#PLACE records require a #KEY line");
  }
  if (key && !placements.empty()) {
    std::vector<bool> covered(key_length, false);
    for (std::size_t i = 0; i < placements.size(); ++i) {
      const std::size_t idx = placements[i].key_index;
      if (idx >= key_length || covered[idx]) {
        throw ParseError(ParseErrorKind::SyntaxError, placement_lines[i],
                         "#PLACE KEY indices must cover 0..K-1 at most once");
      }
      covered[idx] = true;
    }
  }

  try {
    return LockedNetlist(std::string(name), std::move(net_names), std::move(inputs),
                         std::move(outputs), std::move(elements), std::move(rgates), endurance,
                         splittable.value_or(false), std::move(key), std::move(placements));
  } catch (const ParseError& err) {
    if (err.line() != 0) throw;
    throw ParseError(err.kind(), 0, err.what());
  }
}

LockedNetlist parse_locked_attacker(std::string_view text, std::string_view name) {
  return parse_locked(text, name).attacker_view();
}

}  // namespace allmask
