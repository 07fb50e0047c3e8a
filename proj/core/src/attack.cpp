#include "allmask/attack.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "allmask/rng.hpp"

namespace allmask {
namespace {

constexpr std::uint64_t kFixedProbeSalt = 0xf1de64b17a5e5eedULL;
constexpr std::size_t kFixedProbeCount = 64;
constexpr std::size_t kExhaustiveInputLimit = 16;

/// Probe inputs plus the oracle's responses, packed 64 vectors per block.
struct ProbeSet {
  std::vector<std::vector<std::uint64_t>> input_blocks;
  std::vector<std::vector<std::uint64_t>> oracle_blocks;
  std::size_t vector_count = 0;
};

ProbeSet build_probes(const LockedNetlist& device,
                      const OracleHandle& oracle,
                      const AttackConfig& config) {
  const std::size_t n = device.input_count();
  ProbeSet probes;
  if (n <= kExhaustiveInputLimit) {
    const std::uint64_t total = std::uint64_t{1} << n;
    probes.vector_count = total;
    const std::uint64_t blocks = (total + 63) / 64;
    for (std::uint64_t b = 0; b < blocks; ++b) {
      std::vector<std::uint64_t> words(n, 0);
      for (std::size_t lane = 0; lane < 64; ++lane) {
        const std::uint64_t v = std::min(b * 64 + lane, total - 1);
        for (std::size_t i = 0; i < n; ++i) {
          words[i] |= ((v >> i) & 1u) << lane;
        }
      }
      probes.input_blocks.push_back(std::move(words));
    }
  } else {
    const std::size_t total = kFixedProbeCount + config.random_probes;
    probes.vector_count = total;
    Rng rng(config.seed ^ 0x70726f6265736574ULL);
    const std::size_t blocks = (total + 63) / 64;
    std::size_t produced = 0;
    for (std::size_t b = 0; b < blocks; ++b) {
      std::vector<std::uint64_t> words(n, 0);
      for (std::size_t lane = 0; lane < 64 && produced < total; ++lane, ++produced) {
        for (std::size_t i = 0; i < n; ++i) {
          bool bit;
          if (produced < kFixedProbeCount) {
            std::uint64_t x = kFixedProbeSalt + produced * 0x10001ULL + i;
            bit = (Rng::splitmix64(x) & 1u) != 0;
          } else {
            bit = rng.coin();
          }
          if (bit) words[i] |= std::uint64_t{1} << lane;
        }
      }
      probes.input_blocks.push_back(std::move(words));
    }
  }
  for (const auto& block : probes.input_blocks) {
    std::vector<std::uint64_t> out(oracle.output_count(), 0);
    oracle.query_block(block, out);
    probes.oracle_blocks.push_back(std::move(out));
  }
  return probes;
}

/// True when the configured device matches the oracle on every probe.
bool device_matches(const LockedNetlist& device, const ProbeSet& probes) {
  std::vector<std::uint64_t> out(device.output_count(), 0);
  for (std::size_t b = 0; b < probes.input_blocks.size(); ++b) {
    device.evaluate_configured_block(probes.input_blocks[b], out);
    if (out != probes.oracle_blocks[b]) return false;
  }
  return true;
}

/// Match restricted to a subset of primary outputs.
bool device_matches_outputs(const LockedNetlist& device,
                            const ProbeSet& probes,
                            const std::vector<std::size_t>& outputs) {
  std::vector<std::uint64_t> out(device.output_count(), 0);
  for (std::size_t b = 0; b < probes.input_blocks.size(); ++b) {
    device.evaluate_configured_block(probes.input_blocks[b], out);
    for (const std::size_t o : outputs) {
      if (out[o] != probes.oracle_blocks[b][o]) return false;
    }
  }
  return true;
}

class Stopwatch {
public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    const auto now = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(now - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

OracleHandle::OracleHandle(LockedNetlist locked, BitVector key)
    : locked_(std::move(locked)), key_(std::move(key)) {}

OracleHandle OracleHandle::from_designer(const LockedNetlist& locked) {
  const BitVector key = locked.correct_key();
  return OracleHandle(locked.attacker_view(), key);
}

BitVector OracleHandle::query(const BitVector& inputs) const {
  return locked_.evaluate_with_key(key_, inputs);
}

void OracleHandle::query_block(std::span<const std::uint64_t> input_words,
                               std::span<std::uint64_t> output_words) const {
  locked_.evaluate_block_with_key(key_, input_words, output_words);
}

std::string AttackReport::to_json(bool include_timing) const {
  nlohmann::json doc;
  doc["strategy"] = strategy;
  doc["seed"] = seed;
  doc["total_cycles"] = total_cycles;
  doc["key_attempts"] = key_attempts;
  doc["worst_case_attempts"] = worst_case_attempts;
  doc["writes_consumed"] = writes_consumed;
  doc["success"] = success;
  if (recovered_key) {
    doc["recovered_key"] = recovered_key->to_string();
  } else {
    doc["recovered_key"] = nullptr;
  }
  doc["failure"] = failure;
  if (include_timing) doc["wall_time_ms"] = wall_time_ms;
  return doc.dump(2) + "\n";
}

AttackReport direct_traversal(LockedNetlist& device,
                              const OracleHandle& oracle,
                              const AttackConfig& config) {
  const std::size_t key_length = device.key_length();
  if (key_length > 32) {
    throw std::invalid_argument("direct traversal enumerates 2^K keys; K > 32 is not practical");
  }
  Stopwatch watch;
  AttackReport report;
  report.strategy = "direct";
  report.seed = config.seed;
  report.worst_case_attempts = std::uint64_t{1} << key_length;

  const ProbeSet probes = build_probes(device, oracle, config);
  const std::uint64_t total = std::uint64_t{1} << key_length;
  std::optional<SeededPermutation> perm;
  if (key_length > 0) perm.emplace(config.seed, static_cast<unsigned>(key_length));

  for (std::uint64_t i = 0; i < total; ++i) {
    if (report.total_cycles >= config.max_cycles) {
      report.failure = "MaxCyclesExceeded";
      break;
    }
    const std::uint64_t value = perm ? perm->map(i) : 0;
    const BitVector candidate = BitVector::from_u64(value, key_length);
    try {
      device.apply_key(candidate);
    } catch (const DeviceFailed&) {
      report.key_attempts += 1;
      report.total_cycles += 1;
      report.failure = "EnduranceExhausted";
      break;
    }
    report.key_attempts += 1;
    report.total_cycles += 1;
    if (device_matches(device, probes)) {
      report.success = true;
      report.recovered_key = candidate;
      break;
    }
  }
  report.writes_consumed = device.write_ledger();
  report.wall_time_ms = watch.elapsed_ms();
  return report;
}

AttackReport separate_traversal(LockedNetlist& device,
                                const OracleHandle& oracle,
                                const std::vector<std::vector<std::size_t>>& groups,
                                const AttackConfig& config) {
  const std::size_t key_length = device.key_length();
  std::vector<bool> covered(key_length, false);
  for (const auto& group : groups) {
    if (group.empty()) throw std::invalid_argument("key index groups must be non-empty");
    if (group.size() > 32) {
      throw std::invalid_argument("group key spaces beyond 32 bits are not practical");
    }
    for (const std::size_t idx : group) {
      if (idx >= key_length || covered[idx]) {
        throw std::invalid_argument("groups must partition the key indices 0..K-1");
      }
      covered[idx] = true;
    }
  }
  for (const bool c : covered) {
    if (!c) throw std::invalid_argument("groups must partition the key indices 0..K-1");
  }

  Stopwatch watch;
  AttackReport report;
  report.strategy = "separate";
  report.seed = config.seed;
  for (const auto& group : groups) {
    report.worst_case_attempts += std::uint64_t{1} << group.size();
  }

  if (!device.splittable()) {
    report.failure = "PartitionNotIsolable";
    report.writes_consumed = device.write_ledger();
    report.wall_time_ms = watch.elapsed_ms();
    return report;
  }
  const auto cones = device.rgate_output_cones();
  std::vector<std::vector<std::size_t>> group_outputs;
  std::set<std::size_t> claimed;
  for (const auto& group : groups) {
    std::set<std::size_t> outputs;
    for (const std::size_t idx : group) {
      outputs.insert(cones[idx].begin(), cones[idx].end());
    }
    for (const std::size_t o : outputs) {
      if (!claimed.insert(o).second) {
        report.failure = "PartitionNotIsolable";
        report.writes_consumed = device.write_ledger();
        report.wall_time_ms = watch.elapsed_ms();
        return report;
      }
    }
    group_outputs.emplace_back(outputs.begin(), outputs.end());
  }

  const ProbeSet probes = build_probes(device, oracle, config);
  BitVector assembled(key_length);
  Rng group_rng(config.seed ^ 0x67726f7570736571ULL);

  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& group = groups[g];
    const std::uint64_t local_total = std::uint64_t{1} << group.size();
    SeededPermutation perm(group_rng.next(), static_cast<unsigned>(group.size()));
    bool solved = false;
    for (std::uint64_t i = 0; i < local_total; ++i) {
      if (report.total_cycles >= config.max_cycles) {
        report.failure = "MaxCyclesExceeded";
        report.writes_consumed = device.write_ledger();
        report.wall_time_ms = watch.elapsed_ms();
        return report;
      }
      const std::uint64_t local = perm.map(i);
      for (std::size_t b = 0; b < group.size(); ++b) {
        assembled.set(group[b], ((local >> b) & 1u) != 0);
      }
      try {
        device.apply_key(assembled);
      } catch (const DeviceFailed&) {
        report.key_attempts += 1;
        report.total_cycles += 1;
        report.failure = "EnduranceExhausted";
        report.writes_consumed = device.write_ledger();
        report.wall_time_ms = watch.elapsed_ms();
        return report;
      }
      report.key_attempts += 1;
      report.total_cycles += 1;
      if (device_matches_outputs(device, probes, group_outputs[g])) {
        solved = true;
        break;
      }
    }
    if (!solved) {
      report.failure = "GroupUnsolved";
      report.writes_consumed = device.write_ledger();
      report.wall_time_ms = watch.elapsed_ms();
      return report;
    }
  }

  try {
    device.apply_key(assembled);
    report.key_attempts += 1;
    report.total_cycles += 1;
    report.success = device_matches(device, probes);
    if (report.success) report.recovered_key = assembled;
    if (!report.success) report.failure = "GroupUnsolved";
  } catch (const DeviceFailed&) {
    report.key_attempts += 1;
    report.total_cycles += 1;
    report.failure = "EnduranceExhausted";
  }
  report.writes_consumed = device.write_ledger();
  report.wall_time_ms = watch.elapsed_ms();
  return report;
}

AttackReport iis_traversal(LockedNetlist& device,
                           const OracleHandle& oracle,
                           const NodeSelection& selection,
                           const AttackConfig& config) {
  if (selection.size() != device.key_length()) {
    throw std::invalid_argument("node selection width must match the device key length");
  }
  Stopwatch watch;
  AttackReport report;
  report.strategy = "iis";
  report.seed = config.seed;
  report.worst_case_attempts =
      device.key_length() < 64 ? (std::uint64_t{1} << device.key_length()) : ~std::uint64_t{0};

  const ProbeSet probes = build_probes(device, oracle, config);
  Rng stream(config.seed ^ 0x6969737374726d31ULL);
  CpuState state;
  std::optional<BitVector> last_applied;
  // The verdict cache only collapses repeated simulation work; repeated
  // snapshots still cost a write and a cycle, exactly as on hardware.
  std::unordered_map<BitVector, bool, BitVector::Hash> verdicts;

  if (device.key_length() == 0) {
    device.apply_key(BitVector(0));
    report.key_attempts = 1;
    report.total_cycles = 1;
    report.success = device_matches(device, probes);
    if (report.success) report.recovered_key = BitVector(0);
    report.writes_consumed = device.write_ledger();
    report.wall_time_ms = watch.elapsed_ms();
    return report;
  }

  while (true) {
    if (state.cycle >= config.max_cycles) {
      report.total_cycles = state.cycle;
      report.failure = "MaxCyclesExceeded";
      break;
    }
    state = step(state, random_instruction(stream));
    report.total_cycles = state.cycle;
    BitVector snapshot = extract_key(state, selection);
    if (last_applied && snapshot == *last_applied) continue;

    try {
      device.apply_key(snapshot);
    } catch (const DeviceFailed&) {
      report.key_attempts += 1;
      report.failure = "EnduranceExhausted";
      break;
    }
    report.key_attempts += 1;
    last_applied = snapshot;

    bool matched;
    const auto it = verdicts.find(snapshot);
    if (it != verdicts.end()) {
      matched = it->second;
    } else {
      matched = device_matches(device, probes);
      verdicts.emplace(snapshot, matched);
    }
    if (matched) {
      report.success = true;
      report.recovered_key = std::move(snapshot);
      break;
    }
  }
  report.writes_consumed = device.write_ledger();
  report.wall_time_ms = watch.elapsed_ms();
  return report;
}

NodeSelection curve_selection(std::uint64_t seed, std::size_t key_length) {
  // One upper-byte bit per register, staggered positions. Upper bits sit at
  // one in the steady state roughly a quarter of the time, and spreading the
  // picks across registers and positions keeps the selected bits nearly
  // independent (same-register bits and MOV-copied registers correlate).
  std::vector<NodeCoord> universe;
  universe.reserve(kRegisterCount);
  for (std::uint8_t r = 0; r < kRegisterCount; ++r) {
    const std::uint8_t bit = static_cast<std::uint8_t>(8 + (r * 5 + 3) % 8);
    universe.push_back(NodeCoord{NodeCoord::Kind::RegBit, r, bit});
  }
  if (key_length > universe.size()) {
    throw std::invalid_argument("curve selection longer than one bit per register");
  }
  Rng rng(seed ^ 0x75707065726269ULL);
  rng.shuffle(universe);
  universe.resize(key_length);
  return NodeSelection(std::move(universe));
}

BitVector curve_target(std::size_t key_length) {
  return BitVector(key_length, true);
}

namespace {

CurvePoint synthetic_trial(std::size_t key_length,
                           std::uint64_t trial_seed,
                           std::uint64_t max_cycles) {
  if (key_length == 0 || key_length > 63) {
    throw std::invalid_argument("synthetic trials support K in 1..63");
  }
  Rng rng(trial_seed);
  const std::uint64_t mask = (std::uint64_t{1} << key_length) - 1;
  std::uint64_t target_seed = trial_seed ^ 0x74617267ULL;
  const std::uint64_t target = Rng::splitmix64(target_seed) & mask;
  CurvePoint point;
  point.key_length = key_length;
  while (point.cycles < max_cycles) {
    point.cycles += 1;
    point.attempts += 1;
    if ((rng.next() & mask) == target) return point;
  }
  point.censored = true;
  return point;
}

CurvePoint toycore_trial(const NodeSelection& selection,
                         const BitVector& target,
                         std::uint64_t trial_seed,
                         std::uint64_t max_cycles) {
  Rng stream(trial_seed);
  CpuState state;
  CurvePoint point;
  point.key_length = selection.size();
  std::optional<BitVector> last;
  while (state.cycle < max_cycles) {
    state = step(state, random_instruction(stream));
    point.cycles = state.cycle;
    BitVector snapshot = extract_key(state, selection);
    if (last && snapshot == *last) continue;
    point.attempts += 1;
    const bool hit = snapshot == target;
    last = std::move(snapshot);
    if (hit) return point;
  }
  point.cycles = state.cycle;
  point.censored = true;
  return point;
}

}  // namespace

CurveResult traversal_curve(const CurveConfig& config) {
  struct Trial {
    std::size_t key_length = 0;
    std::uint64_t trial_seed = 0;
    const NodeSelection* selection = nullptr;
    const BitVector* target = nullptr;
  };
  std::vector<NodeSelection> selections;
  std::vector<BitVector> targets;
  selections.reserve(config.key_lengths.size());
  targets.reserve(config.key_lengths.size());
  std::vector<Trial> trials;
  for (const std::size_t key_length : config.key_lengths) {
    if (config.core == CurveCore::ToyCore) {
      selections.push_back(curve_selection(config.seed, key_length));
      targets.push_back(curve_target(key_length));
    }
    for (std::size_t s = 0; s < config.seeds_per_k; ++s) {
      std::uint64_t mix = config.seed;
      mix = Rng::splitmix64(mix) ^ (key_length * 0x1000193ULL);
      mix ^= s * 0x9e3779b97f4a7c15ULL;
      std::uint64_t trial_seed_state = mix;
      Trial trial;
      trial.key_length = key_length;
      trial.trial_seed = Rng::splitmix64(trial_seed_state);
      if (config.core == CurveCore::ToyCore) {
        trial.selection = &selections.back();
        trial.target = &targets.back();
      }
      trials.push_back(trial);
    }
  }

  CurveResult result;
  result.points.resize(trials.size());
  auto run_trial = [&](std::size_t index) {
    const Trial& trial = trials[index];
    CurvePoint point =
        config.core == CurveCore::Synthetic
            ? synthetic_trial(trial.key_length, trial.trial_seed, config.max_cycles)
            : toycore_trial(*trial.selection, *trial.target, trial.trial_seed,
                            config.max_cycles);
    point.seed = trial.trial_seed;
    result.points[index] = point;
  };
  const unsigned jobs =
      std::min<unsigned>(std::max(1u, config.jobs), static_cast<unsigned>(trials.size()));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < trials.size(); ++i) run_trial(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (unsigned w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < trials.size(); i = next.fetch_add(1)) {
          run_trial(i);
        }
      });
    }
    for (std::thread& worker : workers) worker.join();
  }
  result.fit = fit_log_linear(result.points);
  return result;
}

CurveFit fit_log_linear(const std::vector<CurvePoint>& points) {
  std::map<std::size_t, std::pair<double, std::size_t>> byk;
  for (const CurvePoint& p : points) {
    if (p.censored) continue;
    auto& [sum, count] = byk[p.key_length];
    sum += static_cast<double>(p.cycles);
    count += 1;
  }
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& [k, agg] : byk) {
    if (agg.second == 0) continue;
    xs.push_back(static_cast<double>(k));
    ys.push_back(std::log2(agg.first / static_cast<double>(agg.second)));
  }
  CurveFit fit;
  const std::size_t n = xs.size();
  if (n < 2) return fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0) return fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (std::size_t i = 0; i < n; ++i) {
    const double predicted = fit.slope * xs[i] + fit.intercept;
    ss_res += (ys[i] - predicted) * (ys[i] - predicted);
    ss_tot += (ys[i] - mean_y) * (ys[i] - mean_y);
  }
  fit.r_squared = ss_tot == 0 ? 1.0 : 1.0 - ss_res / ss_tot;
  return fit;
}

std::string curve_to_csv(const CurveResult& result) {
  std::ostringstream out;
  out << "K,seed,cycles,attempts,censored\n";
  for (const CurvePoint& p : result.points) {
    out << p.key_length << "," << p.seed << "," << p.cycles << "," << p.attempts << ","
        << (p.censored ? 1 : 0) << "\n";
  }
  return out.str();
}

}  // namespace allmask
