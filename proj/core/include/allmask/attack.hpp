#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "allmask/bitvec.hpp"
#include "allmask/keycore.hpp"
#include "allmask/locking.hpp"

namespace allmask {

/// Black-box access to a correctly configured chip. Attack code receives
/// only this handle and an attacker-view netlist; the key never crosses the
/// query interface.
class OracleHandle {
public:
  /// Builds the oracle from the designer's locked netlist (key required).
  static OracleHandle from_designer(const LockedNetlist& locked);

  std::size_t input_count() const { return locked_.input_count(); }
  std::size_t output_count() const { return locked_.output_count(); }

  BitVector query(const BitVector& inputs) const;
  void query_block(std::span<const std::uint64_t> input_words,
                   std::span<std::uint64_t> output_words) const;

private:
  OracleHandle(LockedNetlist locked, BitVector key);

  LockedNetlist locked_;
  BitVector key_;
};

struct AttackConfig {
  std::uint64_t seed = 0;
  std::uint64_t max_cycles = 1000000000ULL;
  /// Random probe vectors beyond the fixed 64 when the input space is too
  /// wide to enumerate.
  std::size_t random_probes = 256;
};

struct AttackReport {
  std::string strategy;
  std::uint64_t total_cycles = 0;
  std::uint64_t key_attempts = 0;
  std::uint64_t worst_case_attempts = 0;
  std::vector<std::uint32_t> writes_consumed;
  bool success = false;
  std::optional<BitVector> recovered_key;
  double wall_time_ms = 0.0;
  /// Empty on success; otherwise EnduranceExhausted, MaxCyclesExceeded,
  /// PartitionNotIsolable or GroupUnsolved.
  std::string failure;
  std::uint64_t seed = 0;

  /// Canonical JSON. wall_time_ms is volatile across runs and only
  /// included when include_timing is set.
  std::string to_json(bool include_timing = false) const;
};

/// Tries every key in a seeded order until the chip is indistinguishable
/// from the oracle on the probe set. One cycle per candidate.
AttackReport direct_traversal(LockedNetlist& device,
                              const OracleHandle& oracle,
                              const AttackConfig& config);

/// Per-group traversal for splittable (per-core) files: each group of key
/// indices is solved against its own output cone, costing the sum of the
/// group key spaces instead of their product. Refuses files locked in
/// whole-key mode (PartitionNotIsolable) and groups whose output cones
/// overlap.
AttackReport separate_traversal(LockedNetlist& device,
                                const OracleHandle& oracle,
                                const std::vector<std::vector<std::size_t>>& groups,
                                const AttackConfig& config);

/// Streams random instructions through the key core, snapshotting the
/// selected nodes into the device whenever the snapshot changes and testing
/// against the oracle. Cycles count every instruction; writes only
/// materialized snapshots.
AttackReport iis_traversal(LockedNetlist& device,
                           const OracleHandle& oracle,
                           const NodeSelection& selection,
                           const AttackConfig& config);

/// Key-state hitting cost model behind the attack-cost curves.
///   Synthetic: each cycle draws a fresh uniform snapshot; the baseline
///              with exact per-cycle match probability 2^-K.
///   ToyCore:   snapshots come from random execution of the key core over
///              a designer-biased node selection (upper register bytes,
///              all-ones target).
enum class CurveCore { Synthetic, ToyCore };

struct CurveConfig {
  CurveCore core = CurveCore::ToyCore;
  std::vector<std::size_t> key_lengths;
  std::size_t seeds_per_k = 10;
  std::uint64_t seed = 0;
  std::uint64_t max_cycles = 10000000ULL;
  /// Worker threads; trial order and results do not depend on it.
  unsigned jobs = 1;
};

struct CurvePoint {
  std::size_t key_length = 0;
  std::uint64_t seed = 0;
  std::uint64_t cycles = 0;
  std::uint64_t attempts = 0;
  bool censored = false;
};

struct CurveFit {
  /// Least squares of log2(mean cycles) against K over uncensored points.
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

struct CurveResult {
  std::vector<CurvePoint> points;
  CurveFit fit;
};

CurveResult traversal_curve(const CurveConfig& config);

/// CSV with header K,seed,cycles,attempts,censored.
std::string curve_to_csv(const CurveResult& result);

CurveFit fit_log_linear(const std::vector<CurvePoint>& points);

/// Node selection used by the curve's toy-core trials: a seeded nested
/// prefix over the upper-byte register bits.
NodeSelection curve_selection(std::uint64_t seed, std::size_t key_length);

/// The all-ones target those trials hunt for; reachable by construction
/// (load-shift-merge sequences set any upper byte).
BitVector curve_target(std::size_t key_length);

}  // namespace allmask
