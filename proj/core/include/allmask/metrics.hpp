#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "allmask/locking.hpp"
#include "allmask/netlist.hpp"

namespace allmask {

/// Per-bit traversal model: bit i matches with probability p_i per round
/// and is sampled over N_i observation periods.
struct TraversalModel {
  std::vector<double> p;
  std::vector<double> n_periods;

  std::size_t size() const { return p.size(); }
};

TraversalModel parse_traversal_model(std::string_view json_text);
std::string serialize_traversal_model(const TraversalModel& model);

struct ExpectedModifications {
  /// E(mu_i) = 1 / p_i per bit.
  std::vector<double> per_bit;
  /// E(M) = product of the per-bit expectations; 1 for an empty model.
  double total = 1.0;
};

ExpectedModifications expected_modifications(const TraversalModel& model);

struct ExpectedCycles {
  /// T_m = product of E(mu_i) * N_i.
  double total = 1.0;
  /// (min_i E(mu_i) * N_i) ^ m; T_m is never below this.
  double lower_bound = 1.0;
};

ExpectedCycles expected_cycles(const TraversalModel& model);

struct SamplePolicy {
  std::uint64_t key_samples = 1000;
  std::uint64_t input_samples = 1000;
  std::uint64_t seed = 0;
  /// Keep Monte Carlo sampling even when full enumeration would fit.
  bool force_sampled = false;
};

/// Keys x inputs budget at or below which the wrong-key sweep switches to
/// full enumeration.
constexpr std::uint64_t kExhaustivePairLimit = std::uint64_t{1} << 22;

struct ObfuscationMetrics {
  /// Fraction of (wrong key, input) pairs with at least one wrong output.
  double error_rate = 0.0;
  /// Mean output Hamming distance over the same pairs, divided by the
  /// output count.
  double hd_ratio = 0.0;
  std::uint64_t key_samples = 0;
  std::uint64_t input_samples = 0;
  bool exhaustive = false;
};

/// Compares the locked netlist under wrong keys against the original.
/// Requires the designer view; the correct key is excluded from the key
/// population (KeyNotStripped when absent). Exhaustive when
/// 2^K * 2^inputs <= kExhaustivePairLimit and the policy does not force
/// sampling, Monte Carlo per `policy` otherwise.
ObfuscationMetrics obfuscation_metrics(const Netlist& original,
                                       const LockedNetlist& locked,
                                       const SamplePolicy& policy);

struct SweepCell {
  std::string module;
  std::size_t key_length = 0;
  std::uint64_t seed = 0;
  std::optional<ObfuscationMetrics> metrics;
  std::string skip_reason;
};

/// Locks the module once per (K, seed) and measures it. Cells whose lock
/// fails carry a skip_reason instead of metrics. `jobs` > 1 distributes
/// cells across threads; results are identical regardless of job count.
std::vector<SweepCell> metrics_sweep(const Netlist& netlist,
                                     const std::vector<std::size_t>& key_lengths,
                                     const std::vector<std::uint64_t>& seeds,
                                     const LockPolicy& base_policy,
                                     const SamplePolicy& sample_policy,
                                     unsigned jobs = 1);

/// CSV with header module,K,seed,error_rate,hd_ratio,samples,exhaustive;
/// one row per measured cell, skipped cells omitted.
std::string sweep_to_csv(const std::vector<SweepCell>& cells);

/// Spearman rank correlation with average ranks on ties.
double spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys);

/// One-sided p-value for positive association under the permutation null:
/// exact over all n! permutations for n <= 8, seeded Monte Carlo otherwise.
double spearman_pvalue_positive(const std::vector<double>& xs,
                                const std::vector<double>& ys,
                                std::uint64_t mc_rounds = 100000,
                                std::uint64_t seed = 0x73706561726d616eULL);

}  // namespace allmask
