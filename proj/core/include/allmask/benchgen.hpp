#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "allmask/netlist.hpp"

namespace allmask {

/// Interface profile of a benchmark module: port and gate counts.
struct BenchProfile {
  std::string name;
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::size_t gates = 0;
};

/// The classic combinational benchmark profiles this toolkit targets.
/// c17 ships as the genuine netlist; the larger modules ship as seeded
/// synthetic stand-ins generated against these published interface
/// profiles (see data/ headers and the README).
const std::vector<BenchProfile>& standard_profiles();

std::optional<BenchProfile> find_profile(std::string_view name);

/// Deterministic random DAG matching the profile: every gate feeds some
/// primary output, names are sequential numerics, and the text starts with
/// a provenance header. Round-trips through parse_bench.
std::string generate_bench(const BenchProfile& profile, std::uint64_t seed);

}  // namespace allmask
