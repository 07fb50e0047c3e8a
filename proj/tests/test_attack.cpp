#include <doctest.h>

#include <cmath>
#include <set>

#include "allmask/attack.hpp"
#include "allmask/locking.hpp"
#include "allmask/rng.hpp"
#include "helpers.hpp"

#include <nlohmann/json.hpp>

using namespace allmask;

namespace {

LockedNetlist lock_classic(std::size_t k, std::uint64_t seed,
                           std::uint32_t endurance = kDefaultEnduranceBudget) {
  const Netlist netlist = testutil::load_bench("c17.bench");
  LockPolicy policy;
  policy.key_length = k;
  policy.seed = seed;
  policy.endurance_budget = endurance;
  return lock_netlist(netlist, policy);
}

LockedNetlist lock_demo_split() {
  const Netlist netlist = testutil::load_bench("demo5.bench");
  LockPolicy policy;
  policy.explicit_gates = {"ta", "tb1", "ob", "tc1", "oc"};
  policy.key_length = 5;
  policy.allowed_types = {ReplacementType::CutAnd};
  policy.splittable = true;
  return lock_netlist(netlist, policy);
}

const std::vector<std::vector<std::size_t>> kDemoGroups = {{0}, {1, 2}, {3, 4}};

}  // namespace

TEST_CASE("seeded permutations are bijective and depend on the seed") {
  SeededPermutation perm(42, 6);
  std::set<std::uint64_t> seen;
  for (std::uint64_t v = 0; v < 64; ++v) {
    const std::uint64_t image = perm.map(v);
    CHECK(image < 64);
    seen.insert(image);
  }
  CHECK(seen.size() == 64);
  SeededPermutation other(43, 6);
  bool any_differs = false;
  for (std::uint64_t v = 0; v < 64; ++v) any_differs = any_differs || other.map(v) != perm.map(v);
  CHECK(any_differs);
}

TEST_CASE("whole-key traversal recovers a functionally correct key") {
  const Netlist netlist = testutil::load_bench("c17.bench");
  for (std::size_t k = 1; k <= 4; ++k) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const LockedNetlist designer = lock_classic(k, seed);
      const OracleHandle oracle = OracleHandle::from_designer(designer);
      LockedNetlist device = designer.attacker_view();
      AttackConfig config;
      config.seed = seed + 50;
      const AttackReport report = direct_traversal(device, oracle, config);
      REQUIRE(report.success);
      CHECK(report.strategy == "direct");
      CHECK(report.worst_case_attempts == (std::uint64_t{1} << k));
      CHECK(report.key_attempts <= report.worst_case_attempts);
      CHECK(report.total_cycles == report.key_attempts);
      REQUIRE(report.recovered_key.has_value());
      // Probes cover the whole 5-bit input space, so a passing key is
      // functionally equivalent to the correct one everywhere.
      for (std::uint64_t v = 0; v < 32; ++v) {
        const BitVector inputs = BitVector::from_u64(v, 5);
        CHECK(device.evaluate_with_key(*report.recovered_key, inputs) ==
              netlist.evaluate(inputs));
      }
      // One write per device per attempt.
      for (const std::uint32_t writes : report.writes_consumed) {
        CHECK(writes == report.key_attempts);
      }
    }
  }
}

TEST_CASE("attack order depends on the seed but the verdict does not") {
  const LockedNetlist designer = lock_classic(4, 9);
  const OracleHandle oracle = OracleHandle::from_designer(designer);
  std::set<std::uint64_t> attempt_counts;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    LockedNetlist device = designer.attacker_view();
    AttackConfig config;
    config.seed = seed;
    const AttackReport report = direct_traversal(device, oracle, config);
    CHECK(report.success);
    attempt_counts.insert(report.key_attempts);
  }
  CHECK(attempt_counts.size() > 1);
}

TEST_CASE("attack reports serialize deterministically") {
  const LockedNetlist designer = lock_classic(3, 5);
  const OracleHandle oracle = OracleHandle::from_designer(designer);
  AttackConfig config;
  config.seed = 7;
  LockedNetlist a = designer.attacker_view();
  LockedNetlist b = designer.attacker_view();
  const std::string ja = direct_traversal(a, oracle, config).to_json();
  const std::string jb = direct_traversal(b, oracle, config).to_json();
  CHECK(ja == jb);
  CHECK(ja.find("wall_time_ms") == std::string::npos);
  const AttackReport timed = direct_traversal(a, oracle, config);
  CHECK(timed.to_json(true).find("wall_time_ms") != std::string::npos);

  const auto parsed = nlohmann::json::parse(ja);
  CHECK(parsed.at("strategy") == "direct");
  CHECK(parsed.at("success").is_boolean());
  CHECK(parsed.at("key_attempts").is_number_unsigned());
  CHECK(parsed.at("writes_consumed").is_array());
}

TEST_CASE("per-core traversal on the split demo file costs the group sum") {
  const LockedNetlist designer = lock_demo_split();
  const OracleHandle oracle = OracleHandle::from_designer(designer);
  LockedNetlist device = designer.attacker_view();
  AttackConfig config;
  config.seed = 3;
  const AttackReport report = separate_traversal(device, oracle, kDemoGroups, config);
  REQUIRE(report.success);
  CHECK(report.strategy == "separate");
  CHECK(report.worst_case_attempts == 10);
  CHECK(*report.recovered_key == designer.correct_key());
  // The whole-key space would cost 2^5.
  LockedNetlist direct_device = designer.attacker_view();
  const AttackReport direct = direct_traversal(direct_device, oracle, config);
  CHECK(direct.worst_case_attempts == 32);
}

TEST_CASE("per-core traversal refuses whole-key files") {
  const LockedNetlist designer = lock_classic(4, 2);
  const OracleHandle oracle = OracleHandle::from_designer(designer);
  LockedNetlist device = designer.attacker_view();
  AttackConfig config;
  const AttackReport report =
      separate_traversal(device, oracle, {{0, 1}, {2, 3}}, config);
  CHECK_FALSE(report.success);
  CHECK(report.failure == "PartitionNotIsolable");
  CHECK(report.key_attempts == 0);
}

TEST_CASE("per-core traversal refuses overlapping-cone groups") {
  const Netlist netlist = testutil::load_bench("demo5.bench");
  LockPolicy policy;
  policy.explicit_gates = {"ta", "tb1", "ob", "tc1", "oc"};
  policy.key_length = 5;
  policy.allowed_types = {ReplacementType::CutAnd};
  policy.splittable = true;
  const LockedNetlist designer = lock_netlist(netlist, policy);
  const OracleHandle oracle = OracleHandle::from_designer(designer);
  LockedNetlist device = designer.attacker_view();
  AttackConfig config;
  // Group {0,1} spans the oa and ob cones while {2,3,4} also touches ob.
  const AttackReport report =
      separate_traversal(device, oracle, {{0, 1}, {2, 3, 4}}, config);
  CHECK_FALSE(report.success);
  CHECK(report.failure == "PartitionNotIsolable");
}

TEST_CASE("per-core traversal validates group shape") {
  const LockedNetlist designer = lock_demo_split();
  const OracleHandle oracle = OracleHandle::from_designer(designer);
  LockedNetlist device = designer.attacker_view();
  AttackConfig config;
  CHECK_THROWS_AS(separate_traversal(device, oracle, {{0}, {1, 2}}, config),
                  std::invalid_argument);
  CHECK_THROWS_AS(separate_traversal(device, oracle, {{0, 0}, {1, 2}, {3, 4}}, config),
                  std::invalid_argument);
  CHECK_THROWS_AS(separate_traversal(device, oracle, {{0}, {1, 2}, {3, 5}}, config),
                  std::invalid_argument);
}

TEST_CASE("streamed traversal finds the key and counts every cycle") {
  const Netlist netlist = testutil::load_bench("c17.bench");
  const LockedNetlist designer = lock_classic(4, 1);
  const OracleHandle oracle = OracleHandle::from_designer(designer);
  LockedNetlist device = designer.attacker_view();
  const NodeSelection selection = NodeSelection::sample(9, 4);
  AttackConfig config;
  config.seed = 3;
  config.max_cycles = 1000000;
  const AttackReport report = iis_traversal(device, oracle, selection, config);
  REQUIRE(report.success);
  CHECK(report.strategy == "iis");
  CHECK(report.key_attempts <= report.total_cycles);
  REQUIRE(report.recovered_key.has_value());
  for (std::uint64_t v = 0; v < 32; ++v) {
    const BitVector inputs = BitVector::from_u64(v, 5);
    CHECK(device.evaluate_with_key(*report.recovered_key, inputs) ==
          netlist.evaluate(inputs));
  }

  // Device writes happen only on materialized snapshots.
  for (const std::uint32_t writes : report.writes_consumed) {
    CHECK(writes == report.key_attempts);
  }

  // The streamed walk burns more cycles than direct enumeration needs
  // attempts; repeating the run is byte-stable.
  LockedNetlist direct_device = designer.attacker_view();
  const AttackReport direct = direct_traversal(direct_device, oracle, config);
  CHECK(report.total_cycles >= direct.key_attempts);
  LockedNetlist again_device = designer.attacker_view();
  const AttackReport again = iis_traversal(again_device, oracle, selection, config);
  CHECK(again.to_json() == report.to_json());
}

TEST_CASE("streamed traversal reports a budget miss honestly") {
  const LockedNetlist designer = lock_classic(4, 1);
  const OracleHandle oracle = OracleHandle::from_designer(designer);
  LockedNetlist device = designer.attacker_view();
  AttackConfig config;
  config.seed = 3;
  config.max_cycles = 2;
  const AttackReport report =
      iis_traversal(device, oracle, NodeSelection::sample(9, 4), config);
  CHECK_FALSE(report.success);
  CHECK(report.failure == "MaxCyclesExceeded");
  CHECK(report.total_cycles == 2);
}

TEST_CASE("endurance exhaustion fails the attack at the exact write") {
  // Measure how many attempts the seeded order needs, then rerun with a
  // budget one short of that: the run must die on the very write that
  // exceeds it.
  const LockedNetlist probe_lock = lock_classic(4, 6);
  const OracleHandle probe_oracle = OracleHandle::from_designer(probe_lock);
  AttackConfig config;
  std::uint64_t needed = 0;
  for (config.seed = 40;; ++config.seed) {
    LockedNetlist device = probe_lock.attacker_view();
    const AttackReport report = direct_traversal(device, probe_oracle, config);
    REQUIRE(report.success);
    if (report.key_attempts >= 2) {
      needed = report.key_attempts;
      break;
    }
  }
  const std::uint32_t budget = static_cast<std::uint32_t>(needed - 1);
  const LockedNetlist designer = lock_classic(4, 6, budget);
  const OracleHandle oracle = OracleHandle::from_designer(designer);
  LockedNetlist device = designer.attacker_view();
  const AttackReport report = direct_traversal(device, oracle, config);
  REQUIRE_FALSE(report.success);
  CHECK(report.failure == "EnduranceExhausted");
  CHECK(report.key_attempts == std::uint64_t{budget} + 1);
  CHECK_FALSE(report.recovered_key.has_value());
  for (const std::uint32_t writes : report.writes_consumed) {
    CHECK(writes == budget + 1);
  }
  CHECK(device.any_device_failed());
  CHECK_THROWS_AS(device.evaluate_configured(BitVector(5)), DeviceFailed);
}

TEST_CASE("synthetic curve points follow the coin-flip model") {
  CurveConfig config;
  config.core = CurveCore::Synthetic;
  config.key_lengths = {4};
  config.seeds_per_k = 400;
  config.seed = 12;
  config.max_cycles = 100000;
  const CurveResult result = traversal_curve(config);
  REQUIRE(result.points.size() == 400);
  double mean = 0;
  for (const CurvePoint& p : result.points) {
    CHECK_FALSE(p.censored);
    CHECK(p.attempts == p.cycles);
    mean += double(p.cycles);
  }
  mean /= 400;
  // Geometric with p = 2^-4: mean 16, sd 15.5; 400 trials give se ~0.78.
  CHECK(mean > 16 - 4 * 0.78);
  CHECK(mean < 16 + 4 * 0.78);
}

TEST_CASE("curve CSV is canonical and thread-count independent") {
  CurveConfig config;
  config.core = CurveCore::ToyCore;
  config.key_lengths = {3, 4};
  config.seeds_per_k = 4;
  config.seed = 5;
  config.max_cycles = 100000;
  config.jobs = 1;
  const CurveResult serial = traversal_curve(config);
  config.jobs = 4;
  const CurveResult parallel = traversal_curve(config);
  CHECK(curve_to_csv(serial) == curve_to_csv(parallel));
  CHECK(curve_to_csv(serial).rfind("K,seed,cycles,attempts,censored\n", 0) == 0);
}

TEST_CASE("log-linear fit recovers an exact exponential relation") {
  std::vector<CurvePoint> points;
  for (std::size_t k = 2; k <= 6; ++k) {
    CurvePoint p;
    p.key_length = k;
    p.cycles = std::uint64_t(8) << k;  // log2 = k + 3
    points.push_back(p);
  }
  const CurveFit fit = fit_log_linear(points);
  CHECK(fit.slope == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(fit.intercept == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("designer-biased selections nest across key lengths") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const NodeSelection small = curve_selection(seed, 3);
    const NodeSelection large = curve_selection(seed, 9);
    for (std::size_t i = 0; i < small.size(); ++i) {
      CHECK(small.nodes()[i] == large.nodes()[i]);
    }
    std::set<std::uint8_t> regs;
    for (const NodeCoord& node : large.nodes()) {
      CHECK(node.kind == NodeCoord::Kind::RegBit);
      CHECK(node.bit >= 8);
      regs.insert(node.reg);
    }
    // One bit per register keeps the observed bits nearly independent.
    CHECK(regs.size() == large.size());
  }
  CHECK(curve_target(5) == BitVector(5, true));
}

TEST_CASE("the oracle answers with the correct configuration") {
  const LockedNetlist designer = lock_classic(3, 8);
  const Netlist netlist = testutil::load_bench("c17.bench");
  const OracleHandle oracle = OracleHandle::from_designer(designer);
  for (std::uint64_t v = 0; v < 32; ++v) {
    const BitVector inputs = BitVector::from_u64(v, 5);
    CHECK(oracle.query(inputs) == netlist.evaluate(inputs));
  }
  const LockedNetlist stripped = designer.attacker_view();
  CHECK_THROWS_AS(OracleHandle::from_designer(stripped), KeyNotStripped);
}
