#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "allmask/locking.hpp"
#include "allmask/netlist.hpp"
#include "cli.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  CliResult result;
  result.code = allmask::cli::run(args, out, err);
  result.out = out.str();
  result.err = err.str();
  return result;
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("allmask-cli-" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void spill(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(bool(out));
  out << text;
}

std::string data_file(const std::string& name) {
  return (fs::path(ALLMASK_DATA_DIR) / name).string();
}

json load_schema(const std::string& name) {
  return json::parse(slurp(fs::path(ALLMASK_SCHEMA_DIR) / name));
}

bool type_matches(const json& value, const std::string& type) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "integer") return value.is_number_integer() || value.is_number_unsigned();
  if (type == "number") return value.is_number();
  if (type == "boolean") return value.is_boolean();
  if (type == "null") return value.is_null();
  return false;
}

/// Checks `value` against the subset of JSON Schema the repo's schemas use:
/// type (single or list), enum, required/properties/additionalProperties,
/// items, oneOf, minimum/maximum/exclusiveMinimum, pattern.
bool conforms(const json& value, const json& schema, std::string& why) {
  if (schema.contains("type")) {
    const json& type = schema.at("type");
    bool ok = false;
    if (type.is_string()) {
      ok = type_matches(value, type.get<std::string>());
    } else {
      for (const auto& t : type) ok = ok || type_matches(value, t.get<std::string>());
    }
    if (!ok) {
      why = "type mismatch at " + value.dump();
      return false;
    }
  }
  if (schema.contains("enum")) {
    bool ok = false;
    for (const auto& allowed : schema.at("enum")) ok = ok || allowed == value;
    if (!ok) {
      why = "enum mismatch at " + value.dump();
      return false;
    }
  }
  if (value.is_number()) {
    const double v = value.get<double>();
    if (schema.contains("minimum") && v < schema.at("minimum").get<double>()) {
      why = "below minimum: " + value.dump();
      return false;
    }
    if (schema.contains("maximum") && v > schema.at("maximum").get<double>()) {
      why = "above maximum: " + value.dump();
      return false;
    }
    if (schema.contains("exclusiveMinimum") &&
        v <= schema.at("exclusiveMinimum").get<double>()) {
      why = "at or below exclusiveMinimum: " + value.dump();
      return false;
    }
  }
  if (value.is_string() && schema.contains("pattern")) {
    const std::regex pattern(schema.at("pattern").get<std::string>());
    if (!std::regex_search(value.get<std::string>(), pattern)) {
      why = "pattern mismatch at " + value.dump();
      return false;
    }
  }
  if (schema.contains("oneOf")) {
    std::size_t hits = 0;
    std::string sub_why;
    for (const auto& option : schema.at("oneOf")) {
      if (conforms(value, option, sub_why)) ++hits;
    }
    if (hits != 1) {
      why = "oneOf matched " + std::to_string(hits) + " options at " + value.dump();
      return false;
    }
  }
  if (value.is_object()) {
    if (schema.contains("required")) {
      for (const auto& key : schema.at("required")) {
        if (!value.contains(key.get<std::string>())) {
          why = "missing required key " + key.get<std::string>();
          return false;
        }
      }
    }
    const json properties =
        schema.contains("properties") ? schema.at("properties") : json::object();
    for (const auto& [key, member] : value.items()) {
      if (properties.contains(key)) {
        if (!conforms(member, properties.at(key), why)) return false;
      } else if (schema.contains("additionalProperties") &&
                 schema.at("additionalProperties") == false) {
        why = "unexpected key " + key;
        return false;
      }
    }
  }
  if (value.is_array() && schema.contains("items")) {
    for (const auto& item : value) {
      if (!conforms(item, schema.at("items"), why)) return false;
    }
  }
  return true;
}

void check_schema(const std::string& text, const std::string& schema_name) {
  std::string why;
  const bool ok = conforms(json::parse(text), load_schema(schema_name), why);
  INFO("schema ", schema_name, ": ", why);
  CHECK(ok);
}

}  // namespace

TEST_CASE("lock writes a clean body plus key sidecar, byte-stably") {
  const fs::path dir = fresh_dir("lock");
  const std::string locked = (dir / "c17.locked").string();
  const std::string key = (dir / "c17.key").string();
  const CliResult r = run_cli({"lock", data_file("c17.bench"), "--k", "3", "--seed", "5",
                               "--out", locked, "--key-out", key});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("locked c17: K=3") == 0);

  const std::string body = slurp(locked);
  const std::string sidecar = slurp(key);
  CHECK(body.find("RGATE") != std::string::npos);
  CHECK(body.find("#KEY") == std::string::npos);
  CHECK(body.find("#PLACE") == std::string::npos);
  CHECK(sidecar.find("#KEY") != std::string::npos);

  // The pair reassembles into the designer view.
  const allmask::LockedNetlist designer = allmask::parse_locked(body + sidecar, "c17");
  CHECK(designer.key_length() == 3);
  REQUIRE(designer.has_key());
  const allmask::Netlist original = testutil::load_bench("c17.bench");
  for (std::uint64_t v = 0; v < 32; ++v) {
    const auto inputs = allmask::BitVector::from_u64(v, 5);
    CHECK(designer.evaluate_with_key(designer.correct_key(), inputs) ==
          original.evaluate(inputs));
  }

  // Identical invocation, identical bytes.
  const std::string locked2 = (dir / "again.locked").string();
  const std::string key2 = (dir / "again.key").string();
  REQUIRE(run_cli({"lock", data_file("c17.bench"), "--k", "3", "--seed", "5", "--out",
                   locked2, "--key-out", key2})
              .code == 0);
  CHECK(slurp(locked2) == body);
  CHECK(slurp(key2) == sidecar);
}

TEST_CASE("lock derives output paths from the input name") {
  const fs::path dir = fresh_dir("lockpaths");
  fs::copy_file(data_file("c17.bench"), dir / "c17.bench");
  const CliResult r = run_cli({"lock", (dir / "c17.bench").string(), "--k", "2"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "c17.locked"));
  CHECK(fs::exists(dir / "c17.key"));
}

TEST_CASE("explicit gate lists control placement and imply the key length") {
  const fs::path dir = fresh_dir("lockgates");
  const std::string locked = (dir / "demo5.locked").string();
  const std::string key = (dir / "demo5.key").string();
  const CliResult r = run_cli({"lock", data_file("demo5.bench"), "--k", "2", "--gates",
                               "ta,tb1,ob,tc1,oc", "--types", "A", "--mode", "split",
                               "--out", locked, "--key-out", key});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("K=5") != std::string::npos);
  const allmask::LockedNetlist designer =
      allmask::parse_locked(slurp(locked) + slurp(key), "demo5");
  CHECK(designer.key_length() == 5);
  CHECK(designer.splittable());
}

TEST_CASE("the seed falls back to ALLMASK_SEED and then to zero") {
  const fs::path dir = fresh_dir("lockenv");
  const std::string with_flag = (dir / "flag.locked").string();
  REQUIRE(run_cli({"lock", data_file("c17.bench"), "--k", "3", "--seed", "5", "--out",
                   with_flag, "--key-out", (dir / "flag.key").string()})
              .code == 0);

  setenv("ALLMASK_SEED", "5", 1);
  const std::string with_env = (dir / "env.locked").string();
  const int env_code = run_cli({"lock", data_file("c17.bench"), "--k", "3", "--out",
                                with_env, "--key-out", (dir / "env.key").string()})
                           .code;
  unsetenv("ALLMASK_SEED");
  REQUIRE(env_code == 0);
  CHECK(slurp(with_env) == slurp(with_flag));

  // The flag wins over the environment.
  setenv("ALLMASK_SEED", "99", 1);
  const std::string both = (dir / "both.locked").string();
  const int both_code = run_cli({"lock", data_file("c17.bench"), "--k", "3", "--seed", "5",
                                 "--out", both, "--key-out", (dir / "both.key").string()})
                            .code;
  unsetenv("ALLMASK_SEED");
  REQUIRE(both_code == 0);
  CHECK(slurp(both) == slurp(with_flag));
}

TEST_CASE("usage and policy failures exit with status 2") {
  const fs::path dir = fresh_dir("errors");
  CHECK(run_cli({}).code == 2);
  CHECK(run_cli({"lock"}).code == 2);
  CHECK(run_cli({"lock", (dir / "missing.bench").string(), "--k", "1"}).code == 2);
  CHECK(run_cli({"lock", data_file("c17.bench"), "--no-such-flag"}).code == 2);
  CHECK(run_cli({"attack", "--strategy", "bogus"}).code == 2);
  CHECK(run_cli({"metrics", data_file("c17.bench")}).code == 2);
  CHECK(run_cli({"gen", "--profile", "nosuch"}).code == 2);

  // Policy failure: c17 has four eligible gates.
  const CliResult r = run_cli({"lock", data_file("c17.bench"), "--k", "9999", "--out",
                               (dir / "x.locked").string(), "--key-out",
                               (dir / "x.key").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("file-level whole-key attack recovers the key it was given") {
  const fs::path dir = fresh_dir("attack");
  const std::string locked = (dir / "c17.locked").string();
  const std::string key = (dir / "c17.key").string();
  REQUIRE(run_cli({"lock", data_file("c17.bench"), "--k", "3", "--seed", "5", "--out",
                   locked, "--key-out", key})
              .code == 0);
  const std::string report_path = (dir / "report.json").string();
  const CliResult r =
      run_cli({"attack", locked, "--strategy", "direct", "--seed", "9", "--out", report_path});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("attack direct: success=true") == 0);
  CHECK(r.err.empty());

  const std::string report_text = slurp(report_path);
  check_schema(report_text, "attack_report.schema.json");
  const json report = json::parse(report_text);
  CHECK(report.at("success") == true);
  CHECK(report.at("strategy") == "direct");
  CHECK(report.at("worst_case_attempts") == 8);
  const allmask::LockedNetlist designer =
      allmask::parse_locked(slurp(locked) + slurp(key), "c17");
  CHECK(report.at("recovered_key").get<std::string>() ==
        designer.correct_key().to_string());

  // "combined" is an alias for the same single-pointer walk.
  const std::string alias_path = (dir / "alias.json").string();
  REQUIRE(run_cli({"attack", locked, "--strategy", "combined", "--seed", "9", "--out",
                   alias_path})
              .code == 0);
  CHECK(slurp(alias_path) == report_text);
}

TEST_CASE("attacks warn on embedded key material and fail without any key") {
  const fs::path dir = fresh_dir("attackkeys");
  const std::string locked = (dir / "c17.locked").string();
  const std::string key = (dir / "c17.key").string();
  REQUIRE(run_cli({"lock", data_file("c17.bench"), "--k", "2", "--seed", "1", "--out",
                   locked, "--key-out", key})
              .code == 0);

  // Key pasted straight into the netlist file: works, but warns.
  const std::string solo = (dir / "solo.locked").string();
  spill(solo, slurp(locked) + slurp(key));
  const CliResult warned = run_cli({"attack", solo, "--seed", "2"});
  REQUIRE(warned.code == 0);
  CHECK(warned.err.find("carries key material") != std::string::npos);
  CHECK(json::parse(warned.out).at("success") == true);

  // No sidecar anywhere: the oracle cannot be built.
  const std::string bare = (dir / "bare.locked").string();
  spill(bare, slurp(locked));
  const CliResult failed = run_cli({"attack", bare, "--seed", "2"});
  CHECK(failed.code == 2);
  CHECK(failed.err.find("no correct key found") != std::string::npos);
}

TEST_CASE("per-core attacks need a split file and report failures as data") {
  const fs::path dir = fresh_dir("attacksep");
  const std::string locked = (dir / "demo5.locked").string();
  const std::string key = (dir / "demo5.key").string();
  REQUIRE(run_cli({"lock", data_file("demo5.bench"), "--gates", "ta,tb1,ob,tc1,oc",
                   "--types", "A", "--mode", "split", "--out", locked, "--key-out", key})
              .code == 0);
  const CliResult r =
      run_cli({"attack", locked, "--strategy", "separate", "--groups", "1,2,2"});
  REQUIRE(r.code == 0);
  check_schema(r.out, "attack_report.schema.json");
  const json report = json::parse(r.out);
  CHECK(report.at("success") == true);
  CHECK(report.at("strategy") == "separate");
  CHECK(report.at("worst_case_attempts") == 10);

  // Whole-key file: the partition is not observable, which is a reported
  // outcome, not a crash.
  const std::string whole = (dir / "c17.locked").string();
  REQUIRE(run_cli({"lock", data_file("c17.bench"), "--k", "2", "--seed", "1", "--out",
                   whole, "--key-out", (dir / "c17.key").string()})
              .code == 0);
  const CliResult blocked =
      run_cli({"attack", whole, "--strategy", "separate", "--groups", "1,1"});
  REQUIRE(blocked.code == 0);
  check_schema(blocked.out, "attack_report.schema.json");
  const json verdict = json::parse(blocked.out);
  CHECK(verdict.at("success") == false);
  CHECK(verdict.at("failure") == "PartitionNotIsolable");
  CHECK(verdict.at("recovered_key").is_null());

  // Group shape errors are usage errors.
  CHECK(run_cli({"attack", locked, "--strategy", "separate", "--groups", "0,5"}).code == 2);
  CHECK(run_cli({"attack", locked, "--strategy", "separate"}).code == 2);
}

TEST_CASE("streamed attacks read the node selection from disk") {
  const fs::path dir = fresh_dir("attackiis");
  const std::string sel = (dir / "sel.json").string();
  const CliResult sel_run = run_cli({"sel", "--k", "4", "--seed", "9", "--out", sel});
  REQUIRE(sel_run.code == 0);
  check_schema(slurp(sel), "node_selection.schema.json");

  const std::string locked = (dir / "c17.locked").string();
  REQUIRE(run_cli({"lock", data_file("c17.bench"), "--k", "4", "--seed", "1", "--out",
                   locked, "--key-out", (dir / "c17.key").string()})
              .code == 0);
  const CliResult r = run_cli({"attack", locked, "--strategy", "iis", "--sel", sel,
                               "--seed", "3", "--max-cycles", "1000000"});
  REQUIRE(r.code == 0);
  check_schema(r.out, "attack_report.schema.json");
  const json report = json::parse(r.out);
  CHECK(report.at("success") == true);
  CHECK(report.at("strategy") == "iis");
  CHECK(report.at("total_cycles").get<std::uint64_t>() >=
        report.at("key_attempts").get<std::uint64_t>());

  CHECK(run_cli({"attack", locked, "--strategy", "iis"}).code == 2);
}

TEST_CASE("cost curves run without a netlist and repeat byte for byte") {
  const fs::path dir = fresh_dir("curve");
  const std::string csv_path = (dir / "curve.csv").string();
  const CliResult r = run_cli({"attack", "--curve", "--core", "synthetic", "--k-range",
                               "2:4", "--seeds-per-k", "3", "--seed", "1", "--out",
                               csv_path});
  REQUIRE(r.code == 0);
  CHECK(r.err.find("fit: slope=") != std::string::npos);
  const std::string csv = slurp(csv_path);
  CHECK(csv.rfind("K,seed,cycles,attempts,censored\n", 0) == 0);
  // Header plus 3 key lengths x 3 trials.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);

  const std::string again_path = (dir / "again.csv").string();
  REQUIRE(run_cli({"attack", "--curve", "--core", "synthetic", "--k-range", "2:4",
                   "--seeds-per-k", "3", "--seed", "1", "--out", again_path})
              .code == 0);
  CHECK(slurp(again_path) == csv);

  CHECK(run_cli({"attack", data_file("c17.bench"), "--curve"}).code == 2);
}

TEST_CASE("metric sweeps stream CSV and explain skipped cells") {
  const CliResult r = run_cli({"metrics", data_file("c17.bench"), "--k-sweep", "1:3",
                               "--seeds", "2", "--seed", "1", "--keys", "50", "--inputs",
                               "50"});
  REQUIRE(r.code == 0);
  CHECK(r.err.empty());
  CHECK(r.out.rfind("module,K,seed,error_rate,hd_ratio,samples,exhaustive\n", 0) == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 7);

  const CliResult again = run_cli({"metrics", data_file("c17.bench"), "--k-sweep", "1:3",
                                   "--seeds", "2", "--seed", "1", "--keys", "50",
                                   "--inputs", "50"});
  CHECK(again.out == r.out);

  const CliResult skipped = run_cli({"metrics", data_file("c17.bench"), "--k-sweep",
                                     "4:5", "--seeds", "1", "--seed", "1"});
  REQUIRE(skipped.code == 0);
  CHECK(skipped.err.find("skip c17 K=5 seed=1:") != std::string::npos);
  CHECK(std::count(skipped.out.begin(), skipped.out.end(), '\n') == 2);
}

TEST_CASE("keygen writes a replayable program with a config echo") {
  const fs::path dir = fresh_dir("keygen");
  const std::string sel = (dir / "sel.json").string();
  REQUIRE(run_cli({"sel", "--k", "4", "--seed", "9", "--out", sel}).code == 0);

  const std::string prog = (dir / "prog.iis").string();
  const CliResult r = run_cli({"keygen", "--target", "0000", "--sel", sel, "--out", prog});
  REQUIRE(r.code == 0);
  const std::string text = slurp(prog);
  CHECK(text.rfind("# target=0000 budget=64 seed=0\n", 0) == 0);

  const CliResult sim = run_cli({"sim", "--iis", prog, "--sel", sel});
  REQUIRE(sim.code == 0);
  CHECK(sim.out.find("key 0000 after") != std::string::npos);
}

TEST_CASE("keygen reports infeasible targets on stderr with status 1") {
  const fs::path dir = fresh_dir("keygenfail");
  const std::string sel = (dir / "sel.json").string();
  spill(sel, R"([{"reg": 0, "bit": 0}, {"reg": 1, "bit": 0}])");
  // Two registers cannot both change in a single cycle.
  const CliResult r = run_cli({"keygen", "--target", "11", "--sel", sel, "--budget", "1"});
  CHECK(r.code == 1);
  CHECK(r.err.find("no instruction sequence found within 1 cycles") != std::string::npos);
  CHECK(r.out.empty());
}

TEST_CASE("sim evaluates vectors and traces instruction streams") {
  const CliResult eval = run_cli({"sim", data_file("c17.bench"), "--vector", "10101"});
  REQUIRE(eval.code == 0);
  CHECK(eval.out == "11\n");

  CHECK(run_cli({"sim", data_file("c17.bench"), "--vector", "1"}).code == 2);
  CHECK(run_cli({"sim", data_file("c17.bench")}).code == 2);

  const fs::path dir = fresh_dir("simiis");
  const std::string prog = (dir / "prog.iis").string();
  const std::string sel = (dir / "sel.json").string();
  spill(prog, "LDI r1, 5\n");
  spill(sel, R"([{"reg": 1, "bit": 0}, {"reg": 1, "bit": 2}])");
  const CliResult traced = run_cli({"sim", "--iis", prog, "--sel", sel, "--trace"});
  REQUIRE(traced.code == 0);
  CHECK(traced.out == "1 11\nkey 11 after 1 cycles\n");
}

TEST_CASE("gen reproduces profile circuits from the seed") {
  const CliResult a = run_cli({"gen", "--profile", "c880", "--seed", "3"});
  REQUIRE(a.code == 0);
  const CliResult b = run_cli({"gen", "--profile", "c880", "--seed", "3"});
  CHECK(a.out == b.out);
  const allmask::Netlist netlist = allmask::parse_bench(a.out, "c880");
  CHECK(netlist.input_count() > 0);
  const CliResult c = run_cli({"gen", "--profile", "c880", "--seed", "4"});
  CHECK(c.out != a.out);
}
