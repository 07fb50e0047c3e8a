#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "allmask/attack.hpp"
#include "allmask/benchgen.hpp"
#include "allmask/keycore.hpp"
#include "allmask/locking.hpp"
#include "allmask/metrics.hpp"
#include "allmask/netlist.hpp"

namespace allmask::cli {
namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << text;
}

std::string module_name(const fs::path& path) { return path.stem().string(); }

/// "a:b" or "a:b:step" inclusive.
std::vector<std::size_t> parse_range(const std::string& text) {
  std::vector<long> parts;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ':')) parts.push_back(std::stol(item));
  if (parts.size() < 2 || parts.size() > 3) {
    throw std::invalid_argument("range must be start:stop or start:stop:step");
  }
  const long start = parts[0];
  const long stop = parts[1];
  const long step = parts.size() == 3 ? parts[2] : 1;
  if (start < 0 || stop < start || step <= 0) {
    throw std::invalid_argument("range must satisfy 0 <= start <= stop, step > 0");
  }
  std::vector<std::size_t> values;
  for (long v = start; v <= stop; v += step) values.push_back(static_cast<std::size_t>(v));
  return values;
}

/// "1,2,2" group sizes over consecutive key indices.
std::vector<std::vector<std::size_t>> parse_groups(const std::string& text) {
  std::vector<std::vector<std::size_t>> groups;
  std::stringstream stream(text);
  std::string item;
  std::size_t next = 0;
  while (std::getline(stream, item, ',')) {
    const long size = std::stol(item);
    if (size <= 0) throw std::invalid_argument("group sizes must be positive");
    std::vector<std::size_t> group;
    for (long i = 0; i < size; ++i) group.push_back(next++);
    groups.push_back(std::move(group));
  }
  if (groups.empty()) throw std::invalid_argument("--groups needs at least one size");
  return groups;
}

std::vector<ReplacementType> parse_types(const std::string& text) {
  std::vector<ReplacementType> types;
  for (const char c : text) {
    switch (std::toupper(static_cast<unsigned char>(c))) {
      case 'A': types.push_back(ReplacementType::CutAnd); break;
      case 'B': types.push_back(ReplacementType::ExpandOr); break;
      case 'C': types.push_back(ReplacementType::ExpandAnd); break;
      case 'D': types.push_back(ReplacementType::CutOr); break;
      case ',':
      case ' ': break;
      default:
        throw std::invalid_argument(std::string("unknown replacement type '") + c + "'");
    }
  }
  if (types.empty()) throw std::invalid_argument("--types selected no replacement types");
  return types;
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> names;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    if (!item.empty()) names.push_back(item);
  }
  return names;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("ALLMASK_SEED")) {
    return std::stoull(env);
  }
  return 0;
}

/// Designer sidecar text: everything serialize_locked adds beyond the body.
std::string key_sidecar(const LockedNetlist& locked) {
  const std::string body = serialize_locked(locked, false);
  const std::string full = serialize_locked(locked, true);
  return full.substr(body.size());
}

struct LockArgs {
  std::string bench_path;
  std::size_t key_length = 1;
  std::optional<std::uint64_t> seed;
  std::string types = "ABCD";
  std::size_t g_width = 1;
  int depth_margin = 1;
  std::string mode = "allmask";
  std::string gates;
  std::uint32_t endurance = kDefaultEnduranceBudget;
  std::string out_path;
  std::string key_out_path;
};

int cmd_lock(const LockArgs& args, std::ostream& out) {
  const fs::path bench(args.bench_path);
  const Netlist netlist = parse_bench(read_file(bench), module_name(bench));

  LockPolicy policy;
  policy.key_length = args.key_length;
  policy.seed = resolve_seed(args.seed);
  policy.allowed_types = parse_types(args.types);
  policy.g_width = args.g_width;
  policy.depth_margin = args.depth_margin;
  policy.endurance_budget = args.endurance;
  policy.splittable = args.mode == "split";
  policy.explicit_gates = split_names(args.gates);
  if (!policy.explicit_gates.empty()) {
    policy.key_length = policy.explicit_gates.size();
  }

  const LockedNetlist locked = lock_netlist(netlist, policy);

  fs::path locked_path = args.out_path.empty()
                             ? fs::path(bench).replace_extension(".locked")
                             : fs::path(args.out_path);
  fs::path key_path = args.key_out_path.empty()
                          ? fs::path(locked_path).replace_extension(".key")
                          : fs::path(args.key_out_path);
  write_file(locked_path, serialize_locked(locked, false));
  write_file(key_path, key_sidecar(locked));

  out << "locked " << netlist.name() << ": K=" << locked.key_length() << " key="
      << locked.correct_key().to_string() << " -> " << locked_path.string() << " (+ "
      << key_path.string() << ")\n";
  return 0;
}

struct AttackArgs {
  std::string locked_path;
  std::string strategy = "direct";
  std::string key_file;
  std::string groups;
  std::string selection_path;
  double max_cycles = 1e9;
  std::size_t probes = 256;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  bool timings = false;
  bool curve = false;
  std::string k_range = "3:9";
  std::size_t seeds_per_k = 10;
  std::string core = "toy";
  unsigned jobs = 1;
};

int cmd_attack(const AttackArgs& args, std::ostream& out, std::ostream& err) {
  if (args.curve) {
    if (!args.locked_path.empty()) {
      throw std::invalid_argument("--curve runs on the cost model; drop the netlist argument");
    }
    CurveConfig config;
    config.core = args.core == "synthetic" ? CurveCore::Synthetic : CurveCore::ToyCore;
    config.key_lengths = parse_range(args.k_range);
    config.seeds_per_k = args.seeds_per_k;
    config.seed = resolve_seed(args.seed);
    config.max_cycles = static_cast<std::uint64_t>(args.max_cycles);
    config.jobs = args.jobs;
    const CurveResult result = traversal_curve(config);
    const std::string csv = curve_to_csv(result);
    if (args.out_path.empty()) {
      out << csv;
    } else {
      write_file(args.out_path, csv);
      out << "curve: " << result.points.size() << " trials -> " << args.out_path << "\n";
    }
    char fit_line[128];
    std::snprintf(fit_line, sizeof fit_line, "fit: slope=%.4f intercept=%.4f r2=%.4f\n",
                  result.fit.slope, result.fit.intercept, result.fit.r_squared);
    err << fit_line;
    return 0;
  }

  if (args.locked_path.empty()) {
    throw std::invalid_argument("attack needs a locked netlist (or --curve)");
  }
  const fs::path locked_path(args.locked_path);
  std::string text = read_file(locked_path);
  if (text.rfind("#KEY ", 0) == 0 || text.find("\n#KEY ") != std::string::npos) {
    err << "warning: " << locked_path.string()
        << " carries key material; the attack ignores it except to answer oracle queries\n";
  }
  fs::path key_path = args.key_file.empty()
                          ? fs::path(locked_path).replace_extension(".key")
                          : fs::path(args.key_file);
  if (fs::exists(key_path)) {
    text += "\n" + read_file(key_path);
  }
  const LockedNetlist designer = parse_locked(text, module_name(locked_path));
  if (!designer.has_key()) {
    throw std::runtime_error("no correct key found; the oracle needs the key sidecar (" +
                             key_path.string() + ")");
  }
  const OracleHandle oracle = OracleHandle::from_designer(designer);
  LockedNetlist device = designer.attacker_view();

  AttackConfig config;
  config.seed = resolve_seed(args.seed);
  config.max_cycles = static_cast<std::uint64_t>(args.max_cycles);
  config.random_probes = args.probes;

  AttackReport report;
  if (args.strategy == "direct" || args.strategy == "combined") {
    report = direct_traversal(device, oracle, config);
  } else if (args.strategy == "separate") {
    if (args.groups.empty()) {
      throw std::invalid_argument("--strategy separate needs --groups");
    }
    report = separate_traversal(device, oracle, parse_groups(args.groups), config);
  } else if (args.strategy == "iis") {
    if (args.selection_path.empty()) {
      throw std::invalid_argument("--strategy iis needs --sel");
    }
    const NodeSelection selection = parse_selection(read_file(args.selection_path));
    report = iis_traversal(device, oracle, selection, config);
  } else {
    throw std::invalid_argument("unknown strategy " + args.strategy);
  }

  const std::string json = report.to_json(args.timings);
  if (args.out_path.empty()) {
    out << json;
  } else {
    write_file(args.out_path, json);
    out << "attack " << args.strategy << ": success=" << (report.success ? "true" : "false")
        << " attempts=" << report.key_attempts << " cycles=" << report.total_cycles << " -> "
        << args.out_path << "\n";
  }
  return 0;
}

struct MetricsArgs {
  std::string bench_path;
  std::string k_sweep;
  std::size_t seed_count = 3;
  std::optional<std::uint64_t> seed;
  std::uint64_t key_samples = 1000;
  std::uint64_t input_samples = 1000;
  unsigned jobs = 1;
  std::string types = "ABCD";
  std::size_t g_width = 1;
  int depth_margin = 1;
  std::string out_path;
};

int cmd_metrics(const MetricsArgs& args, std::ostream& out, std::ostream& err) {
  const fs::path bench(args.bench_path);
  const Netlist netlist = parse_bench(read_file(bench), module_name(bench));

  const std::vector<std::size_t> key_lengths = parse_range(args.k_sweep);
  const std::uint64_t base_seed = resolve_seed(args.seed);
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < args.seed_count; ++i) seeds.push_back(base_seed + i);

  LockPolicy policy;
  policy.allowed_types = parse_types(args.types);
  policy.g_width = args.g_width;
  policy.depth_margin = args.depth_margin;

  SamplePolicy samples;
  samples.key_samples = args.key_samples;
  samples.input_samples = args.input_samples;
  samples.seed = base_seed;

  const std::vector<SweepCell> cells =
      metrics_sweep(netlist, key_lengths, seeds, policy, samples, args.jobs);
  for (const SweepCell& cell : cells) {
    if (!cell.metrics) {
      err << "skip " << cell.module << " K=" << cell.key_length << " seed=" << cell.seed
          << ": " << cell.skip_reason << "\n";
    }
  }
  const std::string csv = sweep_to_csv(cells);
  if (args.out_path.empty()) {
    out << csv;
  } else {
    write_file(args.out_path, csv);
    out << "metrics: " << cells.size() << " cells -> " << args.out_path << "\n";
  }
  return 0;
}

struct KeygenArgs {
  std::string target;
  std::string selection_path;
  std::uint64_t budget = 64;
  std::optional<std::uint64_t> seed;
  std::string out_path;
};

int cmd_keygen(const KeygenArgs& args, std::ostream& out, std::ostream& err) {
  const BitVector target = BitVector::from_string(args.target);
  const NodeSelection selection = parse_selection(read_file(args.selection_path));
  const std::uint64_t seed = resolve_seed(args.seed);
  const std::optional<SynthesisResult> result =
      synthesize_iis(target, selection, args.budget, seed);
  if (!result) {
    err << "no instruction sequence found within " << args.budget << " cycles\n";
    return 1;
  }
  std::ostringstream header;
  header << "# target=" << args.target << " budget=" << args.budget << " seed=" << seed
         << "\n";
  const std::string text = header.str() + serialize_iis(result->program);
  if (args.out_path.empty()) {
    out << text;
  } else {
    write_file(args.out_path, text);
    out << "keygen: " << result->program.size() << " instructions -> " << args.out_path
        << "\n";
  }
  return 0;
}

struct SimArgs {
  std::string bench_path;
  std::string vector_bits;
  std::string iis_path;
  std::string selection_path;
  bool trace = false;
};

int cmd_sim(const SimArgs& args, std::ostream& out) {
  if (!args.iis_path.empty()) {
    if (args.selection_path.empty()) {
      throw std::invalid_argument("sim --iis needs --sel to read the key nodes");
    }
    const std::vector<Instruction> program = parse_iis(read_file(args.iis_path));
    const NodeSelection selection = parse_selection(read_file(args.selection_path));
    const std::vector<TraceEntry> trace = run_iis(program, selection);
    if (args.trace) {
      for (const TraceEntry& entry : trace) {
        out << entry.cycle << " " << entry.key.to_string() << "\n";
      }
    }
    if (trace.empty()) {
      out << "key " << extract_key(CpuState{}, selection).to_string() << " after 0 cycles\n";
    } else {
      out << "key " << trace.back().key.to_string() << " after " << trace.back().cycle
          << " cycles\n";
    }
    return 0;
  }
  if (args.bench_path.empty() || args.vector_bits.empty()) {
    throw std::invalid_argument("sim needs a netlist and --vector, or --iis with --sel");
  }
  const fs::path bench(args.bench_path);
  const Netlist netlist = parse_bench(read_file(bench), module_name(bench));
  const BitVector inputs = BitVector::from_string(args.vector_bits);
  out << netlist.evaluate(inputs).to_string() << "\n";
  return 0;
}

struct SelArgs {
  std::size_t key_length = 8;
  std::optional<std::uint64_t> seed;
  std::string out_path;
};

int cmd_sel(const SelArgs& args, std::ostream& out) {
  const NodeSelection selection = NodeSelection::sample(resolve_seed(args.seed), args.key_length);
  const std::string text = serialize_selection(selection);
  if (args.out_path.empty()) {
    out << text;
  } else {
    write_file(args.out_path, text);
    out << "sel: " << selection.size() << " nodes -> " << args.out_path << "\n";
  }
  return 0;
}

struct GenArgs {
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::string out_path;
};

int cmd_gen(const GenArgs& args, std::ostream& out) {
  const std::optional<BenchProfile> profile = find_profile(args.profile);
  if (!profile) {
    std::string known;
    for (const BenchProfile& p : standard_profiles()) {
      if (!known.empty()) known += ", ";
      known += p.name;
    }
    throw std::invalid_argument("unknown profile " + args.profile + " (known: " + known + ")");
  }
  const std::string text = generate_bench(*profile, resolve_seed(args.seed));
  if (args.out_path.empty()) {
    out << text;
  } else {
    write_file(args.out_path, text);
    out << "gen: " << profile->name << " -> " << args.out_path << "\n";
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reconfigurable logic locking toolkit"};
  app.require_subcommand(1);

  LockArgs lock_args;
  auto* lock = app.add_subcommand("lock", "Replace eligible gates with keyed rGates");
  lock->add_option("bench", lock_args.bench_path, "Input .bench netlist")->required();
  lock->add_option("--k", lock_args.key_length, "Key length (rGate count)");
  auto* lock_seed = lock->add_option("--seed", "Placement seed (default $ALLMASK_SEED or 0)");
  lock->add_option("--types", lock_args.types, "Allowed replacement types, e.g. AD");
  lock->add_option("--g-width", lock_args.g_width, "Masking cone width per rGate");
  lock->add_option("--depth-margin", lock_args.depth_margin,
                   "Required slack below the critical path");
  lock->add_option("--mode", lock_args.mode, "allmask (whole-key) or split (per-core groups)")
      ->check(CLI::IsMember({"allmask", "split"}));
  lock->add_option("--gates", lock_args.gates, "Explicit gate output nets, comma separated");
  lock->add_option("--endurance", lock_args.endurance, "Write endurance budget per rGate");
  lock->add_option("--out", lock_args.out_path, "Locked netlist path (default: .locked)");
  lock->add_option("--key-out", lock_args.key_out_path, "Key sidecar path (default: .key)");

  AttackArgs attack_args;
  auto* attack = app.add_subcommand("attack", "Recover the key through the oracle interface");
  attack->add_option("locked", attack_args.locked_path, "Locked netlist (body without key)");
  attack->add_option("--strategy", attack_args.strategy,
                     "direct (alias: combined), separate or iis")
      ->check(CLI::IsMember({"direct", "combined", "separate", "iis"}));
  attack->add_option("--key-file", attack_args.key_file,
                     "Key sidecar for the oracle (default: <locked>.key)");
  attack->add_option("--groups", attack_args.groups, "Group sizes for separate, e.g. 1,2,2");
  attack->add_option("--sel", attack_args.selection_path, "Node selection JSON for iis");
  attack->add_option("--max-cycles", attack_args.max_cycles, "Cycle budget");
  attack->add_option("--probes", attack_args.probes, "Random probe vectors beyond the fixed 64");
  auto* attack_seed = attack->add_option("--seed", "Attack order seed");
  attack->add_option("--out", attack_args.out_path, "Report JSON path (default: stdout)");
  attack->add_flag("--timings", attack_args.timings, "Include wall_time_ms in the report");
  attack->add_flag("--curve", attack_args.curve, "Emit the traversal cost curve CSV instead");
  attack->add_option("--k-range", attack_args.k_range, "Curve key lengths start:stop[:step]");
  attack->add_option("--seeds-per-k", attack_args.seeds_per_k, "Curve trials per key length");
  attack->add_option("--jobs", attack_args.jobs, "Curve worker threads");
  attack->add_option("--core", attack_args.core, "Curve cost model: toy or synthetic")
      ->check(CLI::IsMember({"toy", "synthetic"}));

  MetricsArgs metrics_args;
  auto* metrics = app.add_subcommand("metrics", "Wrong-key corruption sweep");
  metrics->add_option("bench", metrics_args.bench_path, "Input .bench netlist")->required();
  metrics->add_option("--k-sweep", metrics_args.k_sweep, "Key lengths start:stop[:step]")
      ->required();
  metrics->add_option("--seeds", metrics_args.seed_count, "Locks per key length");
  auto* metrics_seed = metrics->add_option("--seed", "Base seed");
  metrics->add_option("--keys", metrics_args.key_samples, "Wrong keys sampled per cell");
  metrics->add_option("--inputs", metrics_args.input_samples, "Input vectors per cell");
  metrics->add_option("--jobs", metrics_args.jobs, "Worker threads");
  metrics->add_option("--types", metrics_args.types, "Allowed replacement types");
  metrics->add_option("--g-width", metrics_args.g_width, "Masking cone width per rGate");
  metrics->add_option("--depth-margin", metrics_args.depth_margin, "Required slack");
  metrics->add_option("--out", metrics_args.out_path, "CSV path (default: stdout)");

  KeygenArgs keygen_args;
  auto* keygen = app.add_subcommand("keygen", "Synthesize an instruction sequence for a key");
  keygen->add_option("--target", keygen_args.target, "Key bits, e.g. 00001001")->required();
  keygen->add_option("--sel", keygen_args.selection_path, "Node selection JSON")->required();
  keygen->add_option("--budget", keygen_args.budget, "Cycle budget");
  auto* keygen_seed = keygen->add_option("--seed", "Search seed");
  keygen->add_option("--out", keygen_args.out_path, "Program path (default: stdout)");

  SimArgs sim_args;
  auto* sim = app.add_subcommand("sim", "Evaluate a netlist or run an instruction sequence");
  sim->add_option("bench", sim_args.bench_path, "Input .bench netlist");
  sim->add_option("--vector", sim_args.vector_bits, "Input bits in port order");
  sim->add_option("--iis", sim_args.iis_path, "Instruction sequence to run");
  sim->add_option("--sel", sim_args.selection_path, "Node selection JSON");
  sim->add_flag("--trace", sim_args.trace, "Print the key after every cycle");

  SelArgs sel_args;
  auto* sel = app.add_subcommand("sel", "Sample a node selection over the key core");
  sel->add_option("--k", sel_args.key_length, "Selection width (key length)");
  auto* sel_seed = sel->add_option("--seed", "Sampling seed");
  sel->add_option("--out", sel_args.out_path, "Selection JSON path (default: stdout)");

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "Generate a stand-in benchmark circuit");
  gen->add_option("--profile", gen_args.profile, "Module profile, e.g. c432")->required();
  auto* gen_seed = gen->add_option("--seed", "Generator seed");
  gen->add_option("--out", gen_args.out_path, "Output path (default: stdout)");

  std::vector<const char*> argv;
  argv.push_back("allmask");
  for (const std::string& arg : args) argv.push_back(arg.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  auto seed_value = [](CLI::Option* option) -> std::optional<std::uint64_t> {
    if (option->count() == 0) return std::nullopt;
    return option->as<std::uint64_t>();
  };
  lock_args.seed = seed_value(lock_seed);
  attack_args.seed = seed_value(attack_seed);
  metrics_args.seed = seed_value(metrics_seed);
  keygen_args.seed = seed_value(keygen_seed);
  sel_args.seed = seed_value(sel_seed);
  gen_args.seed = seed_value(gen_seed);

  try {
    if (lock->parsed()) return cmd_lock(lock_args, out);
    if (attack->parsed()) return cmd_attack(attack_args, out, err);
    if (metrics->parsed()) return cmd_metrics(metrics_args, out, err);
    if (keygen->parsed()) return cmd_keygen(keygen_args, out, err);
    if (sel->parsed()) return cmd_sel(sel_args, out);
    if (sim->parsed()) return cmd_sim(sim_args, out);
    if (gen->parsed()) return cmd_gen(gen_args, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << "error: no command\n";
  return 2;
}

}  // namespace allmask::cli
