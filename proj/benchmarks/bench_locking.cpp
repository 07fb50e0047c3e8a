#include <filesystem>
#include <fstream>
#include <sstream>

#include <benchmark/benchmark.h>

#include "allmask/locking.hpp"
#include "allmask/netlist.hpp"
#include "allmask/rng.hpp"

namespace {

using namespace allmask;

Netlist load(const std::string& name) {
  const std::filesystem::path path = std::filesystem::path(ALLMASK_DATA_DIR) / name;
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_bench(buffer.str(), name.substr(0, name.find('.')));
}

void lock_c880(benchmark::State& state) {
  const Netlist netlist = load("c880.bench");
  LockPolicy policy;
  policy.key_length = static_cast<std::size_t>(state.range(0));
  policy.seed = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(lock_netlist(netlist, policy));
  }
}
BENCHMARK(lock_c880)->Arg(8)->Arg(32)->Arg(64);

void keyed_block_evaluate(benchmark::State& state) {
  const Netlist netlist = load("c880.bench");
  LockPolicy policy;
  policy.key_length = 32;
  policy.seed = 1;
  const LockedNetlist locked = lock_netlist(netlist, policy);
  const BitVector key = locked.correct_key();
  Rng rng(2);
  std::vector<std::uint64_t> inputs(locked.input_count());
  for (auto& word : inputs) word = rng.next();
  std::vector<std::uint64_t> outputs(locked.output_count());
  for (auto _ : state) {
    locked.evaluate_block_with_key(key, inputs, outputs);
    benchmark::DoNotOptimize(outputs.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 64);
}
BENCHMARK(keyed_block_evaluate);

}  // namespace
