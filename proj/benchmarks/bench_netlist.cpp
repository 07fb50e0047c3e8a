#include <filesystem>
#include <fstream>
#include <sstream>

#include <benchmark/benchmark.h>

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

void scalar_evaluate(benchmark::State& state) {
  const Netlist netlist = load("c880.bench");
  Rng rng(1);
  BitVector inputs = BitVector::random(rng, netlist.input_count());
  for (auto _ : state) {
    benchmark::DoNotOptimize(netlist.evaluate(inputs));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()));
}
BENCHMARK(scalar_evaluate);

void block_evaluate_64(benchmark::State& state) {
  const Netlist netlist = load("c880.bench");
  Rng rng(1);
  std::vector<std::uint64_t> inputs(netlist.input_count());
  for (auto& word : inputs) word = rng.next();
  std::vector<std::uint64_t> outputs(netlist.output_count());
  for (auto _ : state) {
    netlist.evaluate_block(inputs, outputs);
    benchmark::DoNotOptimize(outputs.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 64);
}
BENCHMARK(block_evaluate_64);

void parse_roundtrip(benchmark::State& state) {
  const std::filesystem::path path = std::filesystem::path(ALLMASK_DATA_DIR) / "c1355.bench";
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  for (auto _ : state) {
    benchmark::DoNotOptimize(parse_bench(text, "c1355"));
  }
}
BENCHMARK(parse_roundtrip);

}  // namespace

BENCHMARK_MAIN();
