#include <benchmark/benchmark.h>

#include "allmask/keycore.hpp"
#include "allmask/rng.hpp"

namespace {

using namespace allmask;

void cpu_step_throughput(benchmark::State& state) {
  Rng rng(7);
  std::vector<Instruction> stream;
  for (int i = 0; i < 4096; ++i) {
    Instruction instr = random_instruction(rng);
    if (instr.op == Opcode::Beqz) instr.op = Opcode::Xor;
    stream.push_back(instr);
  }
  CpuState cpu;
  std::size_t cursor = 0;
  for (auto _ : state) {
    cpu = step(cpu, stream[cursor]);
    cursor = (cursor + 1) & 4095;
    benchmark::DoNotOptimize(cpu);
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()));
}
BENCHMARK(cpu_step_throughput);

void key_extraction(benchmark::State& state) {
  const NodeSelection selection = NodeSelection::sample(3, 16);
  Rng rng(7);
  CpuState cpu;
  for (int i = 0; i < 64; ++i) cpu = step(cpu, random_instruction(rng));
  for (auto _ : state) {
    benchmark::DoNotOptimize(extract_key(cpu, selection));
  }
}
BENCHMARK(key_extraction);

}  // namespace
