#include "allmask/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "allmask/rng.hpp"

namespace allmask {

namespace {

void validate_model(const TraversalModel& model) {
  if (model.p.size() != model.n_periods.size()) {
    throw std::invalid_argument("traversal model p and n vectors differ in length");
  }
  for (const double p : model.p) {
    if (!(p > 0.0) || p > 1.0) {
      throw std::invalid_argument("traversal model probabilities must lie in (0, 1]");
    }
  }
  for (const double n : model.n_periods) {
    if (!(n >= 1.0)) {
      throw std::invalid_argument("traversal model periods must be at least 1");
    }
  }
}

}  // namespace

TraversalModel parse_traversal_model(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& err) {
    throw std::invalid_argument(std::string("traversal model is not valid JSON: ") + err.what());
  }
  TraversalModel model;
  if (!doc.is_object() || !doc.contains("p") || !doc.contains("n")) {
    throw std::invalid_argument("traversal model needs arrays p and n");
  }
  model.p = doc.at("p").get<std::vector<double>>();
  model.n_periods = doc.at("n").get<std::vector<double>>();
  validate_model(model);
  return model;
}

std::string serialize_traversal_model(const TraversalModel& model) {
  validate_model(model);
  nlohmann::json doc;
  doc["p"] = model.p;
  doc["n"] = model.n_periods;
  return doc.dump(2) + "\n";
}

ExpectedModifications expected_modifications(const TraversalModel& model) {
  validate_model(model);
  ExpectedModifications out;
  out.per_bit.reserve(model.size());
  for (const double p : model.p) {
    out.per_bit.push_back(1.0 / p);
    out.total *= 1.0 / p;
  }
  return out;
}

ExpectedCycles expected_cycles(const TraversalModel& model) {
  validate_model(model);
  ExpectedCycles out;
  if (model.size() == 0) return out;
  double min_term = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double term = (1.0 / model.p[i]) * model.n_periods[i];
    out.total *= term;
    min_term = i == 0 ? term : std::min(min_term, term);
  }
  out.lower_bound = std::pow(min_term, static_cast<double>(model.size()));
  return out;
}

namespace {

struct PairCounters {
  std::uint64_t pairs = 0;
  std::uint64_t error_pairs = 0;
  std::uint64_t diff_bits = 0;
};

/// Tallies one key against every input block. `limit` caps the lanes of
/// the final block that carry real vectors.
void tally_key(const LockedNetlist& locked,
               const BitVector& key,
               const std::vector<std::vector<std::uint64_t>>& input_blocks,
               const std::vector<std::vector<std::uint64_t>>& original_blocks,
               std::uint64_t vector_count,
               PairCounters& counters) {
  std::vector<std::uint64_t> out(locked.output_count(), 0);
  std::uint64_t seen = 0;
  for (std::size_t b = 0; b < input_blocks.size(); ++b) {
    locked.evaluate_block_with_key(key, input_blocks[b], out);
    const std::uint64_t lanes = std::min<std::uint64_t>(64, vector_count - seen);
    const std::uint64_t lane_mask =
        lanes == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << lanes) - 1);
    std::uint64_t any_diff = 0;
    for (std::size_t o = 0; o < out.size(); ++o) {
      const std::uint64_t diff = (out[o] ^ original_blocks[b][o]) & lane_mask;
      any_diff |= diff;
      counters.diff_bits += static_cast<std::uint64_t>(std::popcount(diff));
    }
    counters.error_pairs += static_cast<std::uint64_t>(std::popcount(any_diff));
    counters.pairs += lanes;
    seen += lanes;
  }
}

std::vector<std::vector<std::uint64_t>> pack_exhaustive_inputs(std::size_t n,
                                                               std::uint64_t total) {
  std::vector<std::vector<std::uint64_t>> blocks;
  const std::uint64_t block_count = (total + 63) / 64;
  for (std::uint64_t b = 0; b < block_count; ++b) {
    std::vector<std::uint64_t> words(n, 0);
    for (std::size_t lane = 0; lane < 64; ++lane) {
      const std::uint64_t v = b * 64 + lane;
      if (v >= total) break;
      for (std::size_t i = 0; i < n; ++i) {
        words[i] |= ((v >> i) & 1u) << lane;
      }
    }
    blocks.push_back(std::move(words));
  }
  return blocks;
}

std::vector<std::vector<std::uint64_t>> pack_random_inputs(std::size_t n,
                                                           std::uint64_t total,
                                                           Rng& rng) {
  std::vector<std::vector<std::uint64_t>> blocks;
  const std::uint64_t block_count = (total + 63) / 64;
  for (std::uint64_t b = 0; b < block_count; ++b) {
    std::vector<std::uint64_t> words(n, 0);
    for (std::size_t i = 0; i < n; ++i) words[i] = rng.next();
    blocks.push_back(std::move(words));
  }
  return blocks;
}

}  // namespace

ObfuscationMetrics obfuscation_metrics(const Netlist& original,
                                       const LockedNetlist& locked,
                                       const SamplePolicy& policy) {
  if (original.input_count() != locked.input_count() ||
      original.output_count() != locked.output_count()) {
    throw WidthMismatch("original and locked netlists disagree on port counts");
  }
  const BitVector& correct = locked.correct_key();
  const std::size_t key_length = locked.key_length();
  const std::size_t n = original.input_count();

  ObfuscationMetrics metrics;
  if (key_length == 0) {
    metrics.exhaustive = n <= 22;
    return metrics;
  }

  bool exhaustive = false;
  if (!policy.force_sampled && key_length <= 62 && n <= 62) {
    const long double pair_budget =
        std::pow(2.0L, static_cast<long double>(key_length)) *
        std::pow(2.0L, static_cast<long double>(n));
    exhaustive = pair_budget <= static_cast<long double>(kExhaustivePairLimit);
  }
  metrics.exhaustive = exhaustive;

  Rng rng(policy.seed ^ 0x6f62667573636174ULL);
  std::vector<std::vector<std::uint64_t>> input_blocks;
  std::uint64_t vector_count;
  if (exhaustive) {
    vector_count = std::uint64_t{1} << n;
    input_blocks = pack_exhaustive_inputs(n, vector_count);
  } else {
    vector_count = policy.input_samples;
    if (vector_count == 0) throw std::invalid_argument("input_samples must be positive");
    input_blocks = pack_random_inputs(n, vector_count, rng);
  }

  std::vector<std::vector<std::uint64_t>> original_blocks;
  original_blocks.reserve(input_blocks.size());
  for (const auto& block : input_blocks) {
    std::vector<std::uint64_t> out(original.output_count(), 0);
    original.evaluate_block(block, out);
    original_blocks.push_back(std::move(out));
  }

  PairCounters counters;
  std::uint64_t keys_used = 0;
  if (exhaustive) {
    const std::uint64_t total_keys = std::uint64_t{1} << key_length;
    const std::uint64_t correct_value = correct.to_u64();
    for (std::uint64_t k = 0; k < total_keys; ++k) {
      if (k == correct_value) continue;
      tally_key(locked, BitVector::from_u64(k, key_length), input_blocks, original_blocks,
                vector_count, counters);
      ++keys_used;
    }
  } else {
    if (policy.key_samples == 0) throw std::invalid_argument("key_samples must be positive");
    for (std::uint64_t k = 0; k < policy.key_samples; ++k) {
      BitVector key = BitVector::random(rng, key_length);
      while (key == correct) key = BitVector::random(rng, key_length);
      tally_key(locked, key, input_blocks, original_blocks, vector_count, counters);
      ++keys_used;
    }
  }

  metrics.key_samples = keys_used;
  metrics.input_samples = vector_count;
  if (counters.pairs > 0) {
    metrics.error_rate =
        static_cast<double>(counters.error_pairs) / static_cast<double>(counters.pairs);
    metrics.hd_ratio = static_cast<double>(counters.diff_bits) /
                       (static_cast<double>(counters.pairs) *
                        static_cast<double>(original.output_count()));
  }
  return metrics;
}

std::vector<SweepCell> metrics_sweep(const Netlist& netlist,
                                     const std::vector<std::size_t>& key_lengths,
                                     const std::vector<std::uint64_t>& seeds,
                                     const LockPolicy& base_policy,
                                     const SamplePolicy& sample_policy,
                                     unsigned jobs) {
  struct Task {
    std::size_t key_length;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const std::size_t k : key_lengths) {
    for (const std::uint64_t seed : seeds) tasks.push_back(Task{k, seed});
  }
  std::vector<SweepCell> cells(tasks.size());

  auto run_cell = [&](std::size_t index) {
    const Task& task = tasks[index];
    SweepCell& cell = cells[index];
    cell.module = netlist.name();
    cell.key_length = task.key_length;
    cell.seed = task.seed;
    LockPolicy policy = base_policy;
    policy.key_length = task.key_length;
    policy.seed = task.seed;
    try {
      const LockedNetlist locked = lock_netlist(netlist, policy);
      SamplePolicy samples = sample_policy;
      std::uint64_t mix_state = cell.seed;
      samples.seed = sample_policy.seed ^ Rng::splitmix64(mix_state);
      cell.metrics = obfuscation_metrics(netlist, locked, samples);
    } catch (const LockError& err) {
      cell.skip_reason = err.what();
    }
  };

  if (jobs <= 1 || tasks.size() <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    const unsigned worker_count = std::min<unsigned>(jobs, tasks.size());
    std::vector<std::thread> workers;
    workers.reserve(worker_count);
    for (unsigned w = 0; w < worker_count; ++w) {
      workers.emplace_back([&] {
        while (true) {
          const std::size_t index = next.fetch_add(1);
          if (index >= tasks.size()) break;
          run_cell(index);
        }
      });
    }
    for (std::thread& worker : workers) worker.join();
  }
  return cells;
}

namespace {

std::string format_ratio(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.9g", value);
  return buffer;
}

}  // namespace

std::string sweep_to_csv(const std::vector<SweepCell>& cells) {
  std::ostringstream out;
  out << "module,K,seed,error_rate,hd_ratio,samples,exhaustive\n";
  for (const SweepCell& cell : cells) {
    if (!cell.metrics) continue;
    const ObfuscationMetrics& m = *cell.metrics;
    out << cell.module << "," << cell.key_length << "," << cell.seed << ","
        << format_ratio(m.error_rate) << "," << format_ratio(m.hd_ratio) << ","
        << m.key_samples * m.input_samples << "," << (m.exhaustive ? 1 : 0) << "\n";
  }
  return out.str();
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / n;
  const double my = sy / n;
  double cov = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (xs[i] - mx) * (ys[i] - my);
    vx += (xs[i] - mx) * (xs[i] - mx);
    vy += (ys[i] - my) * (ys[i] - my);
  }
  if (vx == 0 || vy == 0) return 0.0;
  return cov / std::sqrt(vx * vy);
}

}  // namespace

double spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) {
    throw std::invalid_argument("spearman inputs differ in length");
  }
  if (xs.size() < 2) {
    throw std::invalid_argument("spearman needs at least two observations");
  }
  return pearson(average_ranks(xs), average_ranks(ys));
}

double spearman_pvalue_positive(const std::vector<double>& xs,
                                const std::vector<double>& ys,
                                std::uint64_t mc_rounds,
                                std::uint64_t seed) {
  const double observed = spearman_rho(xs, ys);
  const std::vector<double> rx = average_ranks(xs);
  std::vector<double> ry = average_ranks(ys);
  const std::size_t n = xs.size();
  constexpr double kTie = 1e-12;

  if (n <= 8) {
    std::vector<std::size_t> index(n);
    std::iota(index.begin(), index.end(), 0);
    std::uint64_t at_least = 0;
    std::uint64_t total = 0;
    std::vector<double> permuted(n);
    do {
      for (std::size_t i = 0; i < n; ++i) permuted[i] = ry[index[i]];
      if (pearson(rx, permuted) >= observed - kTie) ++at_least;
      ++total;
    } while (std::next_permutation(index.begin(), index.end()));
    return static_cast<double>(at_least) / static_cast<double>(total);
  }

  Rng rng(seed);
  std::uint64_t at_least = 1;
  for (std::uint64_t round = 0; round + 1 < mc_rounds; ++round) {
    rng.shuffle(ry);
    if (pearson(rx, ry) >= observed - kTie) ++at_least;
  }
  return static_cast<double>(at_least) / static_cast<double>(mc_rounds);
}

}  // namespace allmask
