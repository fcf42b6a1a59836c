#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "stopest/bit_sequence.hpp"
#include "stopest/entropy_return.hpp"
#include "stopest/guessing.hpp"
#include "stopest/process_models.hpp"
#include "stopest/recurrence.hpp"

namespace stopest::harness {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of run `index`: mix64(master + (index + 1) * golden-ratio constant).
/// Depends only on (master, index), so batches can be extended in place.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return mix64(master + (index + 1) * 0x9e3779b97f4a7c15ULL);
}

/// Everything known about round k of one realization.
struct RoundRecord {
  std::uint64_t k = 0;
  std::uint64_t tau = 0;
  std::uint64_t lambda = 0;
  std::optional<bool> next_bit;  ///< x[lambda_k + 1]; empty past the budget
  double p_k = kFirstRoundEstimate;
  std::optional<double> p_true;  ///< P(x[lambda_k + 1] = 1 | x[0..lambda_k])

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

enum class TowerStatus { Ok, EntropyZero, NonErgodic, TooFewRounds, NotRequested };

constexpr const char* to_string(TowerStatus s) noexcept {
  switch (s) {
    case TowerStatus::Ok: return "ok";
    case TowerStatus::EntropyZero: return "entropy_zero";
    case TowerStatus::NonErgodic: return "non_ergodic";
    case TowerStatus::TooFewRounds: return "too_few_rounds";
    case TowerStatus::NotRequested: return "not_requested";
  }
  return "unknown";
}

struct RunOptions {
  std::uint64_t k_max = 12;
  std::uint64_t bit_budget = 10'000'000;
  std::vector<std::uint64_t> l_values;  ///< return-time sweep; empty skips it
  std::optional<double> entropy;        ///< process entropy for the tower check
  double epsilon = 0.3;
};

struct RunResult {
  std::uint64_t run_index = 0;
  std::uint64_t seed = 0;
  StoppingState state;
  std::vector<RoundRecord> rounds;
  std::vector<ReturnTimeResult> return_times;
  TowerStatus tower_status = TowerStatus::NotRequested;
  std::optional<TowerReport> tower;
  std::uint64_t bits_generated = 0;
};

/// Guess records for every round that has both the realized next symbol and p_true.
inline std::vector<GuessRecord> guess_records(const std::vector<RoundRecord>& rounds, std::uint64_t min_k = 2) {
  std::vector<GuessRecord> out;
  for (const auto& r : rounds) {
    if (r.k < min_k || !r.next_bit || !r.p_true) continue;
    out.push_back(GuessRecord::make(r.k, r.lambda, r.p_k, r.p_true, *r.next_bit));
  }
  return out;
}

/// Per-round records for a finished trace, with the exact oracle sampled at
/// each stopping time.
template <BitSource S>
std::vector<RoundRecord> round_records(BitSequence<S>& seq, const StoppingState& state, const ProcessSpec* spec) {
  std::vector<RoundRecord> rounds;
  std::optional<ConditionalOracle> oracle;
  if (spec) oracle.emplace(*spec);
  std::uint64_t fed = 0;
  for (std::uint64_t k = 1; k <= state.k; ++k) {
    RoundRecord r;
    r.k = k;
    r.tau = state.taus[k - 1];
    r.lambda = state.lambdas[k];
    if (seq.ensure(r.lambda + 2)) r.next_bit = seq[r.lambda + 1];
    if (k >= 2) {
      // Running count of ones among x[lambda_j + 1], j < k.
      std::uint64_t ones = 0;
      for (std::uint64_t j = 1; j < k; ++j) ones += seq[state.lambdas[j] + 1] ? 1 : 0;
      r.p_k = static_cast<double>(ones) / static_cast<double>(k - 1);
    }
    if (oracle) {
      for (; fed <= r.lambda; ++fed) oracle->observe(seq[fed]);
      r.p_true = oracle->next_one_probability();
    }
    rounds.push_back(r);
  }
  return rounds;
}

/// One seeded realization through the full pipeline.
inline RunResult simulate_run(const ProcessSpec& spec, const RunOptions& opts, std::uint64_t run_index,
                              std::uint64_t seed) {
  RunResult result;
  result.run_index = run_index;
  result.seed = seed;
  BitSequence<ProcessSource> seq(ProcessSource(spec, seed), opts.bit_budget);
  result.state = run_stopping_times(seq, opts.k_max);
  result.rounds = round_records(seq, result.state, &spec);

  if (!opts.l_values.empty()) {
    seq.ensure(opts.bit_budget);
    result.return_times = entropy_from_return_times(seq, opts.l_values);
  }

  if (opts.entropy) {
    if (!is_ergodic(spec)) {
      result.tower_status = TowerStatus::NonErgodic;
    } else if (!(*opts.entropy > 0.0)) {
      result.tower_status = TowerStatus::EntropyZero;
    } else if (result.state.k < 2) {
      result.tower_status = TowerStatus::TooFewRounds;
    } else {
      result.tower = tower_check(result.state, *opts.entropy, opts.epsilon);
      result.tower_status = TowerStatus::Ok;
    }
  }
  result.bits_generated = seq.size();
  return result;
}

/// Runs indices [first, first + count) on up to `workers` threads. Output order
/// and content depend only on the inputs, never on scheduling.
inline std::vector<RunResult> run_batch(const ProcessSpec& spec, const RunOptions& opts, std::uint64_t master_seed,
                                        std::uint64_t count, std::uint64_t workers = 1, std::uint64_t first = 0) {
  std::vector<RunResult> results(count);
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto work = [&] {
    for (std::uint64_t i = next++; i < count; i = next++) {
      try {
        const std::uint64_t index = first + i;
        results[i] = simulate_run(spec, opts, index, derive_seed(master_seed, index));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  const std::uint64_t n_threads = std::max<std::uint64_t>(1, std::min(workers, count));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::uint64_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

}  // namespace stopest::harness
