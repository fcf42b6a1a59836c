#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "stopest/bit_sequence.hpp"
#include "stopest/error.hpp"
#include "stopest/harness/run.hpp"
#include "stopest/process_models.hpp"
#include "stopest/recurrence.hpp"
#include "stopest/statistics.hpp"

namespace stopest::harness {

struct MirrorLawResult {
  std::uint64_t n = 0;
  double tv = 0.0;
  std::uint64_t used = 0;
  std::uint64_t dropped = 0;              ///< runs whose budget ended before lambda_k >= n
  std::vector<double> mirror_law;         ///< empirical law of the mirror block, indexed by code
  std::vector<double> exact_law;          ///< exact law of x[0..n]
};

/// Code of a block b_0 .. b_n read most-significant first.
inline std::uint64_t block_code(std::span<const std::uint8_t> block) {
  std::uint64_t code = 0;
  for (auto b : block) code = (code << 1) | (b & 1u);
  return code;
}

inline std::vector<std::uint8_t> block_from_code(std::uint64_t code, std::uint64_t length) {
  std::vector<std::uint8_t> out(length);
  for (std::uint64_t i = 0; i < length; ++i) out[length - 1 - i] = (code >> i) & 1u;
  return out;
}

/// Exact law of x[0..n] over all 2^(n+1) blocks.
inline std::vector<double> exact_block_law(const ProcessSpec& spec, std::uint64_t n) {
  const std::uint64_t cells = std::uint64_t{1} << (n + 1);
  std::vector<double> law(cells);
  for (std::uint64_t c = 0; c < cells; ++c) law[c] = block_probability(spec, block_from_code(c, n + 1));
  return law;
}

/// Empirical law of the mirror block X~[-n..0] = x[lambda_k - n .. lambda_k], with
/// k the first round reaching lambda_k >= n, against the exact law of x[0..n].
inline MirrorLawResult lemma1_tv_check(const ProcessSpec& spec, std::uint64_t n, std::uint64_t batch,
                                    std::uint64_t seed, std::uint64_t bit_budget = 10'000'000) {
  if (n > 20) throw Error(ErrorCode::InvalidArgument, "mirror law check supports n <= 20");
  const std::uint64_t cells = std::uint64_t{1} << (n + 1);
  if (batch < 5 * cells) {
    throw Error(ErrorCode::InvalidArgument, "batch too small: need at least 5 expected counts per cell");
  }
  MirrorLawResult result;
  result.n = n;
  std::vector<std::uint64_t> counts(cells, 0);
  for (std::uint64_t run = 0; run < batch; ++run) {
    BitSequence<ProcessSource> seq(ProcessSource(spec, derive_seed(seed, run)), bit_budget);
    RecurrenceSearcher<ProcessSource> searcher(seq);
    bool reached = true;
    while (searcher.state().lambda() < n) {
      if (!searcher.advance()) {
        reached = false;
        break;
      }
    }
    if (!reached) {
      ++result.dropped;
      continue;
    }
    const std::uint64_t lambda = searcher.state().lambda();
    std::uint64_t code = 0;
    for (std::uint64_t i = lambda - n; i <= lambda; ++i) code = (code << 1) | (seq[i] ? 1u : 0u);
    ++counts[code];
    ++result.used;
  }
  result.exact_law = exact_block_law(spec, n);
  result.mirror_law.resize(cells, 0.0);
  if (result.used > 0) {
    for (std::uint64_t c = 0; c < cells; ++c) {
      result.mirror_law[c] = static_cast<double>(counts[c]) / static_cast<double>(result.used);
    }
  }
  result.tv = stats::total_variation(result.mirror_law, result.exact_law);
  return result;
}

struct AzumaResult {
  std::uint64_t k = 0;
  double epsilon = 0.0;
  double tail = 0.0;          ///< fraction of reaching runs with |centered average| > epsilon
  double tail_std_error = 0.0;
  double bound = 0.0;         ///< 2 exp(-epsilon^2 (k-1) / 2)
  std::uint64_t reached = 0;
  std::uint64_t not_reached = 0;
};

inline double azuma_bound(std::uint64_t k, double epsilon) {
  return 2.0 * std::exp(-epsilon * epsilon * static_cast<double>(k - 1) / 2.0);
}

/// Tail of (1/(k-1)) sum_{j<k} (x[lambda_j + 1] - p_true_j) over runs that completed round k.
inline AzumaResult azuma_from_runs(const std::vector<RunResult>& runs, std::uint64_t k, double epsilon) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "azuma check needs k >= 2");
  AzumaResult result;
  result.k = k;
  result.epsilon = epsilon;
  result.bound = azuma_bound(k, epsilon);
  std::uint64_t exceed = 0;
  for (const auto& run : runs) {
    if (run.state.k < k) {
      ++result.not_reached;
      continue;
    }
    double centered = 0.0;
    for (std::uint64_t j = 1; j < k; ++j) {
      const auto& r = run.rounds[j - 1];
      if (!r.p_true) throw Error(ErrorCode::OracleMissing, "azuma check needs the exact oracle");
      centered += (*r.next_bit ? 1.0 : 0.0) - *r.p_true;
    }
    centered /= static_cast<double>(k - 1);
    ++result.reached;
    if (std::abs(centered) > epsilon) ++exceed;
  }
  if (result.reached > 0) {
    const double m = static_cast<double>(result.reached);
    result.tail = static_cast<double>(exceed) / m;
    result.tail_std_error = std::sqrt(result.tail * (1.0 - result.tail) / m);
  }
  return result;
}

inline AzumaResult azuma_tail_check(const ProcessSpec& spec, std::uint64_t k, double epsilon, std::uint64_t batch,
                                    std::uint64_t seed, std::uint64_t bit_budget = 10'000'000,
                                    std::uint64_t workers = 1) {
  RunOptions opts;
  opts.k_max = k;
  opts.bit_budget = bit_budget;
  return azuma_from_runs(run_batch(spec, opts, seed, batch, workers), k, epsilon);
}

/// E|B/n - p| for B ~ Binomial(n, p), by enumeration.
inline double binomial_mean_abs_deviation(std::uint64_t n, double p) {
  double s = 0.0;
  for (std::uint64_t b = 0; b <= n; ++b) {
    s += stats::binomial_pmf(n, p, b) * std::abs(static_cast<double>(b) / static_cast<double>(n) - p);
  }
  return s;
}

}  // namespace stopest::harness
