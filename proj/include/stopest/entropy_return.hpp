#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "stopest/bit_sequence.hpp"
#include "stopest/error.hpp"
#include "stopest/recurrence.hpp"

namespace stopest {

/// One return-time observation: the last l+1 symbols first recur r steps back.
struct ReturnTimeRecord {
  std::uint64_t l = 0;
  std::uint64_t r = 0;
  double h_hat = 0.0;  ///< log2(r) / (l + 1)

  friend bool operator==(const ReturnTimeRecord&, const ReturnTimeRecord&) = default;
};

/// R(l) measured backward from the last index n of `bits`: the least j >= l+1
/// with bits[n-l-j .. n-j] == bits[n-l .. n]. The lower bound on j rules out
/// overlap with the pattern. Returns nullopt (NoMatchInWindow) when the data
/// holds no such j.
template <BitView Bits>
std::optional<ReturnTimeRecord> return_time(const Bits& bits, std::uint64_t l) {
  if (l < 1) throw Error(ErrorCode::InvalidArgument, "return_time needs l >= 1");
  const std::uint64_t size = bits.size();
  if (size < 2 * l + 2) return std::nullopt;
  const std::uint64_t n = size - 1;
  for (std::uint64_t j = l + 1; j + l <= n; ++j) {
    bool match = true;
    // Compare back to front; the newest symbols are the likeliest to differ first.
    for (std::uint64_t i = 0; i <= l; ++i) {
      if (bits[n - i] != bits[n - j - i]) {
        match = false;
        break;
      }
    }
    if (match) {
      return ReturnTimeRecord{l, j, std::log2(static_cast<double>(j)) / static_cast<double>(l + 1)};
    }
  }
  return std::nullopt;
}

/// Per-l sweep result; `record` is empty when R(l) is not resolvable.
struct ReturnTimeResult {
  std::uint64_t l = 0;
  std::optional<ReturnTimeRecord> record;
};

template <BitView Bits>
std::vector<ReturnTimeResult> entropy_from_return_times(const Bits& bits, const std::vector<std::uint64_t>& l_values) {
  std::vector<ReturnTimeResult> out;
  out.reserve(l_values.size());
  for (std::size_t i = 0; i < l_values.size(); ++i) {
    if (i > 0 && l_values[i] <= l_values[i - 1]) throw Error(ErrorCode::InvalidArgument, "l values must be increasing");
    out.push_back({l_values[i], return_time(bits, l_values[i])});
  }
  return out;
}

/// Mean h_hat over the resolved entries; nullopt when none resolved.
inline std::optional<double> mean_entropy_estimate(const std::vector<ReturnTimeResult>& sweep) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : sweep) {
    if (r.record) {
      sum += r.record->h_hat;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

/// Growth-rate diagnostics for one stopping-time trace.
///
/// ratios[i] belongs to round k = i + 1 and equals log2(tau_{k+1}) / (lambda_k + 1).
/// k_star is the empirical stand-in for the realization-dependent threshold:
/// the first k from which tau_{k+1} > lambda_k held through the last completed
/// round. It is empty when the last completed round violates the inequality.
struct TowerReport {
  double epsilon = 0.0;
  double c = 0.0;
  std::optional<std::uint64_t> k_star;
  std::vector<double> ratios;
  bool holds = false;
};

/// Checks tau_{k+1} > c^{lambda_k}, c = 2^(H - epsilon), over the completed rounds.
inline TowerReport tower_check(const StoppingState& state, double entropy, double epsilon) {
  if (!(entropy > 0.0)) throw Error(ErrorCode::EntropyZero, "growth bound needs positive entropy");
  if (!(epsilon > 0.0 && epsilon < entropy)) throw Error(ErrorCode::InvalidArgument, "epsilon must lie in (0, H)");
  if (state.k < 2) throw Error(ErrorCode::InvalidArgument, "tower check needs at least two completed rounds");

  TowerReport report;
  report.epsilon = epsilon;
  report.c = std::exp2(entropy - epsilon);
  const std::uint64_t last = state.k - 1;  // largest k with tau_{k+1} known
  for (std::uint64_t k = 1; k <= last; ++k) {
    const double tau = static_cast<double>(state.taus[k]);
    report.ratios.push_back(std::log2(tau) / static_cast<double>(state.lambdas[k] + 1));
  }
  for (std::uint64_t k = last + 1; k-- > 1;) {
    if (state.taus[k] > state.lambdas[k]) {
      report.k_star = k;
    } else {
      break;
    }
  }
  if (report.k_star) {
    report.holds = true;
    const double slope = entropy - epsilon;
    for (std::uint64_t k = *report.k_star; k <= last; ++k) {
      // tau > c^lambda  <=>  log2(tau) > (H - eps) * lambda
      if (!(std::log2(static_cast<double>(state.taus[k])) > slope * static_cast<double>(state.lambdas[k]))) {
        report.holds = false;
        break;
      }
    }
  }
  return report;
}

/// Iterated exponentials t_0 = start, t_{i+1} = c^{t_i}, i = 0 .. height.
/// Overflowing values are reported as +infinity.
inline std::vector<long double> tower_values(long double c, long double start, std::uint64_t height) {
  std::vector<long double> out{start};
  for (std::uint64_t i = 0; i < height; ++i) {
    const long double prev = out.back();
    out.push_back(std::isinf(prev) ? std::numeric_limits<long double>::infinity() : std::pow(c, prev));
  }
  return out;
}

}  // namespace stopest
