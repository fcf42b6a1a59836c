#pragma once

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "stopest/error.hpp"

namespace stopest::stats {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
inline double stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

/// Linear-interpolation quantile (type 7).
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw Error(ErrorCode::InvalidArgument, "quantile of an empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

inline double binomial_pmf(std::uint64_t n, double p, std::uint64_t k) {
  if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return k == n ? 1.0 : 0.0;
  return boost::math::pdf(boost::math::binomial_distribution<double>(static_cast<double>(n), p), static_cast<double>(k));
}

/// Half the L1 distance between two laws on the same finite set.
inline double total_variation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::InvalidArgument, "total variation needs laws on the same set");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

struct ChiSquareResult {
  double statistic = 0.0;
  std::uint64_t dof = 0;
  double p_value = 1.0;
};

/// Pearson goodness-of-fit test. Cells with expected count below `min_expected`
/// are pooled with their neighbour, working inward from both tails.
inline ChiSquareResult chi_square_gof(std::span<const std::uint64_t> observed, std::span<const double> probs,
                                      double min_expected = 5.0) {
  if (observed.size() != probs.size() || observed.empty()) throw Error(ErrorCode::InvalidArgument, "cell count mismatch");
  double total = 0.0;
  for (auto o : observed) total += static_cast<double>(o);
  if (total <= 0.0) throw Error(ErrorCode::InvalidArgument, "chi-square test on an empty sample");

  std::vector<double> obs, expct;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    obs.push_back(static_cast<double>(observed[i]));
    expct.push_back(probs[i] * total);
  }
  const auto pool = [&](std::size_t from, std::size_t into) {
    obs[into] += obs[from];
    expct[into] += expct[from];
    obs.erase(obs.begin() + static_cast<std::ptrdiff_t>(from));
    expct.erase(expct.begin() + static_cast<std::ptrdiff_t>(from));
  };
  while (expct.size() > 1 && expct.back() < min_expected) pool(expct.size() - 1, expct.size() - 2);
  while (expct.size() > 1 && expct.front() < min_expected) pool(0, 1);

  ChiSquareResult r;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (expct[i] > 0.0) r.statistic += (obs[i] - expct[i]) * (obs[i] - expct[i]) / expct[i];
  }
  r.dof = obs.size() - 1;
  if (r.dof == 0) return r;
  r.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(static_cast<double>(r.dof)), r.statistic));
  return r;
}

}  // namespace stopest::stats
