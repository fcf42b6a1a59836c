#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "stopest/error.hpp"

namespace stopest {

/// Plug-in guess for the symbol after lambda_k; ties go to 1.
constexpr bool guess_from_estimate(double p_k) noexcept { return p_k >= 0.5; }

/// Bayes-optimal guess given the true conditional probability; ties go to 1.
constexpr bool bayes_guess(double p_true) noexcept { return p_true >= 0.5; }

struct GuessRecord {
  std::uint64_t k = 0;
  std::uint64_t lambda_k = 0;
  double p_k = 0.0;
  std::optional<double> p_true;  ///< empty when no exact oracle is available
  bool guess = false;
  bool bayes = false;
  bool actual = false;

  static GuessRecord make(std::uint64_t k, std::uint64_t lambda_k, double p_k, std::optional<double> p_true,
                          bool actual) {
    GuessRecord r;
    r.k = k;
    r.lambda_k = lambda_k;
    r.p_k = p_k;
    r.p_true = p_true;
    r.guess = guess_from_estimate(p_k);
    r.bayes = p_true ? bayes_guess(*p_true) : false;
    r.actual = actual;
    return r;
  }
};

/// g_n for n = 1 .. records.size(): hit rate of the plug-in guess minus hit
/// rate of the Bayes rule over the first n records.
inline std::vector<double> accuracy_gap(const std::vector<GuessRecord>& records) {
  std::vector<double> gaps;
  gaps.reserve(records.size());
  std::int64_t diff = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i > 0 && records[i].k <= records[i - 1].k) throw Error(ErrorCode::InvalidArgument, "records must be ordered by k");
    if (!records[i].p_true) throw Error(ErrorCode::OracleMissing, "accuracy gap needs the Bayes rule");
    diff += (records[i].guess == records[i].actual) ? 1 : 0;
    diff -= (records[i].bayes == records[i].actual) ? 1 : 0;
    gaps.push_back(static_cast<double>(diff) / static_cast<double>(i + 1));
  }
  return gaps;
}

/// P(guess correct | past) - P(Bayes correct | past) for one record, from p_true.
inline double conditional_gap(const GuessRecord& r) {
  if (!r.p_true) throw Error(ErrorCode::OracleMissing, "conditional gap needs an exact oracle");
  const double p = *r.p_true;
  const auto success = [p](bool g) { return g ? p : 1.0 - p; };
  return success(r.guess) - success(r.bayes);
}

inline std::vector<double> conditional_accuracy_gap(const std::vector<GuessRecord>& records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(conditional_gap(r));
  return out;
}

}  // namespace stopest
