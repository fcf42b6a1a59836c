#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "stopest/bit_sequence.hpp"
#include "stopest/error.hpp"

namespace stopest {

/// Value reported for P_1, where the running average has no terms yet.
inline constexpr double kFirstRoundEstimate = 0.5;

/// Trace of the recurrence recursion after k completed rounds.
///
/// lambdas holds lambda_0 = 0 .. lambda_k, taus holds tau_1 .. tau_k, and
/// ones_sum counts the ones among x[lambda_j + 1] for j = 1 .. k-1.
struct StoppingState {
  std::uint64_t k = 0;
  std::vector<std::uint64_t> lambdas{0};
  std::vector<std::uint64_t> taus;
  std::uint64_t ones_sum = 0;
  double p_k = kFirstRoundEstimate;
  bool exhausted = false;

  std::uint64_t lambda() const noexcept { return lambdas.back(); }

  friend bool operator==(const StoppingState&, const StoppingState&) = default;
};

/// Border array (KMP failure function) over a growing prefix of a sequence.
///
/// border[i] is the length of the longest proper border of x[0..i]. Because
/// every round's pattern x[0..lambda] extends the previous one, the array is
/// extended in place rather than recomputed. The matcher automaton
/// next(q, b) is derived from the borders alongside, two entries per state.
class PrefixBorders {
 public:
  template <BitView Seq>
  void extend_to(const Seq& seq, std::uint64_t length) {
    if (length > std::numeric_limits<std::uint32_t>::max() - 1) {
      throw Error(ErrorCode::InvalidArgument, "pattern longer than 2^32 - 2 symbols");
    }
    if (border_.empty() && length > 0) {
      border_.push_back(0);
      symbol_.push_back(seq[0]);
      // State 0: only the first pattern symbol advances.
      delta_ = {seq[0] ? 0u : 1u, seq[0] ? 1u : 0u};
    }
    while (border_.size() < length) {
      const std::uint64_t i = border_.size();
      const bool b = seq[i];
      std::uint32_t q = border_[i - 1];
      while (q > 0 && symbol_[q] != b) q = border_[q - 1];
      if (symbol_[q] == b) ++q;
      border_.push_back(q);
      symbol_.push_back(b);
      // State i (i symbols matched): advance on x[i], otherwise fall back as from border(i-1).
      const std::uint32_t fb = border_[i - 1];
      const std::uint32_t on0 = b ? delta_[2 * fb] : static_cast<std::uint32_t>(i + 1);
      const std::uint32_t on1 = b ? static_cast<std::uint32_t>(i + 1) : delta_[2 * fb + 1];
      delta_.push_back(on0);
      delta_.push_back(on1);
    }
  }

  std::uint32_t operator[](std::uint64_t i) const noexcept { return border_[i]; }
  std::uint64_t size() const noexcept { return border_.size(); }

  /// Matched length after reading bit b in state q (q < size()).
  std::uint32_t next(std::uint32_t q, bool b) const noexcept { return delta_[2 * q + (b ? 1 : 0)]; }

 private:
  std::vector<std::uint32_t> border_;
  std::vector<bool> symbol_;
  std::vector<std::uint32_t> delta_;
};

namespace detail {

/// Streams x[1], x[2], ... through the matcher for x[0..pattern_last] and
/// returns the least t > 0 with x[t..t+pattern_last] == x[0..pattern_last].
template <BitSource S>
std::optional<std::uint64_t> stream_match(BitSequence<S>& seq, const PrefixBorders& borders,
                                          std::uint64_t pattern_last) {
  const auto m = static_cast<std::uint32_t>(pattern_last + 1);
  std::uint32_t q = 0;
  std::uint64_t i = 1;
  for (;;) {
    if (i >= seq.size() && !seq.ensure(i + 1)) return std::nullopt;
    const std::uint64_t end = seq.size();
    const auto words = seq.words();
    while (i < end) {
      const std::uint64_t stop = std::min(end, ((i >> 6) + 1) << 6);
      std::uint64_t word = words[i >> 6] >> (i & 63);
      for (; i < stop; ++i, word >>= 1) {
        q = borders.next(q, word & 1u);
        if (q == m) return i - pattern_last;
      }
    }
  }
}

}  // namespace detail

/// Least t > 0 such that x[t..t+lambda_prev] repeats x[0..lambda_prev]
/// (overlapping matches allowed), extending `seq` as needed. Returns nullopt
/// when the budget runs out first.
template <BitSource S>
std::optional<std::uint64_t> next_stopping_time(BitSequence<S>& seq, std::uint64_t lambda_prev) {
  if (!seq.ensure(lambda_prev + 1)) {
    throw Error(ErrorCode::InvalidArgument, "pattern x[0..lambda_prev] does not fit in the budget");
  }
  PrefixBorders borders;
  borders.extend_to(seq, lambda_prev + 1);
  return detail::stream_match(seq, borders, lambda_prev);
}

/// Drives the recursion lambda_k = tau_k + lambda_{k-1} one round at a time.
template <BitSource S>
class RecurrenceSearcher {
 public:
  explicit RecurrenceSearcher(BitSequence<S>& seq) : seq_(&seq) { seq_->ensure(1); }

  /// Completes round k+1. Returns false, and marks the state exhausted, when
  /// the budget ends the search; the incomplete round is discarded.
  bool advance() {
    if (state_.exhausted) return false;
    const std::uint64_t lambda_prev = state_.lambda();
    borders_.extend_to(*seq_, lambda_prev + 1);
    const auto tau = detail::stream_match(*seq_, borders_, lambda_prev);
    if (!tau) {
      state_.exhausted = true;
      return false;
    }
    state_.taus.push_back(*tau);
    state_.lambdas.push_back(lambda_prev + *tau);
    ++state_.k;
    if (state_.k >= 2) {
      // x[lambda_{k-1} + 1] lies inside x[0..lambda_k], so it already exists.
      state_.ones_sum += (*seq_)[lambda_prev + 1] ? 1 : 0;
      state_.p_k = static_cast<double>(state_.ones_sum) / static_cast<double>(state_.k - 1);
    }
    return true;
  }

  const StoppingState& state() const noexcept { return state_; }
  BitSequence<S>& sequence() noexcept { return *seq_; }

 private:
  BitSequence<S>* seq_;
  StoppingState state_;
  PrefixBorders borders_;
};

/// Runs up to k_max rounds on `seq`.
template <BitSource S>
StoppingState run_stopping_times(BitSequence<S>& seq, std::uint64_t k_max) {
  if (k_max < 1) throw Error(ErrorCode::InvalidArgument, "k_max must be at least 1");
  RecurrenceSearcher<S> searcher(seq);
  while (searcher.state().k < k_max && searcher.advance()) {
  }
  return searcher.state();
}

/// P_k = (1/(k-1)) * sum_{j=1}^{k-1} x[lambda_j + 1], recomputed from the bits.
template <BitView Seq>
double estimate_pk(const StoppingState& state, const Seq& seq) {
  if (state.k < 2) throw Error(ErrorCode::UndefinedForK1, "P_k needs at least two completed rounds");
  std::uint64_t ones = 0;
  for (std::uint64_t j = 1; j + 1 <= state.k; ++j) {
    const std::uint64_t idx = state.lambdas[j] + 1;
    if (idx >= seq.size()) throw Error(ErrorCode::InvalidArgument, "sequence shorter than the trace");
    ones += seq[idx] ? 1 : 0;
  }
  return static_cast<double>(ones) / static_cast<double>(state.k - 1);
}

/// Literal window-comparison reference for lambda_1 .. lambda_K. Stops at the
/// first round that cannot be resolved inside `bits`.
inline std::vector<std::uint64_t> naive_stopping_oracle(
    std::span<const std::uint8_t> bits,
    std::uint64_t k_max = std::numeric_limits<std::uint64_t>::max()) {
  std::vector<std::uint64_t> out;
  const std::uint64_t n = bits.size();
  std::uint64_t lambda = 0;
  while (out.size() < k_max && lambda < n) {
    const auto pattern = bits.subspan(0, lambda + 1);
    std::optional<std::uint64_t> tau;
    for (std::uint64_t t = 1; t + lambda < n; ++t) {
      if (std::equal(pattern.begin(), pattern.end(), bits.begin() + t)) {
        tau = t;
        break;
      }
    }
    if (!tau) break;
    lambda += *tau;
    out.push_back(lambda);
  }
  return out;
}

/// Backward-indexed view of x[0..lambda_k]: at(i) is the mirror symbol at time -i.
class MirrorView {
 public:
  MirrorView(std::vector<std::uint8_t> forward, std::uint64_t depth)
      : forward_(std::move(forward)), depth_(depth) {}

  std::uint64_t depth() const noexcept { return depth_; }

  bool at(std::uint64_t i) const {
    if (i > depth_) throw Error(ErrorCode::Underflow, "mirror index below -depth");
    return forward_[depth_ - i] != 0;
  }

  /// Mirror symbols from time -depth up to 0, i.e. x[0..lambda_k] in order.
  std::span<const std::uint8_t> window() const noexcept { return forward_; }

 private:
  std::vector<std::uint8_t> forward_;
  std::uint64_t depth_;
};

/// Builds the mirror whose last lambda_k + 1 symbols are x[0..lambda_k].
/// lambda_k must be one of the stopping times of `seq`.
template <BitView Seq>
MirrorView build_mirror(const Seq& seq, std::uint64_t lambda_k) {
  if (lambda_k >= seq.size()) throw Error(ErrorCode::InvalidLambda, "lambda_k beyond the available bits");
  std::vector<std::uint8_t> prefix(lambda_k + 1);
  for (std::uint64_t i = 0; i <= lambda_k; ++i) prefix[i] = seq[i] ? 1 : 0;
  if (lambda_k > 0) {
    auto replay = replay_sequence(prefix);
    RecurrenceSearcher<ReplaySource> searcher(replay);
    while (searcher.state().lambda() < lambda_k && searcher.advance()) {
    }
    if (searcher.state().lambda() != lambda_k) {
      throw Error(ErrorCode::InvalidLambda, "index is not a stopping time of this sequence");
    }
  }
  return MirrorView(std::move(prefix), lambda_k);
}

/// Backward stopping times hat-lambda_1 .. hat-lambda_k evaluated on the mirror:
/// hat-tau_r is the least t > 0 with Y[-L-t .. -t] == Y[-L .. 0], L = hat-lambda_{r-1}.
inline std::vector<std::uint64_t> mirror_stopping_times(const MirrorView& mirror, std::uint64_t k) {
  const auto y = mirror.window();
  const std::uint64_t depth = mirror.depth();
  std::vector<std::uint64_t> out;
  out.reserve(k);
  std::uint64_t lambda = 0;
  for (std::uint64_t r = 1; r <= k; ++r) {
    // Y[-L .. 0] occupies forward positions depth-L .. depth.
    const auto pattern = y.subspan(depth - lambda, lambda + 1);
    std::uint64_t t = 1;
    for (;; ++t) {
      if (lambda + t > depth) {
        throw Error(ErrorCode::Underflow, "mirror too shallow to resolve round " + std::to_string(r));
      }
      if (std::equal(pattern.begin(), pattern.end(), y.begin() + (depth - lambda - t))) break;
    }
    lambda += t;
    out.push_back(lambda);
  }
  return out;
}

}  // namespace stopest
