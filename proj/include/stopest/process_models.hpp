#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "stopest/error.hpp"

namespace stopest {

// ---------------------------------------------------------------------------
// Process descriptions
// ---------------------------------------------------------------------------

/// Independent symbols with P(X = 1) = p.
struct Iid {
  double p = 0.5;
};

/// Two-state chain on the bits themselves: p01 = P(1 | 0), p10 = P(0 | 1).
struct Markov2 {
  double p01 = 0.5;
  double p10 = 0.5;
};

/// Hidden chain with row-stochastic transition matrix and a deterministic
/// state -> bit emission map.
struct Hmm {
  Eigen::MatrixXd transition;
  std::vector<std::uint8_t> emission;
};

/// With probability w the whole realization is IID(p1), otherwise IID(p2).
/// Stationary but not ergodic when p1 != p2 and 0 < w < 1.
struct Mixture {
  double p1 = 0.1;
  double p2 = 0.9;
  double w = 0.5;
};

/// X_n = pattern[(phase + n) mod L] with the phase drawn uniformly.
struct Periodic {
  std::vector<std::uint8_t> pattern;
};

using ProcessSpec = std::variant<Iid, Markov2, Hmm, Mixture, Periodic>;

inline std::string variant_name(const ProcessSpec& spec) {
  static constexpr const char* names[] = {"IID", "Markov2", "HMM", "Mixture", "Periodic"};
  return names[spec.index()];
}

namespace detail {

inline bool is_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

inline void require_probability(double p, const char* what) {
  if (!is_probability(p)) throw Error(ErrorCode::InvalidSpec, std::string(what) + " must lie in [0,1]");
}

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

}  // namespace detail

using detail::binary_entropy;

inline void validate(const ProcessSpec& spec) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Iid>) {
          detail::require_probability(s.p, "IID p");
        } else if constexpr (std::is_same_v<T, Markov2>) {
          detail::require_probability(s.p01, "Markov2 p01");
          detail::require_probability(s.p10, "Markov2 p10");
          if (s.p01 + s.p10 <= 0.0) throw Error(ErrorCode::InvalidSpec, "Markov2 needs p01 + p10 > 0");
        } else if constexpr (std::is_same_v<T, Hmm>) {
          const auto m = s.transition.rows();
          if (m == 0 || s.transition.cols() != m) throw Error(ErrorCode::InvalidSpec, "HMM transition must be square and nonempty");
          if (static_cast<std::size_t>(m) != s.emission.size()) throw Error(ErrorCode::InvalidSpec, "HMM emission map needs one bit per state");
          for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index j = 0; j < m; ++j) detail::require_probability(s.transition(i, j), "HMM transition entry");
            if (std::abs(s.transition.row(i).sum() - 1.0) > 1e-12) throw Error(ErrorCode::InvalidSpec, "HMM transition rows must sum to 1");
          }
          for (auto e : s.emission) {
            if (e > 1) throw Error(ErrorCode::InvalidSpec, "HMM emission must map states to 0 or 1");
          }
        } else if constexpr (std::is_same_v<T, Mixture>) {
          detail::require_probability(s.p1, "Mixture p1");
          detail::require_probability(s.p2, "Mixture p2");
          detail::require_probability(s.w, "Mixture w");
        } else {
          if (s.pattern.empty()) throw Error(ErrorCode::InvalidSpec, "Periodic pattern must be nonempty");
          for (auto b : s.pattern) {
            if (b > 1) throw Error(ErrorCode::InvalidSpec, "Periodic pattern symbols must be 0 or 1");
          }
        }
      },
      spec);
}

/// Stationary law of the hidden chain: the unique left eigenvector of T for
/// eigenvalue 1.
inline std::vector<double> hmm_stationary(const Hmm& hmm) {
  const auto m = hmm.transition.rows();
  const Eigen::MatrixXd a = hmm.transition.transpose() - Eigen::MatrixXd::Identity(m, m);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  lu.setThreshold(1e-10);
  if (lu.dimensionOfKernel() != 1) {
    throw Error(ErrorCode::NonErgodicChain, "HMM transition matrix has no unique stationary distribution");
  }
  Eigen::VectorXd v = lu.kernel().col(0);
  v /= v.sum();
  std::vector<double> pi(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) pi[static_cast<std::size_t>(i)] = std::max(0.0, v(i));
  double total = 0.0;
  for (double x : pi) total += x;
  for (double& x : pi) x /= total;
  return pi;
}

/// Law of the initial hidden variable: state, component, or phase.
inline std::vector<double> stationary_distribution(const ProcessSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::vector<double> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Iid>) {
          return {1.0};
        } else if constexpr (std::is_same_v<T, Markov2>) {
          const double z = s.p01 + s.p10;
          return {s.p10 / z, s.p01 / z};
        } else if constexpr (std::is_same_v<T, Hmm>) {
          return hmm_stationary(s);
        } else if constexpr (std::is_same_v<T, Mixture>) {
          return {s.w, 1.0 - s.w};
        } else {
          return std::vector<double>(s.pattern.size(), 1.0 / static_cast<double>(s.pattern.size()));
        }
      },
      spec);
}

/// Whether time averages identify the law; false only for a genuine mixture.
inline bool is_ergodic(const ProcessSpec& spec) {
  if (const auto* mix = std::get_if<Mixture>(&spec)) {
    return mix->p1 == mix->p2 || mix->w == 0.0 || mix->w == 1.0;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Bernoulli(p) as a threshold on a uniform: the symbol is 1 iff U < p.
struct BernoulliThreshold {
  std::uint64_t digits = 0;  ///< floor(p * 2^64)
  bool certain = false;      ///< p == 1

  static BernoulliThreshold of(double p) {
    if (p >= 1.0) return {0, true};
    if (p <= 0.0) return {0, false};
    return {static_cast<std::uint64_t>(std::ldexp(p, 64)), false};
  }
};

struct GeneratorState {
  std::uint64_t hidden = 0;
  std::mt19937_64 rng;
  /// IID: {p, p}; Markov2: {p01, p10}; Mixture: {p1, p2}. Used by the word sampler.
  std::array<BernoulliThreshold, 2> thresholds{};
  /// HMM only: cumulative transition rows, cached at initialization.
  std::vector<std::vector<double>> cumulative;
};

namespace detail {

/// 64 independent Bernoulli draws, one per bit lane. Each rng() word holds the
/// next binary digit of 64 uniforms; a lane is decided at the first digit
/// where its uniform differs from p. About log2(64) + 2 words are consumed.
inline std::uint64_t bernoulli_word(std::mt19937_64& rng, const BernoulliThreshold& t) {
  if (t.certain) return ~std::uint64_t{0};
  if (t.digits == 0) return 0;
  std::uint64_t ones = 0;
  std::uint64_t open = ~std::uint64_t{0};
  for (int d = 63; d >= 0 && open != 0; --d) {
    const std::uint64_t u = rng();
    if ((t.digits >> d) & 1u) {
      ones |= open & ~u;
      open &= u;
    } else {
      open &= ~u;
    }
  }
  return ones;
}

}  // namespace detail

namespace detail {

inline std::uint64_t draw_index(std::span<const double> weights, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // Round-off: fall back to the last state with positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return 0;
}

}  // namespace detail

/// Seeds the stream and draws the hidden variable from its stationary law.
inline GeneratorState stationary_init(const ProcessSpec& spec, std::uint64_t seed) {
  validate(spec);
  GeneratorState state;
  state.rng.seed(seed);
  const auto pi = stationary_distribution(spec);
  state.hidden = detail::draw_index(pi, detail::uniform01(state.rng));
  if (const auto* iid = std::get_if<Iid>(&spec)) {
    state.thresholds = {BernoulliThreshold::of(iid->p), BernoulliThreshold::of(iid->p)};
  } else if (const auto* mk = std::get_if<Markov2>(&spec)) {
    state.thresholds = {BernoulliThreshold::of(mk->p01), BernoulliThreshold::of(mk->p10)};
  } else if (const auto* mix = std::get_if<Mixture>(&spec)) {
    state.thresholds = {BernoulliThreshold::of(mix->p1), BernoulliThreshold::of(mix->p2)};
  }
  if (const auto* hmm = std::get_if<Hmm>(&spec)) {
    const auto m = hmm->transition.rows();
    state.cumulative.assign(static_cast<std::size_t>(m), std::vector<double>(static_cast<std::size_t>(m)));
    for (Eigen::Index i = 0; i < m; ++i) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        acc += hmm->transition(i, j);
        state.cumulative[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = acc;
      }
    }
  }
  return state;
}

/// Emits the symbol of the current hidden variable, then advances it.
inline bool sample_next(const ProcessSpec& spec, GeneratorState& state) {
  switch (spec.index()) {
    case 0:
      return detail::uniform01(state.rng) < std::get<Iid>(spec).p;
    case 1: {
      const auto& mk = std::get<Markov2>(spec);
      const bool bit = state.hidden != 0;
      const double u = detail::uniform01(state.rng);
      state.hidden = bit ? (u < mk.p10 ? 0 : 1) : (u < mk.p01 ? 1 : 0);
      return bit;
    }
    case 2: {
      const auto& hmm = std::get<Hmm>(spec);
      const bool bit = hmm.emission[state.hidden] != 0;
      const auto& row = state.cumulative[state.hidden];
      const double u = detail::uniform01(state.rng);
      std::uint64_t next = row.size() - 1;
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (u < row[j] && hmm.transition(static_cast<Eigen::Index>(state.hidden), static_cast<Eigen::Index>(j)) > 0.0) {
          next = j;
          break;
        }
      }
      state.hidden = next;
      return bit;
    }
    case 3: {
      const auto& mix = std::get<Mixture>(spec);
      return detail::uniform01(state.rng) < (state.hidden == 0 ? mix.p1 : mix.p2);
    }
    default: {
      const auto& per = std::get<Periodic>(spec);
      const bool bit = per.pattern[state.hidden] != 0;
      state.hidden = (state.hidden + 1) % per.pattern.size();
      return bit;
    }
  }
}

/// Next 64 symbols, x_i in bit i. Same law as 64 calls of sample_next, with
/// Bernoulli draws taken 64 at a time (Markov2 draws one flip word per source
/// state and uses the lane for the state it is in).
inline std::uint64_t sample_word(const ProcessSpec& spec, GeneratorState& state) {
  switch (spec.index()) {
    case 0:
      return detail::bernoulli_word(state.rng, state.thresholds[0]);
    case 1: {
      const std::uint64_t up = detail::bernoulli_word(state.rng, state.thresholds[0]);
      const std::uint64_t down = detail::bernoulli_word(state.rng, state.thresholds[1]);
      std::uint64_t h = state.hidden;
      std::uint64_t out = 0;
      for (int j = 0; j < 64; ++j) {
        out |= h << j;
        h ^= ((h ? down : up) >> j) & 1u;
      }
      state.hidden = h;
      return out;
    }
    case 3:
      return detail::bernoulli_word(state.rng, state.thresholds[state.hidden == 0 ? 0 : 1]);
    default: {
      std::uint64_t out = 0;
      for (int j = 0; j < 64; ++j) out |= static_cast<std::uint64_t>(sample_next(spec, state) ? 1 : 0) << j;
      return out;
    }
  }
}

/// BitSource adapter over a process description; symbols come out of
/// sample_word 64 at a time.
class ProcessSource {
 public:
  ProcessSource(ProcessSpec spec, std::uint64_t seed)
      : spec_(std::move(spec)), state_(stationary_init(spec_, seed)) {}

  std::uint64_t next_word() { return sample_word(spec_, state_); }

  bool next_bit() {
    if (buffered_ == 0) {
      buffer_ = next_word();
      buffered_ = 64;
    }
    const bool b = buffer_ & 1u;
    buffer_ >>= 1;
    --buffered_;
    return b;
  }

  const ProcessSpec& spec() const noexcept { return spec_; }
  const GeneratorState& state() const noexcept { return state_; }

 private:
  ProcessSpec spec_;
  GeneratorState state_;
  std::uint64_t buffer_ = 0;
  int buffered_ = 0;
};

// ---------------------------------------------------------------------------
// Exact conditional-probability oracle
// ---------------------------------------------------------------------------

/// Sequential filter for P(X_{n+1} = 1 | X_0^n).
///
/// Before any observation the predictive is the marginal P(X_0 = 1). The
/// filter also accumulates log2 P(X_0^n), so block probabilities come for free.
class ConditionalOracle {
 public:
  explicit ConditionalOracle(ProcessSpec spec) : spec_(std::move(spec)) {
    validate(spec_);
    if (const auto* hmm = std::get_if<Hmm>(&spec_)) {
      const auto pi = hmm_stationary(*hmm);
      predicted_ = Eigen::Map<const Eigen::VectorXd>(pi.data(), static_cast<Eigen::Index>(pi.size()));
    } else if (const auto* per = std::get_if<Periodic>(&spec_)) {
      consistent_.assign(per->pattern.size(), 1);
    }
  }

  std::uint64_t observed() const noexcept { return n_; }
  double log2_likelihood() const noexcept { return log2_likelihood_; }

  /// P(next symbol = 1 | everything observed so far).
  double next_one_probability() const {
    switch (spec_.index()) {
      case 0:
        return std::get<Iid>(spec_).p;
      case 1: {
        const auto& mk = std::get<Markov2>(spec_);
        if (n_ == 0) return mk.p01 / (mk.p01 + mk.p10);
        return last_ ? 1.0 - mk.p10 : mk.p01;
      }
      case 2: {
        const auto& hmm = std::get<Hmm>(spec_);
        double one = 0.0;
        for (std::size_t s = 0; s < hmm.emission.size(); ++s) {
          if (hmm.emission[s]) one += predicted_(static_cast<Eigen::Index>(s));
        }
        return std::clamp(one, 0.0, 1.0);
      }
      case 3: {
        const auto& mix = std::get<Mixture>(spec_);
        const double post1 = mixture_posterior_first();
        return post1 * mix.p1 + (1.0 - post1) * mix.p2;
      }
      default: {
        const auto& pat = std::get<Periodic>(spec_).pattern;
        const std::size_t period = pat.size();
        std::uint64_t alive = 0, ones = 0;
        for (std::size_t phase = 0; phase < period; ++phase) {
          if (!consistent_[phase]) continue;
          ++alive;
          ones += pat[(phase + n_) % period];
        }
        return static_cast<double>(ones) / static_cast<double>(alive);
      }
    }
  }

  /// Conditions on the next symbol. Throws ImpossiblePrefix for a zero-probability observation.
  void observe(bool bit) {
    const double q = next_one_probability();
    const double pb = bit ? q : 1.0 - q;
    if (!(pb > 0.0)) throw Error(ErrorCode::ImpossiblePrefix, "observed symbol has probability zero under the model");
    log2_likelihood_ += std::log2(pb);
    switch (spec_.index()) {
      case 2: {
        const auto& hmm = std::get<Hmm>(spec_);
        Eigen::VectorXd filtered = predicted_;
        for (std::size_t s = 0; s < hmm.emission.size(); ++s) {
          if ((hmm.emission[s] != 0) != bit) filtered(static_cast<Eigen::Index>(s)) = 0.0;
        }
        filtered /= filtered.sum();
        predicted_ = hmm.transition.transpose() * filtered;
        break;
      }
      case 3:
        ones_ += bit ? 1 : 0;
        break;
      case 4: {
        const auto& pat = std::get<Periodic>(spec_).pattern;
        for (std::size_t phase = 0; phase < pat.size(); ++phase) {
          if (consistent_[phase] && (pat[(phase + n_) % pat.size()] != 0) != bit) consistent_[phase] = 0;
        }
        break;
      }
      default:
        break;
    }
    last_ = bit;
    ++n_;
  }

  /// Total mass of the predictive hidden-state law (HMM only; 1 otherwise).
  double predictive_mass() const { return spec_.index() == 2 ? predicted_.sum() : 1.0; }

 private:
  double mixture_posterior_first() const {
    const auto& mix = std::get<Mixture>(spec_);
    const auto log_weight = [&](double w, double p) {
      if (w <= 0.0) return -std::numeric_limits<double>::infinity();
      double lw = std::log(w);
      const std::uint64_t zeros = n_ - ones_;
      if (ones_ > 0) lw += p > 0.0 ? static_cast<double>(ones_) * std::log(p) : -std::numeric_limits<double>::infinity();
      if (zeros > 0) lw += p < 1.0 ? static_cast<double>(zeros) * std::log1p(-p) : -std::numeric_limits<double>::infinity();
      return lw;
    };
    const double l1 = log_weight(mix.w, mix.p1);
    const double l2 = log_weight(1.0 - mix.w, mix.p2);
    if (std::isinf(l1) && std::isinf(l2)) return mix.w;  // unreachable once observe() has accepted the prefix
    if (std::isinf(l1)) return 0.0;
    if (std::isinf(l2)) return 1.0;
    return 1.0 / (1.0 + std::exp(l2 - l1));
  }

  ProcessSpec spec_;
  std::uint64_t n_ = 0;
  std::uint64_t ones_ = 0;
  bool last_ = false;
  double log2_likelihood_ = 0.0;
  Eigen::VectorXd predicted_;
  std::vector<std::uint8_t> consistent_;
};

/// Exact P(X_{n+1} = 1 | X_0^n = prefix). For a Periodic spec whose prefix is
/// consistent with several phases this is the posterior mean over them.
inline double conditional_prob(const ProcessSpec& spec, std::span<const std::uint8_t> prefix) {
  if (prefix.empty()) throw Error(ErrorCode::InvalidArgument, "conditional_prob needs a nonempty prefix");
  ConditionalOracle oracle(spec);
  for (auto b : prefix) oracle.observe(b != 0);
  return oracle.next_one_probability();
}

/// Exact P(X_0^n = block); zero for impossible blocks.
inline double block_probability(const ProcessSpec& spec, std::span<const std::uint8_t> block) {
  ConditionalOracle oracle(spec);
  try {
    for (auto b : block) oracle.observe(b != 0);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ImpossiblePrefix) return 0.0;
    throw;
  }
  return std::exp2(oracle.log2_likelihood());
}

// ---------------------------------------------------------------------------
// Entropy rate
// ---------------------------------------------------------------------------

struct EntropyRate {
  double bits = 0.0;       ///< bits per symbol
  double std_error = 0.0;  ///< Monte Carlo error bar; zero for closed forms
};

/// Entropy rate in bits/symbol. Closed form for every variant but HMM, which
/// uses -(1/n) log2 of the forward-filter likelihood along one simulated path
/// with a batch-means error bar. The Mixture value is the average entropy of
/// its components (reporting only; the mixture is not ergodic).
inline EntropyRate analytic_entropy(const ProcessSpec& spec, std::uint64_t hmm_symbols = 1'000'000,
                                    std::uint64_t hmm_seed = 0x5eed) {
  validate(spec);
  switch (spec.index()) {
    case 0:
      return {binary_entropy(std::get<Iid>(spec).p), 0.0};
    case 1: {
      const auto& mk = std::get<Markov2>(spec);
      const auto pi = stationary_distribution(spec);
      return {pi[0] * binary_entropy(mk.p01) + pi[1] * binary_entropy(mk.p10), 0.0};
    }
    case 3: {
      const auto& mix = std::get<Mixture>(spec);
      return {mix.w * binary_entropy(mix.p1) + (1.0 - mix.w) * binary_entropy(mix.p2), 0.0};
    }
    case 4:
      return {0.0, 0.0};
    default:
      break;
  }
  constexpr std::uint64_t kBatches = 100;
  const std::uint64_t per_batch = std::max<std::uint64_t>(1, hmm_symbols / kBatches);
  GeneratorState gen = stationary_init(spec, hmm_seed);
  ConditionalOracle oracle(spec);
  std::vector<double> batch_means;
  batch_means.reserve(kBatches);
  for (std::uint64_t b = 0; b < kBatches; ++b) {
    const double before = oracle.log2_likelihood();
    for (std::uint64_t i = 0; i < per_batch; ++i) oracle.observe(sample_next(spec, gen));
    batch_means.push_back(-(oracle.log2_likelihood() - before) / static_cast<double>(per_batch));
  }
  double mean = 0.0;
  for (double v : batch_means) mean += v;
  mean /= static_cast<double>(kBatches);
  double var = 0.0;
  for (double v : batch_means) var += (v - mean) * (v - mean);
  var /= static_cast<double>(kBatches - 1);
  return {mean, std::sqrt(var / static_cast<double>(kBatches))};
}

}  // namespace stopest
