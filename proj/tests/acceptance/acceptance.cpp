// Acceptance suite: one PASS/FAIL line per criterion, exit status = number of failures.
//
//   acceptance [path/to/stopest_cli]
//
// Without the CLI path, criterion 9 runs the library pipeline twice instead.

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "stopest/bit_sequence.hpp"
#include "stopest/entropy_return.hpp"
#include "stopest/guessing.hpp"
#include "stopest/harness/checks.hpp"
#include "stopest/harness/config.hpp"
#include "stopest/harness/experiment.hpp"
#include "stopest/harness/run.hpp"
#include "stopest/process_models.hpp"
#include "stopest/recurrence.hpp"
#include "stopest/statistics.hpp"

using namespace stopest;
using namespace stopest::harness;
namespace fs = std::filesystem;

namespace {

// Tolerances and batch sizes.
constexpr std::uint64_t kOracleSequences = 10'000;  // per variant
constexpr std::uint64_t kOracleLength = 1'000;
constexpr std::uint64_t kConsistencyRuns = 500;
constexpr std::uint64_t kConsistencyBudget = 1'000'000;
constexpr std::uint64_t kMinRunsAtK = 100;
constexpr double kEnvelopeSlack = 0.5;  // median may exceed the MAD envelope by 50%
constexpr std::uint64_t kBinomialRuns = 2'000;
constexpr double kChiSquareAlpha = 0.01;
constexpr std::uint64_t kMirrorRuns = 5'000;
constexpr double kMirrorTv = 0.05;
constexpr std::uint64_t kEntropyBits = 1'000'000;
constexpr double kEntropyLo = 0.75, kEntropyHi = 1.25;
constexpr double kPeriodicEntropyMax = 0.2;
constexpr std::uint64_t kGrowthRuns = 200;
constexpr double kGrowthEpsilon = 0.3;
constexpr double kGrowthFraction = 0.9;
constexpr double kRatioLo = 0.5, kRatioHi = 1.5;
constexpr std::uint64_t kGapRuns = 1'000;
constexpr double kGapBand = 0.05;
constexpr double kCondGapFloor = -0.1;
constexpr std::uint64_t kAzumaRuns = 2'000;
constexpr std::uint64_t kAzumaK = 6;
constexpr std::uint64_t kDefaultBudget = 10'000'000;

const Markov2 kMarkov{0.2, 0.3};

std::uint64_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail, double seconds) {
  if (!pass) ++failures;
  fmt::print("{} {} {}: {} ({:.1f}s)\n", pass ? "PASS" : "FAIL", id, name, detail, seconds);
  std::fflush(stdout);
}

template <class F>
void criterion(int id, const std::string& name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = false;
  try {
    pass = body(detail);
  } catch (const std::exception& e) {
    detail += fmt::format(" exception: {}", e.what());
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(id, name, pass, detail, s);
}

std::vector<RunResult> batch(const ProcessSpec& spec, std::uint64_t runs, std::uint64_t k_max, std::uint64_t budget,
                             std::uint64_t seed) {
  RunOptions opts;
  opts.k_max = k_max;
  opts.bit_budget = budget;
  return run_batch(spec, opts, seed, runs, workers());
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[e.path().filename().string()] = ss.str();
  }
  return files;
}

// Largest k completed by at least kMinRunsAtK runs.
std::uint64_t last_well_populated_k(const std::vector<RunResult>& runs) {
  std::uint64_t best = 0;
  for (std::uint64_t k = 1;; ++k) {
    const auto n = std::count_if(runs.begin(), runs.end(), [k](const RunResult& r) { return r.state.k >= k; });
    if (static_cast<std::uint64_t>(n) < kMinRunsAtK) return best;
    best = k;
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";

  criterion(1, "worked trace", [](std::string& d) {
    const auto bits = parse_bits("1,0,1,1,0,1,1,1,0,1,0,1,1,0,1");
    auto seq = replay_sequence(bits);
    RecurrenceSearcher<ReplaySource> searcher(seq);
    std::vector<double> p;
    while (searcher.advance()) p.push_back(searcher.state().p_k);
    const auto& st = searcher.state();
    const auto mirror = mirror_stopping_times(build_mirror(seq, st.lambda()), st.k);
    d = fmt::format("tau={} lambda={} P_2={} P_3={} mirror={}", st.taus, st.lambdas, p.size() > 1 ? p[1] : -1,
                    p.size() > 2 ? p[2] : -1, mirror);
    return st.taus == std::vector<std::uint64_t>{2, 3, 9} && st.lambdas == std::vector<std::uint64_t>{0, 2, 5, 14} &&
           p.size() == 3 && p[1] == 1.0 && p[2] == 1.0 && mirror == std::vector<std::uint64_t>{2, 5, 14};
  });

  criterion(2, "oracle equivalence", [](std::string& d) {
    Hmm hmm;
    hmm.transition.resize(3, 3);
    hmm.transition << 0.8, 0.15, 0.05, 0.1, 0.7, 0.2, 0.3, 0.3, 0.4;
    hmm.emission = {0, 1, 1};
    const std::vector<ProcessSpec> variants{Iid{0.3}, kMarkov, hmm, Mixture{0.1, 0.9, 0.5}, Periodic{{0, 1, 1, 0, 1}}};
    std::uint64_t mismatches = 0, total = 0;
    for (std::size_t v = 0; v < variants.size(); ++v) {
      for (std::uint64_t i = 0; i < kOracleSequences; ++i) {
        BitSequence<ProcessSource> gen(ProcessSource(variants[v], derive_seed(1000 + v, i)), kOracleLength);
        gen.ensure(kOracleLength);
        const auto bits = gen.to_bytes();
        auto seq = replay_sequence(bits);
        const auto st = run_stopping_times(seq, kOracleLength);
        const std::vector<std::uint64_t> fast(st.lambdas.begin() + 1, st.lambdas.end());
        if (fast != naive_stopping_oracle(bits)) ++mismatches;
        ++total;
      }
    }
    d = fmt::format("{} sequences of length {} over {} variants, {} mismatches", total, kOracleLength, variants.size(),
                    mismatches);
    return mismatches == 0;
  });

  criterion(3, "estimator consistency", [](std::string& d) {
    bool pass = true;
    // Markov part: median |P_k - p_true| by k.
    const auto runs = batch(kMarkov, kConsistencyRuns, 12, kConsistencyBudget, 31);
    const auto k_top = last_well_populated_k(runs);
    std::vector<double> medians;
    double envelope = 0.0;
    for (std::uint64_t k = 3; k <= k_top; ++k) {
      std::vector<double> err;
      double mad = 0.0;
      for (const auto& r : runs) {
        if (r.state.k < k) continue;
        const auto& rec = r.rounds[k - 1];
        err.push_back(std::abs(rec.p_k - *rec.p_true));
        mad += binomial_mean_abs_deviation(k - 1, *rec.p_true);
      }
      medians.push_back(stats::median(err));
      envelope = mad / static_cast<double>(err.size());
    }
    bool decreasing = medians.size() >= 2;
    for (std::size_t i = 1; i < medians.size(); ++i) decreasing = decreasing && medians[i] < medians[i - 1];
    const bool within = !medians.empty() && medians.back() <= (1.0 + kEnvelopeSlack) * envelope;
    d += fmt::format("Markov2 k=3..{} medians={:.4f} strictly_decreasing={} envelope={:.4f} within={};", k_top,
                     fmt::join(medians, ","), decreasing, envelope, within);
    pass = pass && decreasing && within;

    // IID part: (k-1) P_k at k = 5 against Binomial(4, 0.3).
    const auto iid = batch(Iid{0.3}, kBinomialRuns, 5, kDefaultBudget, 32);
    std::vector<std::uint64_t> counts(5, 0);
    std::uint64_t reached = 0;
    for (const auto& r : iid) {
      if (r.state.k < 5) continue;
      ++reached;
      ++counts[static_cast<std::size_t>(std::lround(4 * r.rounds[4].p_k))];
    }
    std::vector<double> probs;
    for (std::uint64_t b = 0; b <= 4; ++b) probs.push_back(stats::binomial_pmf(4, 0.3, b));
    const auto chi = stats::chi_square_gof(counts, probs);

    // Diagnostic only: at k = 3 nearly every run completes, so selection by completion is mild.
    std::vector<std::uint64_t> counts3(3, 0);
    std::uint64_t reached3 = 0;
    for (const auto& r : iid) {
      if (r.state.k < 3) continue;
      ++reached3;
      ++counts3[static_cast<std::size_t>(std::lround(2 * r.rounds[2].p_k))];
    }
    std::vector<double> probs3;
    for (std::uint64_t b = 0; b <= 2; ++b) probs3.push_back(stats::binomial_pmf(2, 0.3, b));
    const auto chi3 = stats::chi_square_gof(counts3, probs3);
    fmt::print("note: IID(0.3) k=3 reached {}/{} counts={} p={:.4f} (diagnostic, not scored)\n", reached3,
               kBinomialRuns, counts3, chi3.p_value);
    d += fmt::format(" IID(0.3) reached k=5: {}/{} counts={} chi2={:.3f} dof={} p={:.4f}", reached, kBinomialRuns,
                     counts, chi.statistic, chi.dof, chi.p_value);
    return pass && reached > 0 && chi.p_value > kChiSquareAlpha;
  });

  criterion(4, "mirror block law", [](std::string& d) {
    const auto a = lemma1_tv_check(Iid{0.5}, 3, kMirrorRuns, 41);
    const auto b = lemma1_tv_check(kMarkov, 2, kMirrorRuns, 42);
    d = fmt::format("IID(0.5) n=3 TV={:.4f} used={}; Markov2 n=2 TV={:.4f} used={}", a.tv, a.used, b.tv, b.used);
    return a.tv <= kMirrorTv && b.tv <= kMirrorTv && a.used > 0 && b.used > 0;
  });

  criterion(5, "return-time entropy", [](std::string& d) {
    std::vector<std::uint64_t> ls;
    for (std::uint64_t l = 8; l <= 16; ++l) ls.push_back(l);
    BitSequence<ProcessSource> seq(ProcessSource(Iid{0.5}, derive_seed(51, 0)), kEntropyBits);
    seq.ensure(kEntropyBits);
    const auto mean = mean_entropy_estimate(entropy_from_return_times(seq, ls));
    const bool iid_ok = mean && *mean >= kEntropyLo && *mean <= kEntropyHi;

    BitSequence<ProcessSource> per(ProcessSource(Periodic{{0, 1}}, derive_seed(52, 0)), kEntropyBits);
    per.ensure(kEntropyBits);
    std::vector<std::uint64_t> high;
    for (std::uint64_t l = 10; l <= 16; ++l) high.push_back(l);
    double worst = 0.0;
    std::vector<std::string> cells;
    for (const auto& r : entropy_from_return_times(per, high)) {
      const double h = r.record ? r.record->h_hat : 1.0;
      worst = std::max(worst, h);
      cells.push_back(fmt::format("{}:{:.3f}", r.l, h));
    }
    const bool per_ok = worst <= kPeriodicEntropyMax;
    d = fmt::format("IID(0.5) mean h_hat over l=8..16: {:.4f}; Periodic(01) h_hat {} max={:.3f} (limit {})",
                    mean.value_or(NAN), fmt::join(cells, " "), worst, kPeriodicEntropyMax);
    return iid_ok && per_ok;
  });

  criterion(6, "tower growth", [](std::string& d) {
    RunOptions opts;
    opts.k_max = 12;
    opts.bit_budget = kDefaultBudget;
    opts.entropy = analytic_entropy(Iid{0.5}).bits;
    opts.epsilon = kGrowthEpsilon;
    const auto runs = run_batch(Iid{0.5}, opts, 61, kGrowthRuns, workers());
    std::uint64_t eligible = 0, good = 0;
    for (const auto& r : runs) {
      if (r.state.k < 4 || !r.tower) continue;
      ++eligible;
      const auto k = r.state.k - 1;  // last k with tau_{k+1} known
      const bool grows = r.state.taus[k] > r.state.lambdas[k];
      const double ratio = r.tower->ratios.back();
      if (grows && ratio >= kRatioLo && ratio <= kRatioHi) ++good;
    }
    const double frac = eligible ? static_cast<double>(good) / static_cast<double>(eligible) : 0.0;

    opts.entropy = analytic_entropy(Periodic{{0, 1}}).bits;
    const auto per = simulate_run(Periodic{{0, 1}}, opts, 0, 62);
    bool refuses = false;
    try {
      tower_check(per.state, *opts.entropy, kGrowthEpsilon);
    } catch (const Error& e) {
      refuses = e.code() == ErrorCode::EntropyZero;
    }
    d = fmt::format("IID(0.5) {}/{} eligible runs satisfy both ({:.3f}); Periodic status={} tower_check={}", good,
                    eligible, frac, to_string(per.tower_status), refuses ? "EntropyZero" : "report");
    return eligible > 0 && frac >= kGrowthFraction && per.tower_status == TowerStatus::EntropyZero && refuses;
  });

  // Shared Markov2 batch: the first kGapRuns runs feed criterion 7, all of them criterion 8.
  std::vector<RunResult> markov;
  const auto t_markov = std::chrono::steady_clock::now();
  try {
    markov = batch(kMarkov, kAzumaRuns, 12, kDefaultBudget, 71);
  } catch (const std::exception& e) {
    fmt::print("shared Markov2 batch failed: {}\n", e.what());
  }
  const double markov_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_markov).count();
  fmt::print("note: shared Markov2 batch of {} runs took {:.1f}s\n", markov.size(), markov_seconds);

  criterion(7, "guessing versus Bayes", [&](std::string& d) {
    const std::vector<RunResult> runs(markov.begin(), markov.begin() + std::min<std::size_t>(kGapRuns, markov.size()));
    std::uint64_t records = 0, violations = 0;
    std::vector<double> finals;
    for (const auto& r : markov) {
      for (const auto& g : guess_records(r.rounds)) {
        ++records;
        if (conditional_gap(g) > 0.0) ++violations;
      }
    }
    for (const auto& r : runs) {
      const auto gaps = accuracy_gap(guess_records(r.rounds));
      if (!gaps.empty()) finals.push_back(gaps.back());
    }
    const double mean_g = stats::mean(finals);
    const double se_g = stats::stddev(finals) / std::sqrt(static_cast<double>(std::max<std::size_t>(1, finals.size())));

    const auto k_top = last_well_populated_k(runs);
    std::vector<double> cond;
    for (std::uint64_t k = 2; k <= k_top; ++k) {
      std::vector<double> v;
      for (const auto& r : runs) {
        if (r.state.k < k) continue;
        const auto& rec = r.rounds[k - 1];
        v.push_back(conditional_gap(GuessRecord::make(rec.k, rec.lambda, rec.p_k, rec.p_true, false)));
      }
      cond.push_back(stats::mean(v));
    }
    const bool dominance = records > 0 && violations == 0;
    const bool gap_ok = !finals.empty() && std::abs(mean_g) <= kGapBand;
    const bool floor_ok = !cond.empty() && cond.back() >= kCondGapFloor;
    const bool rising = cond.size() >= 2 && cond.back() > cond.front();
    d = fmt::format(
        "dominance {}/{} records; mean final g_n={:.4f} (se {:.4f}, band {}) over {} runs; mean cond gap k=2..{}: {:.4f} "
        "final>={}:{} rising:{}",
        records - violations, records, mean_g, se_g, kGapBand, finals.size(), k_top, fmt::join(cond, ","),
        kCondGapFloor, floor_ok, rising);
    return dominance && gap_ok && floor_ok && rising;
  });

  criterion(8, "martingale tail", [&](std::string& d) {
    bool pass = !markov.empty();
    for (double eps : {0.3, 0.5}) {
      const auto a = azuma_from_runs(markov, kAzumaK, eps);
      d += fmt::format("eps={} tail={:.4f} (se {:.4f}) bound={:.4f} reached={}; ", eps, a.tail, a.tail_std_error, a.bound,
                       a.reached);
      pass = pass && a.reached > 0 && a.tail <= a.bound;
    }
    return pass;
  });

  criterion(9, "determinism", [&](std::string& d) {
    const fs::path dir = fs::temp_directory_path() / "stopest_acceptance_det";
    fs::create_directories(dir);
    RunConfig c;
    c.spec = kMarkov;
    c.runs = 8;
    c.k_max = 8;
    c.bit_budget = 200'000;
    c.seed = 91;
    c.l_values = {4, 8, 12};
    c.output_dir = (dir / "out").string();
    const auto cfg = dir / "config.json";
    std::ofstream(cfg) << config_to_json(c).dump(2) << '\n';
    std::vector<std::map<std::string, std::string>> outputs;
    for (int pass = 0; pass < 2; ++pass) {
      fs::remove_all(c.output_dir);
      if (!cli.empty()) {
        const auto cmd = fmt::format("\"{}\" simulate --config \"{}\" > /dev/null", cli, cfg.string());
        if (std::system(cmd.c_str()) != 0) throw Error(ErrorCode::IoError, "simulate failed");
      } else {
        run_experiment(load_config(cfg));
      }
      outputs.push_back(snapshot(c.output_dir));
    }
    d = fmt::format("{} files per execution via {}, identical={}", outputs[0].size(), cli.empty() ? "library" : "CLI",
                    outputs[0] == outputs[1]);
    return outputs[0].size() >= 4 && outputs[0] == outputs[1];
  });

  fmt::print("{} of 9 criteria failed\n", failures);
  return failures;
}
