#pragma once

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stopest/error.hpp"
#include "stopest/guessing.hpp"
#include "stopest/harness/config.hpp"
#include "stopest/harness/run.hpp"
#include "stopest/statistics.hpp"

namespace stopest::harness {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Per-run trace files
// ---------------------------------------------------------------------------

inline std::string run_stem(std::uint64_t index) { return fmt::format("run_{:05d}", index); }

namespace detail {

inline std::ofstream open_for_write(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

inline void check_written(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

template <class T>
ojson optional_json(const std::optional<T>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

}  // namespace detail

/// JSON Lines trace: one header record, one record per completed round, then
/// return-time and tower records.
inline void write_trace(const fs::path& path, const RunResult& run, const RunConfig& config) {
  auto out = detail::open_for_write(path);
  ojson header = {{"type", "header"},
                  {"schema_version", kSchemaVersion},
                  {"run", run.run_index},
                  {"seed", run.seed},
                  {"spec", spec_to_json(config.spec)},
                  {"k_max", config.k_max},
                  {"bit_budget", config.bit_budget},
                  {"k", run.state.k},
                  {"exhausted", run.state.exhausted},
                  {"bits_generated", run.bits_generated}};
  out << header.dump() << '\n';
  for (const auto& r : run.rounds) {
    ojson rec = {{"type", "round"},
                 {"k", r.k},
                 {"tau", r.tau},
                 {"lambda", r.lambda},
                 {"next_bit", r.next_bit ? ojson(*r.next_bit ? 1 : 0) : ojson(nullptr)},
                 {"p_k", r.p_k},
                 {"p_true", detail::optional_json(r.p_true)}};
    out << rec.dump() << '\n';
  }
  for (const auto& rt : run.return_times) {
    ojson rec = {{"type", "return_time"},
                 {"l", rt.l},
                 {"r", rt.record ? ojson(rt.record->r) : ojson(nullptr)},
                 {"h_hat", rt.record ? ojson(rt.record->h_hat) : ojson(nullptr)}};
    out << rec.dump() << '\n';
  }
  ojson tower = {{"type", "tower"}, {"status", to_string(run.tower_status)}};
  if (run.tower) {
    tower["epsilon"] = run.tower->epsilon;
    tower["c"] = run.tower->c;
    tower["k_star"] = detail::optional_json(run.tower->k_star);
    tower["holds"] = run.tower->holds;
    tower["ratios"] = run.tower->ratios;
  }
  out << tower.dump() << '\n';
  detail::check_written(out, path);
}

/// Reads back a trace written by write_trace.
inline RunResult read_trace(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open trace " + path.string());
  RunResult run;
  std::string line;
  bool seen_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ojson rec;
    try {
      rec = ojson::parse(line);
    } catch (const ojson::exception& e) {
      throw Error(ErrorCode::SchemaMismatch, fmt::format("{}:{}: not JSON ({})", path.string(), line_no, e.what()));
    }
    const auto type = rec.value("type", std::string{});
    try {
      if (!seen_header) {
        if (type != "header" || rec.value("schema_version", -1) != kSchemaVersion) {
          throw Error(ErrorCode::SchemaMismatch, path.string() + ": missing header or wrong schema_version");
        }
        seen_header = true;
        run.run_index = rec.at("run").get<std::uint64_t>();
        run.seed = rec.at("seed").get<std::uint64_t>();
        run.state.exhausted = rec.at("exhausted").get<bool>();
        run.bits_generated = rec.at("bits_generated").get<std::uint64_t>();
      } else if (type == "round") {
        RoundRecord r;
        r.k = rec.at("k").get<std::uint64_t>();
        r.tau = rec.at("tau").get<std::uint64_t>();
        r.lambda = rec.at("lambda").get<std::uint64_t>();
        if (!rec.at("next_bit").is_null()) r.next_bit = rec.at("next_bit").get<int>() != 0;
        r.p_k = rec.at("p_k").get<double>();
        if (!rec.at("p_true").is_null()) r.p_true = rec.at("p_true").get<double>();
        run.rounds.push_back(r);
      } else if (type == "return_time") {
        ReturnTimeResult rt;
        rt.l = rec.at("l").get<std::uint64_t>();
        if (!rec.at("r").is_null()) {
          rt.record = ReturnTimeRecord{rt.l, rec.at("r").get<std::uint64_t>(), rec.at("h_hat").get<double>()};
        }
        run.return_times.push_back(rt);
      } else if (type == "tower") {
        const auto status = rec.at("status").get<std::string>();
        for (auto s : {TowerStatus::Ok, TowerStatus::EntropyZero, TowerStatus::NonErgodic, TowerStatus::TooFewRounds,
                       TowerStatus::NotRequested}) {
          if (status == to_string(s)) run.tower_status = s;
        }
        if (run.tower_status == TowerStatus::Ok) {
          TowerReport t;
          t.epsilon = rec.at("epsilon").get<double>();
          t.c = rec.at("c").get<double>();
          if (!rec.at("k_star").is_null()) t.k_star = rec.at("k_star").get<std::uint64_t>();
          t.holds = rec.at("holds").get<bool>();
          t.ratios = rec.at("ratios").get<std::vector<double>>();
          run.tower = t;
        }
      } else {
        throw Error(ErrorCode::SchemaMismatch, fmt::format("{}:{}: unknown record type '{}'", path.string(), line_no, type));
      }
    } catch (const ojson::exception& e) {
      throw Error(ErrorCode::SchemaMismatch, fmt::format("{}:{}: malformed record ({})", path.string(), line_no, e.what()));
    }
  }
  if (!seen_header) throw Error(ErrorCode::SchemaMismatch, path.string() + ": empty trace");

  // Rebuild the stopping state from the round records.
  auto& st = run.state;
  st.k = run.rounds.size();
  for (const auto& r : run.rounds) {
    st.taus.push_back(r.tau);
    st.lambdas.push_back(r.lambda);
  }
  if (st.k >= 2) {
    for (std::uint64_t j = 0; j + 1 < st.k; ++j) {
      const auto& nb = run.rounds[j].next_bit;
      if (!nb) throw Error(ErrorCode::SchemaMismatch, path.string() + ": interior round lacks next_bit");
      st.ones_sum += *nb ? 1 : 0;
    }
    st.p_k = static_cast<double>(st.ones_sum) / static_cast<double>(st.k - 1);
  }
  return run;
}

inline void write_guess_csv(const fs::path& path, const RunResult& run) {
  auto out = detail::open_for_write(path);
  out << "# schema_version: " << kSchemaVersion << '\n';
  out << "k,lambda,p_k,p_true,guess,bayes,actual,cond_gap\n";
  const auto records = guess_records(run.rounds, 1);
  for (const auto& g : records) {
    out << fmt::format("{},{},{},{},{},{},{},{}\n", g.k, g.lambda_k, g.p_k, *g.p_true, int(g.guess), int(g.bayes),
                       int(g.actual), conditional_gap(g));
  }
  // Summary over k >= 2; P_1 is a fixed default and stays out of the statistic.
  const auto scored = guess_records(run.rounds, 2);
  const auto gaps = accuracy_gap(scored);
  if (gaps.empty()) {
    out << "summary,n=0,g_n=\n";
  } else {
    out << fmt::format("summary,n={},g_n={}\n", gaps.size(), gaps.back());
  }
  detail::check_written(out, path);
}

inline void write_entropy_csv(const fs::path& path, const std::vector<ReturnTimeResult>& sweep) {
  auto out = detail::open_for_write(path);
  out << "# schema_version: " << kSchemaVersion << '\n';
  out << "l,R,h_hat\n";
  for (const auto& rt : sweep) {
    if (rt.record) {
      out << fmt::format("{},{},{}\n", rt.l, rt.record->r, rt.record->h_hat);
    } else {
      out << fmt::format("{},,\n", rt.l);
    }
  }
  detail::check_written(out, path);
}

inline void write_tower_csv(const fs::path& path, const RunResult& run) {
  auto out = detail::open_for_write(path);
  out << "# schema_version: " << kSchemaVersion << '\n';
  out << "k,tau,lambda,ratio\n";
  // Row k pairs tau_{k+1} with lambda_k.
  const auto& st = run.state;
  for (std::uint64_t k = 1; k < st.k; ++k) {
    const double ratio = std::log2(static_cast<double>(st.taus[k])) / static_cast<double>(st.lambdas[k] + 1);
    out << fmt::format("{},{},{},{}\n", k, st.taus[k], st.lambdas[k], ratio);
  }
  detail::check_written(out, path);
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct KStats {
  std::uint64_t k = 0;
  std::uint64_t completed = 0;  ///< runs with at least k rounds
  std::uint64_t scored = 0;     ///< runs contributing |P_k - p_true|
  double mean_abs_error = 0.0;
  double median_abs_error = 0.0;
  double q10_abs_error = 0.0;
  double q90_abs_error = 0.0;
  double mean_cond_gap = 0.0;
};

struct EntropyStats {
  std::uint64_t l = 0;
  std::uint64_t resolved = 0;
  double mean_h_hat = 0.0;
  double std_h_hat = 0.0;
};

struct SummaryStats {
  std::uint64_t runs = 0;
  std::uint64_t exhausted = 0;
  std::vector<KStats> by_k;  ///< k = 1 .. max completed; error fields are zero at k = 1
  std::uint64_t gap_runs = 0;
  double final_gap_mean = 0.0;
  double final_gap_std = 0.0;
  std::vector<EntropyStats> entropy;
  std::uint64_t tower_reports = 0;
  std::uint64_t tower_holds = 0;
  std::map<std::string, std::uint64_t> tower_status;
};

inline SummaryStats summarize(const std::vector<RunResult>& runs) {
  SummaryStats s;
  s.runs = runs.size();
  std::uint64_t max_k = 0;
  for (const auto& r : runs) {
    max_k = std::max(max_k, r.state.k);
    if (r.state.exhausted) ++s.exhausted;
    ++s.tower_status[to_string(r.tower_status)];
    if (r.tower) {
      ++s.tower_reports;
      if (r.tower->holds) ++s.tower_holds;
    }
  }
  for (std::uint64_t k = 1; k <= max_k; ++k) {
    KStats ks;
    ks.k = k;
    std::vector<double> errors, cond;
    for (const auto& r : runs) {
      if (r.state.k < k) continue;
      ++ks.completed;
      const auto& rec = r.rounds[k - 1];
      if (k >= 2 && rec.p_true) {
        errors.push_back(std::abs(rec.p_k - *rec.p_true));
        const auto g = GuessRecord::make(rec.k, rec.lambda, rec.p_k, rec.p_true, false);
        cond.push_back(conditional_gap(g));
      }
    }
    ks.scored = errors.size();
    if (!errors.empty()) {
      ks.mean_abs_error = stats::mean(errors);
      ks.median_abs_error = stats::median(errors);
      ks.q10_abs_error = stats::quantile(errors, 0.1);
      ks.q90_abs_error = stats::quantile(errors, 0.9);
      ks.mean_cond_gap = stats::mean(cond);
    }
    s.by_k.push_back(ks);
  }
  std::vector<double> finals;
  for (const auto& r : runs) {
    const auto gaps = accuracy_gap(guess_records(r.rounds, 2));
    if (!gaps.empty()) finals.push_back(gaps.back());
  }
  s.gap_runs = finals.size();
  s.final_gap_mean = stats::mean(finals);
  s.final_gap_std = stats::stddev(finals);

  std::map<std::uint64_t, std::vector<double>> by_l;
  std::vector<std::uint64_t> l_order;
  for (const auto& r : runs) {
    for (const auto& rt : r.return_times) {
      if (!by_l.contains(rt.l)) l_order.push_back(rt.l);
      auto& v = by_l[rt.l];
      if (rt.record) v.push_back(rt.record->h_hat);
    }
  }
  std::sort(l_order.begin(), l_order.end());
  for (auto l : l_order) {
    const auto& v = by_l[l];
    s.entropy.push_back({l, v.size(), stats::mean(v), stats::stddev(v)});
  }
  return s;
}

inline ojson summary_to_json(const SummaryStats& s) {
  ojson by_k = ojson::array();
  for (const auto& k : s.by_k) {
    by_k.push_back({{"k", k.k},
                    {"completed", k.completed},
                    {"scored", k.scored},
                    {"mean_abs_error", k.mean_abs_error},
                    {"median_abs_error", k.median_abs_error},
                    {"q10_abs_error", k.q10_abs_error},
                    {"q90_abs_error", k.q90_abs_error},
                    {"mean_cond_gap", k.mean_cond_gap}});
  }
  ojson entropy = ojson::array();
  for (const auto& e : s.entropy) {
    entropy.push_back({{"l", e.l}, {"resolved", e.resolved}, {"mean_h_hat", e.mean_h_hat}, {"std_h_hat", e.std_h_hat}});
  }
  ojson status = ojson::object();
  for (const auto& [k, v] : s.tower_status) status[k] = v;
  return {{"schema_version", kSchemaVersion},
          {"runs", s.runs},
          {"exhausted", s.exhausted},
          {"by_k", by_k},
          {"final_gap", {{"runs", s.gap_runs}, {"mean", s.final_gap_mean}, {"std", s.final_gap_std}}},
          {"entropy", entropy},
          {"tower", {{"reports", s.tower_reports}, {"holds", s.tower_holds}, {"status", status}}}};
}

/// Writes summary.json and summary_k.csv into `dir`.
inline void write_summary(const fs::path& dir, const SummaryStats& s) {
  {
    const auto path = dir / "summary.json";
    auto out = detail::open_for_write(path);
    out << summary_to_json(s).dump(2) << '\n';
    detail::check_written(out, path);
  }
  const auto path = dir / "summary_k.csv";
  auto out = detail::open_for_write(path);
  out << "# schema_version: " << kSchemaVersion << '\n';
  out << "k,completed,scored,mean_abs_error,median_abs_error,q10_abs_error,q90_abs_error,mean_cond_gap\n";
  for (const auto& k : s.by_k) {
    out << fmt::format("{},{},{},{},{},{},{},{}\n", k.k, k.completed, k.scored, k.mean_abs_error, k.median_abs_error,
                       k.q10_abs_error, k.q90_abs_error, k.mean_cond_gap);
  }
  detail::check_written(out, path);
}

/// Trace files in `dir`, sorted by name.
inline std::vector<fs::path> trace_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.ends_with(".trace.jsonl")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// Reads trace files and reduces them to summary statistics.
inline SummaryStats aggregate(const std::vector<fs::path>& files) {
  if (files.empty()) throw Error(ErrorCode::InvalidArgument, "aggregate needs at least one trace file");
  std::vector<RunResult> runs;
  runs.reserve(files.size());
  for (const auto& f : files) runs.push_back(read_trace(f));
  return summarize(runs);
}

struct ExperimentOutput {
  std::vector<fs::path> traces;
  SummaryStats summary;
};

/// Full pipeline: seeded runs, per-run artifacts, aggregated summary.
inline ExperimentOutput run_experiment(const RunConfig& config) {
  validate_config(config);
  const fs::path dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::IoError, "cannot create output directory " + dir.string());

  RunOptions opts;
  opts.k_max = config.k_max;
  opts.bit_budget = config.bit_budget;
  opts.l_values = config.l_values;
  opts.epsilon = config.epsilon;
  opts.entropy = analytic_entropy(config.spec).bits;

  const auto runs = run_batch(config.spec, opts, config.seed, config.runs, config.workers);

  ExperimentOutput output;
  for (const auto& run : runs) {
    const auto stem = run_stem(run.run_index);
    const auto trace = dir / (stem + ".trace.jsonl");
    write_trace(trace, run, config);
    write_guess_csv(dir / (stem + ".guess.csv"), run);
    write_tower_csv(dir / (stem + ".tower.csv"), run);
    if (!run.return_times.empty()) write_entropy_csv(dir / (stem + ".entropy.csv"), run.return_times);
    output.traces.push_back(trace);
  }
  output.summary = aggregate(output.traces);
  write_summary(dir, output.summary);
  {
    const auto path = dir / "config.json";
    auto out = detail::open_for_write(path);
    out << config_to_json(config).dump(2) << '\n';
    detail::check_written(out, path);
  }
  return output;
}

}  // namespace stopest::harness
