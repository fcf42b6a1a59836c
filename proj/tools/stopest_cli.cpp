// Command-line front end for the stopping-time estimator laboratory.
//
//   stopest_cli simulate  --config cfg.json [--seed N] [--runs M] [--budget N] [--out DIR] [--workers N]
//   stopest_cli entropy   --config cfg.json [--l 8 --l 9 ...]
//   stopest_cli lemma1    --config cfg.json [--n 3]
//   stopest_cli azuma     --config cfg.json [--k 6] [--epsilon 0.3 --epsilon 0.5]
//   stopest_cli aggregate --out DIR [trace files...]
//
// Results go to stdout as JSON. Failures print {"error": {...}} to stderr and
// exit with status 2 (1 for usage errors).

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "stopest/entropy_return.hpp"
#include "stopest/harness/checks.hpp"
#include "stopest/harness/config.hpp"
#include "stopest/harness/experiment.hpp"
#include "stopest/harness/run.hpp"
#include "stopest/process_models.hpp"

namespace {

namespace fs = std::filesystem;
using stopest::Error;
using stopest::ErrorCode;
using ojson = nlohmann::ordered_json;
namespace h = stopest::harness;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> runs;
  std::optional<std::uint64_t> budget;
  std::optional<std::string> out;
  std::optional<std::uint64_t> workers;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required = true) {
  auto* opt = cmd->add_option("--config", f.config, "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", f.seed, "master seed override");
  cmd->add_option("--runs", f.runs, "Monte Carlo batch size override");
  cmd->add_option("--budget", f.budget, "bit budget per realization override");
  cmd->add_option("--out", f.out, "output directory override");
  cmd->add_option("--workers", f.workers, "worker threads");
}

h::RunConfig resolve_config(const CommonFlags& f) {
  h::RunConfig c = h::load_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.runs) c.runs = *f.runs;
  if (f.budget) c.bit_budget = *f.budget;
  if (f.out) c.output_dir = *f.out;
  if (f.workers) c.workers = *f.workers;
  h::validate_config(c);
  return c;
}

void write_json_file(const fs::path& path, const ojson& j) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void print_error(std::string_view code, std::string_view message) {
  ojson err = {{"error", {{"code", code}, {"message", message}}}};
  std::cerr << err.dump() << std::endl;
}

int cmd_simulate(const CommonFlags& f) {
  const auto config = resolve_config(f);
  const auto result = h::run_experiment(config);
  ojson report = {{"status", "ok"},
                  {"out", config.output_dir},
                  {"traces", result.traces.size()},
                  {"summary", h::summary_to_json(result.summary)}};
  std::cout << report.dump(2) << std::endl;
  return 0;
}

int cmd_entropy(const CommonFlags& f, std::vector<std::uint64_t> l_values) {
  auto config = resolve_config(f);
  if (l_values.empty()) l_values = config.l_values;
  if (l_values.empty()) l_values = {8, 9, 10, 11, 12, 13, 14, 15, 16};
  config.l_values = l_values;
  h::validate_config(config);

  stopest::BitSequence<stopest::ProcessSource> seq(
      stopest::ProcessSource(config.spec, h::derive_seed(config.seed, 0)), config.bit_budget);
  seq.ensure(config.bit_budget);
  const auto sweep = stopest::entropy_from_return_times(seq, l_values);
  const auto analytic = stopest::analytic_entropy(config.spec);

  fs::create_directories(config.output_dir);
  h::write_entropy_csv(fs::path(config.output_dir) / "entropy.csv", sweep);

  ojson records = ojson::array();
  for (const auto& rt : sweep) {
    records.push_back({{"l", rt.l},
                       {"r", rt.record ? ojson(rt.record->r) : ojson(nullptr)},
                       {"h_hat", rt.record ? ojson(rt.record->h_hat) : ojson(nullptr)}});
  }
  const auto mean = stopest::mean_entropy_estimate(sweep);
  ojson report = {{"status", "ok"},
                  {"bits", seq.size()},
                  {"analytic_entropy", analytic.bits},
                  {"analytic_std_error", analytic.std_error},
                  {"mean_h_hat", mean ? ojson(*mean) : ojson(nullptr)},
                  {"records", records}};
  std::cout << report.dump(2) << std::endl;
  return 0;
}

int cmd_lemma1(const CommonFlags& f, std::uint64_t n) {
  const auto config = resolve_config(f);
  const auto r = stopest::harness::lemma1_tv_check(config.spec, n, config.runs, config.seed, config.bit_budget);
  ojson report = {{"status", "ok"}, {"n", r.n},           {"tv", r.tv},
                  {"used", r.used}, {"dropped", r.dropped}, {"mirror_law", r.mirror_law},
                  {"exact_law", r.exact_law}};
  if (f.out) write_json_file(fs::path(*f.out) / "lemma1.json", report);
  std::cout << report.dump(2) << std::endl;
  return 0;
}

int cmd_azuma(const CommonFlags& f, std::uint64_t k, std::vector<double> epsilons) {
  const auto config = resolve_config(f);
  if (epsilons.empty()) epsilons = {config.epsilon};
  h::RunOptions opts;
  opts.k_max = k;
  opts.bit_budget = config.bit_budget;
  const auto runs = h::run_batch(config.spec, opts, config.seed, config.runs, config.workers);
  ojson checks = ojson::array();
  for (double eps : epsilons) {
    const auto a = h::azuma_from_runs(runs, k, eps);
    checks.push_back({{"k", a.k},
                      {"epsilon", a.epsilon},
                      {"tail", a.tail},
                      {"tail_std_error", a.tail_std_error},
                      {"bound", a.bound},
                      {"within_bound", a.tail <= a.bound},
                      {"reached", a.reached},
                      {"not_reached", a.not_reached}});
  }
  ojson report = {{"status", "ok"}, {"checks", checks}};
  if (f.out) write_json_file(fs::path(*f.out) / "azuma.json", report);
  std::cout << report.dump(2) << std::endl;
  return 0;
}

int cmd_aggregate(const CommonFlags& f, const std::vector<std::string>& inputs) {
  if (!f.out) throw Error(ErrorCode::InvalidArgument, "aggregate needs --out DIR");
  const fs::path dir(*f.out);
  std::vector<fs::path> files;
  if (inputs.empty()) {
    files = h::trace_files(dir);
  } else {
    for (const auto& s : inputs) files.emplace_back(s);
  }
  const auto summary = h::aggregate(files);
  fs::create_directories(dir);
  h::write_summary(dir, summary);
  ojson report = {{"status", "ok"}, {"files", files.size()}, {"summary", h::summary_to_json(summary)}};
  std::cout << report.dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stopping-time forward estimation for stationary binary processes"};
  app.require_subcommand(1);

  CommonFlags sim_flags, ent_flags, lem_flags, az_flags, agg_flags;
  auto* sim = app.add_subcommand("simulate", "run the full pipeline from a config file");
  add_common(sim, sim_flags);

  auto* ent = app.add_subcommand("entropy", "return-time entropy sweep on one realization");
  add_common(ent, ent_flags);
  std::vector<std::uint64_t> l_values;
  ent->add_option("--l", l_values, "block lengths minus one (repeatable)");

  auto* lem = app.add_subcommand("lemma1", "total-variation check of the mirror block law");
  add_common(lem, lem_flags);
  std::uint64_t lemma_n = 3;
  lem->add_option("--n", lemma_n, "block length minus one");

  auto* az = app.add_subcommand("azuma", "empirical martingale tail against the exponential bound");
  add_common(az, az_flags);
  std::uint64_t azuma_k = 6;
  std::vector<double> epsilons;
  az->add_option("--k", azuma_k, "round index");
  az->add_option("--epsilon", epsilons, "deviation thresholds (repeatable)");

  auto* agg = app.add_subcommand("aggregate", "summarize trace files");
  add_common(agg, agg_flags, false);
  std::vector<std::string> inputs;
  agg->add_option("files", inputs, "trace files (default: all *.trace.jsonl in --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", e.what());
    return 1;
  }

  try {
    if (*sim) return cmd_simulate(sim_flags);
    if (*ent) return cmd_entropy(ent_flags, l_values);
    if (*lem) return cmd_lemma1(lem_flags, lemma_n);
    if (*az) return cmd_azuma(az_flags, azuma_k, epsilons);
    if (*agg) return cmd_aggregate(agg_flags, inputs);
  } catch (const Error& e) {
    print_error(stopest::to_string(e.code()), e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error("InternalError", e.what());
    return 2;
  }
  return 1;
}
