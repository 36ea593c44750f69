// Command-line front end for the twin-experiment harness.
//
//   lmekf run --config cfg.json [--filter NAME]... [--theta V] [--ensemble-size M]
//             [--trials N] [--time-steps T] [--seed S] [--out DIR] [--workers W]
//   lmekf list-filters
//   lmekf gd-trace --config cfg.json --step t [--window i] [--out FILE]
//
// Exit codes: 0 success, 1 configuration error, 2 a filter failed in every trial.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lmekf/harness.hpp"

namespace {

constexpr int kConfigError = 1;
constexpr int kAllTrialsFailed = 2;

struct RunOptions {
  std::string config;
  std::vector<std::string> filters;
  std::optional<double> theta;
  std::optional<int> ensemble_size;
  std::optional<int> trials;
  std::optional<int> time_steps;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out = "results";
};

lmekf::ExperimentConfig resolve(const RunOptions& o) {
  lmekf::ExperimentConfig cfg = lmekf::ExperimentConfig::load(o.config);
  if (!o.filters.empty()) {
    cfg.filters.clear();
    for (const auto& name : o.filters) {
      const auto kind = lmekf::parse_filter(name);
      if (!kind) throw std::invalid_argument("unknown filter '" + name + "'");
      cfg.filters.push_back(*kind);
    }
  }
  if (o.theta) cfg.theta = *o.theta;
  if (o.ensemble_size) cfg.ensemble_size = *o.ensemble_size;
  if (o.trials) cfg.trials = *o.trials;
  if (o.time_steps) cfg.time_steps = *o.time_steps;
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  cfg.validate();
  return cfg;
}

int run(const RunOptions& o) {
  lmekf::ExperimentConfig cfg;
  try {
    cfg = resolve(o);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  const lmekf::ExperimentResult result = lmekf::run_experiment(cfg);
  lmekf::write_outputs(result, o.out);
  {
    std::ofstream resolved(std::filesystem::path(o.out) / "config.json");
    resolved << cfg.to_json().dump(2) << '\n';
  }
  int failed_rows = 0;
  for (const auto& r : result.records) failed_rows += r.failed ? 1 : 0;
  std::cerr << "wrote " << result.records.size() << " records to " << o.out;
  if (failed_rows > 0) std::cerr << " (" << failed_rows << " failed trial rows)";
  std::cerr << '\n';
  if (!result.failed_everywhere.empty()) {
    for (const auto& name : result.failed_everywhere) std::cerr << "filter " << name << " failed in every trial\n";
    return kAllTrialsFailed;
  }
  return 0;
}

int gd_trace(const std::string& config, int step, int window, const std::string& out) {
  lmekf::ExperimentConfig cfg;
  try {
    cfg = lmekf::ExperimentConfig::load(config);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  lmekf::GdTrace trace;
  try {
    trace = lmekf::collect_gd_trace(cfg, step, window);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kAllTrialsFailed;
  }
  if (out.empty()) {
    trace.write_csv(std::cout);
  } else {
    std::ofstream f(out);
    if (!f) {
      std::cerr << "cannot write " << out << '\n';
      return kConfigError;
    }
    trace.write_csv(f);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble filtering twin experiments"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run_cmd = app.add_subcommand("run", "run a twin experiment and write CSV results");
  run_cmd->add_option("--config", run_opts.config, "JSON experiment config")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--filter", run_opts.filters, "filter to run (repeatable; default from config)");
  run_cmd->add_option("--theta", run_opts.theta, "observation noise exponent");
  run_cmd->add_option("--ensemble-size", run_opts.ensemble_size, "ensemble size M");
  run_cmd->add_option("--trials", run_opts.trials, "number of trials");
  run_cmd->add_option("--time-steps", run_opts.time_steps, "assimilation steps T");
  run_cmd->add_option("--seed", run_opts.seed, "root seed");
  run_cmd->add_option("--out", run_opts.out, "output directory")->capture_default_str();
  run_cmd->add_option("--workers", run_opts.workers, "parallel trials");

  app.add_subcommand("list-filters", "print the available filter names");

  std::string trace_config;
  std::string trace_out;
  int trace_step = 1;
  int trace_window = 1;
  auto* trace_cmd = app.add_subcommand("gd-trace", "GD convergence trace of one LMEKF analysis");
  trace_cmd->add_option("--config", trace_config, "JSON experiment config")->required()->check(CLI::ExistingFile);
  trace_cmd->add_option("--step", trace_step, "assimilation step (1-based)")->required();
  trace_cmd->add_option("--window", trace_window, "localization window (1-based)")->capture_default_str();
  trace_cmd->add_option("--out", trace_out, "CSV file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (run_cmd->parsed()) return run(run_opts);
    if (trace_cmd->parsed()) return gd_trace(trace_config, trace_step, trace_window, trace_out);
    for (const auto& name : lmekf::filter_names()) std::cout << name << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kAllTrialsFailed;
  }
}
