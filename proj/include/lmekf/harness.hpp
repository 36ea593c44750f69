#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lmekf/config.hpp"
#include "lmekf/dynamics.hpp"
#include "lmekf/kld_optimizer.hpp"

namespace lmekf {

/// Output of one filter analysis step.
struct FilterStep {
  StateEnsemble ensemble;
  std::optional<double> gd_iterations;  ///< LMEKF only; mean over windows
  std::vector<GdTrace> traces;          ///< kept only when requested
};

using Filter =
    std::function<FilterStep(const StateEnsemble& prior, const ObservationModel& obs, const Vector& y, RandomStream& rng)>;

/// Builds the named filter for a model of dimension `state_dim`, wrapping it
/// in sliding-window localization when the config asks for it (the particle
/// filter stays global unless localize_pf is set).
Filter make_filter(FilterKind kind, const ExperimentConfig& cfg, Index state_dim, bool keep_traces = false);

HiddenMarkovModel build_model(const ExperimentConfig& cfg);

/// Truth x_0..x_T and observations y_1..y_T (observations[t-1] is y_t).
struct Trajectory {
  std::vector<Vector> states;
  std::vector<Vector> observations;
};

Trajectory simulate_truth(const HiddenMarkovModel& hmm, int time_steps, RandomStream& rng);

struct RunRecord {
  int trial = 0;
  int time_step = 0;
  std::string filter;
  double mean_abs_bias = 0.0;  ///< NaN on a failed row
  std::optional<int> gd_iterations;
  bool failed = false;
  std::string error;
};

struct FilterRun {
  std::vector<RunRecord> records;
  Matrix abs_bias;  ///< d x T, |ensemble mean - truth|; columns after a failure are NaN
  bool failed = false;
};

using StepObserver = std::function<void(int time_step, const FilterStep& step)>;

/// Twin-experiment loop for one filter and one trial: initial ensemble from
/// the model's initial sampler, then forecast and analysis for t = 1..T.
/// Filter exceptions end the trial with a failed row instead of propagating.
FilterRun run_filter(const HiddenMarkovModel& hmm, int ensemble_size, const std::string& filter_name,
                     const Filter& filter, const Trajectory& truth, int trial, const RandomStream& rng,
                     const StepObserver& observer = {});

struct SummaryRow {
  int time_step = 0;
  std::string filter;
  double avg_bias = 0.0;
  double stderr_bias = 0.0;
  int trials = 0;
  int failed_trials = 0;
};

struct PerDimRow {
  int time_step = 0;
  Index dim = 0;  ///< 1-based
  std::string filter;
  double abs_bias = 0.0;
};

struct ExperimentResult {
  std::vector<RunRecord> records;
  std::vector<SummaryRow> summary;
  std::vector<PerDimRow> per_dim;
  /// Filters that failed in every trial.
  std::vector<std::string> failed_everywhere;
};

/// Trial-averaged summary; independent of record order.
std::vector<SummaryRow> summarize(std::vector<RunRecord> records, int trials);

/// Runs every configured filter over every trial. Trial t uses the substream
/// root.split(t); inside it, the truth uses split(0) and filter f uses
/// split(1 + filter_index(f)).
ExperimentResult run_experiment(const ExperimentConfig& cfg);
ExperimentResult run_experiment(const ExperimentConfig& cfg, const HiddenMarkovModel& hmm);

void write_records_csv(const std::vector<RunRecord>& records, std::ostream& out);
void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out);
void write_per_dim_csv(const std::vector<PerDimRow>& rows, std::ostream& out);
/// records.csv, summary.csv and per_dim_bias.csv under `dir`.
void write_outputs(const ExperimentResult& result, const std::filesystem::path& dir);

/// GD convergence trace of the LMEKF analysis at `time_step` in trial 0.
/// With localization, `window` (1-based) selects which window's trace to return.
GdTrace collect_gd_trace(const ExperimentConfig& cfg, int time_step, int window = 1);

}  // namespace lmekf
