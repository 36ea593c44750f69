#include "lmekf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "lmekf/baselines.hpp"
#include "lmekf/errors.hpp"
#include "lmekf/localization.hpp"

namespace lmekf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using BasicUpdate = std::function<StateEnsemble(const StateEnsemble&, const ObservationModel&, const Vector&,
                                                RandomStream&)>;

Filter wrap_basic(BasicUpdate update, std::optional<LocalizationConfig> loc) {
  if (!loc) {
    return [update](const StateEnsemble& prior, const ObservationModel& obs, const Vector& y, RandomStream& rng) {
      return FilterStep{update(prior, obs, y, rng), std::nullopt, {}};
    };
  }
  return [update, loc](const StateEnsemble& prior, const ObservationModel& obs, const Vector& y, RandomStream& rng) {
    const LocalUpdate inner = [&update](const StateEnsemble& e, const ObservationModel& o, const Vector& yy,
                                        RandomStream& r, std::size_t) { return update(e, o, yy, r); };
    return FilterStep{localized_update(prior, obs, y, *loc, inner, rng), std::nullopt, {}};
  };
}

Filter make_lmekf(const GdConfig& gd, std::optional<LocalizationConfig> loc, bool keep_traces) {
  return [gd, loc, keep_traces](const StateEnsemble& prior, const ObservationModel& obs, const Vector& y,
                                RandomStream& rng) {
    std::vector<GdTrace> traces;
    auto posterior = [&]() -> StateEnsemble {
      if (!loc) {
        LmekfResult r = lmekf_update(prior, obs, y, gd);
        traces.push_back(std::move(r.trace));
        return std::move(r.ensemble);
      }
      traces.resize(static_cast<std::size_t>(loc->state_dim));
      const LocalUpdate inner = [&](const StateEnsemble& e, const ObservationModel& o, const Vector& yy,
                                    RandomStream&, std::size_t w) {
        LmekfResult r = lmekf_update(e, o, yy, gd);
        traces[w] = std::move(r.trace);
        return std::move(r.ensemble);
      };
      return localized_update(prior, obs, y, *loc, inner, rng);
    }();
    double iterations = 0.0;
    for (const auto& t : traces) iterations += t.iterations_used;
    iterations /= static_cast<double>(traces.size());
    if (!keep_traces) traces.clear();
    return FilterStep{std::move(posterior), iterations, std::move(traces)};
  };
}

}  // namespace

Filter make_filter(FilterKind kind, const ExperimentConfig& cfg, Index state_dim, bool keep_traces) {
  std::optional<LocalizationConfig> loc;
  if (cfg.localization && (kind != FilterKind::Pf || cfg.localize_pf)) {
    loc = LocalizationConfig{cfg.localization->half_width, cfg.localization->aggregation_half_width, state_dim,
                             cfg.localization->cyclic};
    loc->validate();
  }
  switch (kind) {
    case FilterKind::Lmekf:
      return make_lmekf(cfg.gd, loc, keep_traces);
    case FilterKind::Ekf:
      return wrap_basic([](const StateEnsemble& e, const ObservationModel& o, const Vector& y,
                           RandomStream&) { return ekf_update(e, o, y); },
                        loc);
    case FilterKind::Enkf:
      return wrap_basic(stochastic_enkf_update, loc);
    case FilterKind::Pf:
      return wrap_basic(pf_update, loc);
    case FilterKind::Nleaf1:
    case FilterKind::Nleaf2: {
      const int order = kind == FilterKind::Nleaf1 ? 1 : 2;
      return wrap_basic([order](const StateEnsemble& e, const ObservationModel& o, const Vector& y,
                                RandomStream& r) { return nleaf_update(e, o, y, order, r); },
                        loc);
    }
  }
  throw std::invalid_argument("make_filter: unknown filter kind");
}

HiddenMarkovModel build_model(const ExperimentConfig& cfg) {
  std::shared_ptr<const DynamicalModel> dyn;
  if (cfg.system == SystemKind::Lorenz96) {
    dyn = std::make_shared<Lorenz96Model>();
  } else {
    dyn = std::make_shared<FisherModel>();
  }
  PowerScaledNoiseModel::Params p;
  p.theta = cfg.theta;
  p.a = cfg.obs_scale;
  p.noise_dof = cfg.noise_dof;
  p.scale_floor = cfg.scale_floor;
  auto obs = std::make_shared<PowerScaledNoiseModel>(dyn->state_dim(), p);
  return HiddenMarkovModel(std::move(dyn), std::move(obs));
}

Trajectory simulate_truth(const HiddenMarkovModel& hmm, int time_steps, RandomStream& rng) {
  if (time_steps < 1) throw std::invalid_argument("simulate_truth: time_steps must be positive");
  Trajectory traj;
  RandomStream init = rng.split(0);
  traj.states.push_back(hmm.dynamics->initial_state(init));
  for (int t = 1; t <= time_steps; ++t) {
    RandomStream step_rng = rng.split(2 * static_cast<std::uint64_t>(t));
    RandomStream obs_rng = rng.split(2 * static_cast<std::uint64_t>(t) + 1);
    traj.states.push_back(hmm.dynamics->step(traj.states.back(), step_rng));
    traj.observations.push_back(hmm.observation->simulate(traj.states.back(), obs_rng));
  }
  return traj;
}

FilterRun run_filter(const HiddenMarkovModel& hmm, int ensemble_size, const std::string& filter_name,
                     const Filter& filter, const Trajectory& truth, int trial, const RandomStream& rng,
                     const StepObserver& observer) {
  const int steps = static_cast<int>(truth.observations.size());
  const Index d = hmm.state_dim();
  FilterRun run;
  run.abs_bias = Matrix::Constant(d, steps, kNaN);

  Matrix members(d, ensemble_size);
  const RandomStream init = rng.split(0);
  for (int m = 0; m < ensemble_size; ++m) {
    RandomStream member_rng = init.split(static_cast<std::uint64_t>(m));
    members.col(m) = hmm.dynamics->initial_state(member_rng);
  }
  StateEnsemble ensemble(std::move(members));

  for (int t = 1; t <= steps; ++t) {
    try {
      const RandomStream forecast_rng = rng.split(2 * static_cast<std::uint64_t>(t));
      Matrix forecast(d, ensemble_size);
      for (int m = 0; m < ensemble_size; ++m) {
        RandomStream member_rng = forecast_rng.split(static_cast<std::uint64_t>(m));
        forecast.col(m) = hmm.dynamics->step(ensemble.member(m), member_rng);
      }
      RandomStream update_rng = rng.split(2 * static_cast<std::uint64_t>(t) + 1);
      FilterStep step = filter(StateEnsemble(std::move(forecast)), *hmm.observation,
                               truth.observations[static_cast<std::size_t>(t - 1)], update_rng);
      if (!step.ensemble.members().allFinite()) {
        throw FilterError("update produced non-finite members");
      }
      const Vector err = (step.ensemble.mean() - truth.states[static_cast<std::size_t>(t)]).cwiseAbs();
      run.abs_bias.col(t - 1) = err;
      RunRecord rec{trial, t, filter_name, err.mean(), std::nullopt, false, {}};
      if (step.gd_iterations) rec.gd_iterations = static_cast<int>(std::lround(*step.gd_iterations));
      run.records.push_back(std::move(rec));
      if (observer) observer(t, step);
      ensemble = std::move(step.ensemble);
    } catch (const std::exception& e) {
      run.records.push_back(RunRecord{trial, t, filter_name, kNaN, std::nullopt, true, e.what()});
      run.failed = true;
      break;
    }
  }
  return run;
}

std::vector<SummaryRow> summarize(std::vector<RunRecord> records, int trials) {
  std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
    const auto fa = parse_filter(a.filter);
    const auto fb = parse_filter(b.filter);
    const auto ka = fa ? filter_index(*fa) : filter_names().size();
    const auto kb = fb ? filter_index(*fb) : filter_names().size();
    return std::tie(ka, a.filter, a.time_step, a.trial) < std::tie(kb, b.filter, b.time_step, b.trial);
  });

  std::vector<SummaryRow> rows;
  std::size_t i = 0;
  while (i < records.size()) {
    const std::string& name = records[i].filter;
    std::size_t end = i;
    int max_step = 0;
    std::map<int, int> failure_steps;  // trial -> step of failure
    while (end < records.size() && records[end].filter == name) {
      max_step = std::max(max_step, records[end].time_step);
      if (records[end].failed) failure_steps[records[end].trial] = records[end].time_step;
      ++end;
    }
    std::size_t cursor = i;
    for (int t = 1; t <= max_step; ++t) {
      std::vector<double> values;
      while (cursor < end && records[cursor].time_step == t) {
        if (!records[cursor].failed) values.push_back(records[cursor].mean_abs_bias);
        ++cursor;
      }
      SummaryRow row;
      row.time_step = t;
      row.filter = name;
      row.trials = static_cast<int>(values.size());
      row.failed_trials = static_cast<int>(
          std::count_if(failure_steps.begin(), failure_steps.end(), [t](const auto& kv) { return kv.second <= t; }));
      if (values.empty()) {
        row.avg_bias = kNaN;
        row.stderr_bias = kNaN;
      } else {
        const double n = static_cast<double>(values.size());
        row.avg_bias = std::accumulate(values.begin(), values.end(), 0.0) / n;
        double ss = 0.0;
        for (const double v : values) ss += (v - row.avg_bias) * (v - row.avg_bias);
        row.stderr_bias = values.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
      }
      rows.push_back(std::move(row));
    }
    i = end;
  }
  (void)trials;
  return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) { return run_experiment(cfg, build_model(cfg)); }

ExperimentResult run_experiment(const ExperimentConfig& cfg, const HiddenMarkovModel& hmm) {
  cfg.validate();
  const int steps = cfg.resolved_time_steps();
  const Index d = hmm.state_dim();
  const RandomStream root(cfg.seed);

  struct TrialOutput {
    std::vector<FilterRun> runs;  // in cfg.filters order
  };
  std::vector<TrialOutput> outputs(static_cast<std::size_t>(cfg.trials));

  auto run_trial = [&](int trial) {
    const RandomStream trial_rng = root.split(static_cast<std::uint64_t>(trial));
    RandomStream truth_rng = trial_rng.split(0);
    const Trajectory truth = simulate_truth(hmm, steps, truth_rng);
    TrialOutput& out = outputs[static_cast<std::size_t>(trial)];
    for (const FilterKind kind : cfg.filters) {
      const Filter filter = make_filter(kind, cfg, d);
      out.runs.push_back(run_filter(hmm, cfg.ensemble_size, to_string(kind), filter, truth, trial,
                                    trial_rng.split(1 + filter_index(kind))));
    }
  };

  const int workers = std::min(cfg.workers, cfg.trials);
  if (workers <= 1) {
    for (int trial = 0; trial < cfg.trials; ++trial) run_trial(trial);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int trial = next++; trial < cfg.trials; trial = next++) {
          try {
            run_trial(trial);
          } catch (...) {
            const std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  ExperimentResult result;
  for (const auto& out : outputs) {
    for (const auto& run : out.runs) {
      result.records.insert(result.records.end(), run.records.begin(), run.records.end());
    }
  }
  result.summary = summarize(result.records, cfg.trials);

  for (std::size_t f = 0; f < cfg.filters.size(); ++f) {
    const std::string name = to_string(cfg.filters[f]);
    int failures = 0;
    for (const auto& out : outputs) failures += out.runs[f].failed ? 1 : 0;
    if (failures == cfg.trials) result.failed_everywhere.push_back(name);

    for (int t = 1; t <= steps; ++t) {
      for (Index i = 0; i < d; ++i) {
        double sum = 0.0;
        int count = 0;
        for (const auto& out : outputs) {
          const double v = out.runs[f].abs_bias(i, t - 1);
          if (!std::isnan(v)) {
            sum += v;
            ++count;
          }
        }
        result.per_dim.push_back(PerDimRow{t, i + 1, name, count > 0 ? sum / count : kNaN});
      }
    }
  }
  return result;
}

void write_records_csv(const std::vector<RunRecord>& records, std::ostream& out) {
  out << "trial,time_step,filter,mean_abs_bias,gd_iterations\n" << std::setprecision(17);
  for (const auto& r : records) {
    out << r.trial << ',' << r.time_step << ',' << r.filter << ',' << r.mean_abs_bias << ',';
    if (r.gd_iterations) out << *r.gd_iterations;
    out << '\n';
  }
}

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << "time_step,filter,avg_bias,stderr,failed_trials\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.time_step << ',' << r.filter << ',' << r.avg_bias << ',' << r.stderr_bias << ',' << r.failed_trials
        << '\n';
  }
}

void write_per_dim_csv(const std::vector<PerDimRow>& rows, std::ostream& out) {
  out << "time_step,dim,filter,abs_bias\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.time_step << ',' << r.dim << ',' << r.filter << ',' << r.abs_bias << '\n';
  }
}

void write_outputs(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  auto records = open("records.csv");
  write_records_csv(result.records, records);
  auto summary = open("summary.csv");
  write_summary_csv(result.summary, summary);
  auto per_dim = open("per_dim_bias.csv");
  write_per_dim_csv(result.per_dim, per_dim);
}

GdTrace collect_gd_trace(const ExperimentConfig& cfg, int time_step, int window) {
  cfg.validate();
  if (time_step < 1 || time_step > cfg.resolved_time_steps()) {
    throw std::invalid_argument("gd-trace: step must lie in 1..time_steps");
  }
  const HiddenMarkovModel hmm = build_model(cfg);
  const Index d = hmm.state_dim();
  if (window < 1 || (cfg.localization && window > d)) {
    throw std::invalid_argument("gd-trace: window index out of range");
  }
  const RandomStream trial_rng = RandomStream(cfg.seed).split(0);
  RandomStream truth_rng = trial_rng.split(0);
  const Trajectory full = simulate_truth(hmm, cfg.resolved_time_steps(), truth_rng);
  Trajectory truth;
  truth.states.assign(full.states.begin(), full.states.begin() + time_step + 1);
  truth.observations.assign(full.observations.begin(), full.observations.begin() + time_step);

  std::optional<GdTrace> captured;
  const StepObserver observer = [&](int t, const FilterStep& step) {
    if (t != time_step || step.traces.empty()) return;
    const std::size_t pick = cfg.localization ? static_cast<std::size_t>(window - 1) : 0;
    captured = step.traces.at(pick);
  };
  const Filter filter = make_filter(FilterKind::Lmekf, cfg, d, true);
  const FilterRun run = run_filter(hmm, cfg.ensemble_size, "lmekf", filter, truth, 0,
                                   trial_rng.split(1 + filter_index(FilterKind::Lmekf)), observer);
  if (!captured) {
    const std::string why = run.records.empty() ? "no records" : run.records.back().error;
    throw FilterError("gd-trace: LMEKF did not reach step " + std::to_string(time_step) + " (" + why + ")");
  }
  return *captured;
}

}  // namespace lmekf
