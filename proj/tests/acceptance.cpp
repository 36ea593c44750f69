// Acceptance checks. Each criterion prints one PASS/FAIL line; run with
// criterion numbers as arguments (default: all).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "lmekf/baselines.hpp"
#include "lmekf/harness.hpp"
#include "lmekf/kld_optimizer.hpp"
#include "lmekf/localization.hpp"
#include "test_support.hpp"

using namespace lmekf;
using namespace lmekf::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

PowerScaledNoiseModel power_model(Index d, double theta) {
  PowerScaledNoiseModel::Params p;
  p.theta = theta;
  return PowerScaledNoiseModel(d, p);
}

// Mean over steps first..last of the summary avg_bias for one filter.
double span_bias(const ExperimentResult& r, const std::string& filter, int first, int last) {
  double sum = 0.0;
  int n = 0;
  for (const auto& row : r.summary) {
    if (row.filter == filter && row.time_step >= first && row.time_step <= last) {
      sum += row.avg_bias;
      ++n;
    }
  }
  return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

// Summary rows stop at the last step any trial of the filter reached.
int failed_trials_by(const ExperimentResult& r, const std::string& filter, int step) {
  int failed = 0;
  for (const auto& row : r.summary) {
    if (row.filter == filter && row.time_step <= step) failed = std::max(failed, row.failed_trials);
  }
  return failed;
}

int failed_rows(const ExperimentResult& r) {
  int n = 0;
  for (const auto& rec : r.records) n += rec.failed ? 1 : 0;
  return n;
}

// 1. objective_gradient vs central differences.
Outcome gradient_correctness() {
  RandomStream rng(101);
  const Index dims[] = {1, 4, 10};
  const double thetas[] = {0.0, 0.5, 1.0};
  double worst = 0.0;
  const int probes = 50;
  for (int i = 0; i < probes; ++i) {
    const Index d = dims[i % 3];
    const double theta = thetas[(i / 3) % 3];
    const auto obs = power_model(d, theta);
    const StateEnsemble ens(random_matrix(d, 20, rng) * 2.0 + Matrix::Constant(d, 20, 1.0));
    const KldObjective f(empirical_moments(ens), ens, obs, obs.simulate(ens.member(0), rng));
    const AffineMap t{Matrix::Identity(d, d) + 0.1 * random_matrix(d, d, rng), 0.3 * random_vector(d, rng)};
    const AffineGradient g = f.gradient(t);
    // Truncation error dominates at 1e-6 where the noise scale is near its floor.
    const double h = 1e-7;
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
    for (Index r = 0; r < d; ++r) {
      for (Index c = 0; c < d; ++c) {
        AffineMap p = t;
        AffineMap m = t;
        p.A(r, c) += h;
        m.A(r, c) -= h;
        worst = std::max(worst, rel(g.dA(r, c), (f.value(p) - f.value(m)) / (2 * h)));
      }
      AffineMap p = t;
      AffineMap m = t;
      p.b(r) += h;
      m.b(r) -= h;
      worst = std::max(worst, rel(g.db(r), (f.value(p) - f.value(m)) / (2 * h)));
    }
  }
  return {worst < 1e-5, fmt("worst relative error %.2e over %d probes (tol 1e-5)", worst, probes)};
}

// 2. Linear-Gaussian recovery of the Kalman map and posterior moments.
Outcome kalman_equivalence() {
  RandomStream rng(202);
  const Index d = 2;
  const Vector mu = (Vector(2) << 0.5, -1.0).finished();
  const Matrix S = (Matrix(2, 2) << 1.0, 0.3, 0.3, 0.6).finished();
  const LinearGaussianObs lin{Matrix::Identity(d, d), Matrix::Identity(d, d), Vector::Zero(d)};
  const LinearGaussianModel obs(lin);
  const Vector y = (Vector(2) << 1.0, 0.4).finished();
  const StateEnsemble ens = sample_gaussian(GaussianMoments(mu, S), 10000, rng);
  const GaussianMoments prior = empirical_moments(ens);

  GdConfig cfg;
  cfg.step_size = 0.05;
  cfg.threshold = 1e-12;
  cfg.max_iters = 20000;
  const KldSolution sol = minimize_kld(ens, obs, y, cfg, AffineMap::identity(d));
  const AffineMap kalman = analytic_kalman_map(prior, lin, y);
  const GaussianMoments post = kalman_posterior(prior, lin, y);
  const GaussianMoments pushed = empirical_moments(apply_affine(sol.map, ens));

  const double err_a = (sol.map.A - kalman.A).cwiseAbs().maxCoeff();
  const double err_b = (sol.map.b - kalman.b).cwiseAbs().maxCoeff();
  const double err_mean = (pushed.mean() - post.mean()).cwiseAbs().maxCoeff();
  const double err_cov = (pushed.cov() - post.cov()).cwiseAbs().maxCoeff();
  const bool map_ok = err_a < 1e-2 && err_b < 1e-2;
  const bool moments_ok = err_mean < 1e-2 && err_cov < 1e-2;
  return {map_ok && moments_ok,
          fmt("map: |A-(I-K)|=%.3e |b-Ky|=%.3e [%s]; moments: mean %.3e cov %.3e [%s] (tol 1e-2, %d GD iterations)",
              err_a, err_b, map_ok ? "ok" : "miss", err_mean, err_cov, moments_ok ? "ok" : "miss",
              sol.trace.iterations_used)};
}

// 3. Closed-form KLD under a shared affine change of variables.
Outcome kld_invariance() {
  RandomStream rng(303);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Index d = 1 + i % 6;
    const GaussianMoments p(random_vector(d, rng), random_spd(d, rng));
    const GaussianMoments q(random_vector(d, rng), random_spd(d, rng));
    const Matrix A = random_invertible(d, rng);
    const Vector b = random_vector(d, rng, -3.0, 3.0);
    const double k0 = gaussian_kld(p, q);
    const double k1 = gaussian_kld(GaussianMoments(A * p.mean() + b, A * p.cov() * A.transpose()),
                                   GaussianMoments(A * q.mean() + b, A * q.cov() * A.transpose()));
    worst = std::max(worst, std::abs(k1 - k0) / std::max(1.0, k0));
  }
  return {worst < 1e-10, fmt("worst relative change %.2e over 100 cases (tol 1e-10)", worst)};
}

// 4. Student-t noise variance.
Outcome noise_variance() {
  RandomStream rng(404);
  const auto obs = power_model(1, 0.0);
  const Vector x = Vector::Zero(1);
  const int n = 100000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double b = obs.simulate(x, rng)(0);
    sum += b;
    sq += b * b;
  }
  const double mean = sum / n;
  const double var = (sq - n * mean * mean) / (n - 1);
  return {std::abs(var - 1.5) < 0.1, fmt("sample variance %.4f vs 1.5 (tol 0.1, %d draws)", var, n)};
}

// 5. Dynamics oracles.
Outcome dynamics_oracles() {
  Lorenz96Model::Params lp;
  lp.noise_std = 0.0;
  const Lorenz96Model lorenz(lp);
  RandomStream rng(505);
  const Vector x0 = lorenz.initial_state(rng);
  Vector euler = x0;
  const int substeps = 10000;
  for (int k = 0; k < substeps; ++k) euler += (lp.dt / substeps) * lorenz96_rhs(euler);
  const double rk4_err = (lorenz.integrate(x0) - euler).cwiseAbs().maxCoeff();
  const bool rk4_ok = rk4_err < 1e-6;
  const bool fixed_ok = lorenz.integrate(Vector::Constant(40, 8.0)) == Vector::Constant(40, 8.0);

  FisherModel::Params fp;
  fp.model_noise = false;
  const FisherModel fisher(fp);
  fp.growth = 0.0;
  const FisherModel diffusion(fp);
  Vector c = diffusion.initial_state(rng);
  double worst_mass = 0.0;
  for (int t = 0; t < 60; ++t) {
    const Vector next = diffusion.integrate(c);
    worst_mass = std::max(worst_mass, std::abs(next.sum() - c.sum()) / std::max(1.0, std::abs(c.sum())));
    c = next;
  }
  const bool mass_ok = worst_mass < 1e-10;
  const bool eq_ok = fisher.integrate(Vector::Zero(200)).isZero(0.0) &&
                     fisher.integrate(Vector::Ones(200)) == Vector::Ones(200);
  return {rk4_ok && fixed_ok && mass_ok && eq_ok,
          fmt("RK4 vs %d-substep Euler max diff %.3e (tol 1e-6) [%s]; x=8 fixed [%s]; "
              "Fisher mass drift %.2e/step (tol 1e-10) [%s]; c=0,1 fixed [%s]",
              substeps, rk4_err, rk4_ok ? "ok" : "miss", fixed_ok ? "ok" : "miss", worst_mass,
              mass_ok ? "ok" : "miss", eq_ok ? "ok" : "miss")};
}

// 6. Stopping rule.
Outcome stopping_rule() {
  const GdConfig cfg;  // step 1e-3, window 20, threshold 0.1, K_max 1000
  RandomStream rng(606);
  bool monotone = true;
  int most = 0;
  int problems = 0;
  for (const double theta : {0.0, 0.5, 1.0}) {
    const HiddenMarkovModel hmm(std::make_shared<Lorenz96Model>(), std::make_shared<PowerScaledNoiseModel>(40, [&] {
                                  PowerScaledNoiseModel::Params p;
                                  p.theta = theta;
                                  return p;
                                }()));
    for (int rep = 0; rep < 4; ++rep, ++problems) {
      Matrix x(40, 100);
      for (Index m = 0; m < 100; ++m) x.col(m) = hmm.dynamics->initial_state(rng);
      const Vector y = hmm.observation->simulate(hmm.dynamics->initial_state(rng), rng);
      const GdTrace trace = lmekf_update(StateEnsemble(x), *hmm.observation, y, cfg).trace;
      most = std::max(most, trace.iterations_used);
      for (std::size_t k = 1; k < trace.best_value_per_iteration.size(); ++k) {
        monotone = monotone && trace.best_value_per_iteration[k] <= trace.best_value_per_iteration[k - 1];
      }
    }
  }
  const FlatLikelihood flat(5);
  const int flat_iters = lmekf_update(StateEnsemble(random_matrix(5, 30, rng)), flat, Vector::Zero(5), cfg)
                             .trace.iterations_used;
  const bool ok = monotone && most <= cfg.max_iters && flat_iters == cfg.window;
  return {ok, fmt("best values non-increasing [%s] on %d problems; max iterations %d <= %d; flat likelihood stops "
                  "at %d (want %d)",
                  monotone ? "ok" : "miss", problems, most, cfg.max_iters, flat_iters, cfg.window)};
}

ExperimentConfig lorenz_config(double theta, int m, std::vector<FilterKind> filters) {
  ExperimentConfig cfg;
  cfg.system = SystemKind::Lorenz96;
  cfg.theta = theta;
  cfg.ensemble_size = m;
  cfg.trials = 20;
  cfg.time_steps = 40;
  cfg.filters = std::move(filters);
  cfg.seed = 2023;
  return cfg;
}

// 7. Desk-scale Lorenz-96 ordering.
Outcome lorenz_ordering() {
  bool ok = true;
  std::string detail;
  for (const double theta : {0.0, 0.5, 1.0}) {
    std::vector<FilterKind> filters = {FilterKind::Lmekf, FilterKind::Enkf};
    if (theta < 1.0) filters.push_back(FilterKind::Ekf);
    const ExperimentResult r = run_experiment(lorenz_config(theta, 100, filters));
    const double lm = span_bias(r, "lmekf", 10, 40);
    const double en = span_bias(r, "enkf", 10, 40);
    const bool pass = lm < en;
    ok = ok && pass;
    detail += fmt("theta=%.1f: lmekf %.3g (%d/20 trials failed) vs enkf %.3g (%d/20) [%s]", theta, lm,
                  failed_trials_by(r, "lmekf", 40), en, failed_trials_by(r, "enkf", 40), pass ? "ok" : "miss");
    if (theta < 1.0) detail += fmt(" (ekf %.3g, %d/20)", span_bias(r, "ekf", 10, 40), failed_trials_by(r, "ekf", 40));
    detail += theta < 1.0 ? "; " : "";
  }
  return {ok, detail};
}

// 8. Localization saturation.
Outcome localization_saturation() {
  RandomStream rng(808);
  const Index d = 6;
  const auto obs = power_model(d, 0.5);
  const StateEnsemble ens(random_matrix(d, 25, rng) * 3.0);
  const Vector y = obs.simulate(ens.member(0), rng);
  LocalizationConfig cfg;
  cfg.half_width = static_cast<int>(d);
  cfg.aggregation_half_width = static_cast<int>(d - 1);
  cfg.state_dim = d;
  const GdConfig gd;
  const LocalUpdate lmekf_inner = [&](const StateEnsemble& e, const ObservationModel& o, const Vector& yy,
                                      RandomStream&, std::size_t) { return lmekf_update(e, o, yy, gd).ensemble; };
  const LocalUpdate ekf_inner = [](const StateEnsemble& e, const ObservationModel& o, const Vector& yy,
                                   RandomStream&, std::size_t) { return ekf_update(e, o, yy); };
  const bool lm = localized_update(ens, obs, y, cfg, lmekf_inner, rng).members() ==
                  lmekf_update(ens, obs, y, gd).ensemble.members();
  const bool ek = localized_update(ens, obs, y, cfg, ekf_inner, rng).members() == ekf_update(ens, obs, y).members();
  return {lm && ek, fmt("d=6, l=6, k=5: lmekf bit-identical [%s], ekf bit-identical [%s]", lm ? "ok" : "miss",
                        ek ? "ok" : "miss")};
}

// 9. Small ensemble with localization.
Outcome small_ensemble() {
  ExperimentConfig cfg = lorenz_config(0.0, 20,
                                       {FilterKind::Lmekf, FilterKind::Ekf, FilterKind::Enkf, FilterKind::Pf,
                                        FilterKind::Nleaf1, FilterKind::Nleaf2});
  cfg.localization = LocalizationSettings{3, 2, false};
  const ExperimentResult r = run_experiment(cfg);
  const int failures = failed_rows(r);
  const double lm = span_bias(r, "lmekf", 10, 40);
  const double en = span_bias(r, "enkf", 10, 40);
  std::string others;
  for (const char* f : {"ekf", "pf", "nleaf1", "nleaf2"}) others += fmt(" %s %.3f", f, span_bias(r, f, 10, 40));
  return {failures == 0 && lm <= en,
          fmt("M=20, l=3, k=2, %d trials: failed rows %d; lmekf %.3f vs enkf %.3f;%s", cfg.trials, failures, lm, en,
              others.c_str())};
}

// 10. Fisher feasibility.
Outcome fisher_feasibility() {
  ExperimentConfig cfg;
  cfg.system = SystemKind::Fisher;
  cfg.ensemble_size = 50;
  cfg.trials = 1;
  cfg.time_steps = 60;
  cfg.localization = LocalizationSettings{5, 3, false};
  cfg.seed = 2023;
  const HiddenMarkovModel hmm = build_model(cfg);
  const RandomStream trial_rng = RandomStream(cfg.seed).split(0);
  RandomStream truth_rng = trial_rng.split(0);
  const Trajectory truth = simulate_truth(hmm, 60, truth_rng);

  int failures = 0;
  double slowest = 0.0;
  double total = 0.0;
  int lmekf_steps = 0;
  std::string biases;
  for (const auto& name : filter_names()) {
    const FilterKind kind = *parse_filter(name);
    Filter inner = make_filter(kind, cfg, hmm.state_dim());
    Filter timed = [&](const StateEnsemble& prior, const ObservationModel& obs, const Vector& y, RandomStream& rng) {
      const auto start = Clock::now();
      FilterStep step = inner(prior, obs, y, rng);
      const double s = seconds_since(start);
      if (kind == FilterKind::Lmekf) {
        slowest = std::max(slowest, s);
        total += s;
        ++lmekf_steps;
      }
      return step;
    };
    const FilterRun run =
        run_filter(hmm, cfg.ensemble_size, name, timed, truth, 0, trial_rng.split(1 + filter_index(kind)));
    double sum = 0.0;
    int valid = 0;
    for (const auto& rec : run.records) {
      if (rec.failed) {
        ++failures;
        biases += fmt(" %s failed at t=%d (%s)", name.c_str(), rec.time_step, rec.error.c_str());
      } else {
        sum += rec.mean_abs_bias;
        ++valid;
      }
    }
    if (!run.failed) biases += fmt(" %s %.3f", name.c_str(), sum / std::max(1, valid));
  }
  return {failures == 0 && slowest < 10.0,
          fmt("d=200, M=50, l=5, k=3, T=60: failed filters %d; lmekf step time max %.2f s, mean %.2f s (tol 10 s); "
              "mean bias:%s",
              failures, slowest, total / std::max(1, lmekf_steps), biases.c_str())};
}

// 11. Large-M baselines.
Outcome large_m_baselines() {
  RandomStream rng(1111);
  const Index m = 100000;
  const LinearGaussianObs lin{Matrix::Identity(1, 1), Matrix::Identity(1, 1), Vector::Zero(1)};
  const LinearGaussianModel linear(lin);
  const GaussianMoments prior_true(Vector::Zero(1), Matrix::Constant(1, 1, 2.0));
  const StateEnsemble ens = sample_gaussian(prior_true, m, rng);

  Matrix ysim(1, m);
  for (Index i = 0; i < m; ++i) ysim.col(i) = linear.simulate(ens.member(i), rng);
  const double k_hat = enkf_gain(ens.members(), ysim)(0, 0);
  const double k_true = kalman_gain(prior_true.cov(), lin)(0, 0);
  const bool gain_ok = std::abs(k_hat - k_true) < 0.02;

  // PF against quadrature for the nonlinear model.
  const auto nonlinear = power_model(1, 0.0);
  const double y_pf = 1.5;
  const StateEnsemble pf_prior = sample_gaussian(GaussianMoments(Vector::Constant(1, 2.0), Matrix::Identity(1, 1)), m, rng);
  double num = 0.0;
  double den = 0.0;
  const int nodes = 200000;
  for (int i = 0; i < nodes; ++i) {
    const double x = -8.0 + (i + 0.5) * 20.0 / nodes;
    const double w = std::exp(-0.5 * (x - 2.0) * (x - 2.0) -
                              nonlinear.nll(Vector::Constant(1, x), Vector::Constant(1, y_pf)));
    num += x * w;
    den += w;
  }
  const double quad = num / den;
  const double pf_mean = pf_update(pf_prior, nonlinear, Vector::Constant(1, y_pf), rng).mean()(0);
  const bool pf_ok = std::abs(pf_mean - quad) < 0.02;

  // NLEAF-1 against the Kalman posterior mean.
  const Vector y = Vector::Constant(1, 1.2);
  const double kalman_mean = kalman_posterior(prior_true, lin, y).mean()(0);
  const double nleaf_mean = nleaf_update(ens, linear, y, 1, rng).mean()(0);
  const bool nleaf_ok = std::abs(nleaf_mean - kalman_mean) < 0.02;

  return {gain_ok && pf_ok && nleaf_ok,
          fmt("M=1e5, d=1: enkf gain %.4f vs %.4f [%s]; pf mean %.4f vs quadrature %.4f [%s]; nleaf1 mean %.4f vs "
              "kalman %.4f [%s] (tol 0.02)",
              k_hat, k_true, gain_ok ? "ok" : "miss", pf_mean, quad, pf_ok ? "ok" : "miss", nleaf_mean, kalman_mean,
              nleaf_ok ? "ok" : "miss")};
}

struct Criterion {
  const char* title;
  std::function<Outcome()> run;
  double budget_s;  // runtime budget, 0 = none
};

const std::map<int, Criterion>& criteria() {
  static const std::map<int, Criterion> all = {
      {1, {"gradient correctness", gradient_correctness, 60.0}},
      {2, {"Kalman equivalence", kalman_equivalence, 120.0}},
      {3, {"KLD affine invariance", kld_invariance, 0.0}},
      {4, {"Student-t noise variance", noise_variance, 0.0}},
      {5, {"dynamics oracles", dynamics_oracles, 0.0}},
      {6, {"stopping rule", stopping_rule, 0.0}},
      {7, {"Lorenz-96 ordering, M=100", lorenz_ordering, 1800.0}},
      {8, {"localization saturation", localization_saturation, 0.0}},
      {9, {"Lorenz-96 small ensemble with localization", small_ensemble, 0.0}},
      {10, {"Fisher feasibility", fisher_feasibility, 0.0}},
      {11, {"large-M baselines", large_m_baselines, 0.0}},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (criteria().count(id) == 0) {
      std::fprintf(stderr, "unknown criterion '%s' (1-%zu)\n", argv[i], criteria().size());
      return 2;
    }
    selected.push_back(id);
  }
  if (selected.empty()) {
    for (const auto& [id, _] : criteria()) selected.push_back(id);
  }

  int failures = 0;
  for (const int id : selected) {
    const Criterion& c = criteria().at(id);
    const auto start = Clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = seconds_since(start);
    std::string timing = fmt("%.1f s", elapsed);
    if (c.budget_s > 0.0) {
      const bool in_budget = elapsed < c.budget_s;
      out.pass = out.pass && in_budget;
      timing += fmt(" of %.0f s budget%s", c.budget_s, in_budget ? "" : " EXCEEDED");
    }
    std::printf("[%s] C%d %s: %s (%s)\n", out.pass ? "PASS" : "FAIL", id, c.title, out.detail.c_str(), timing.c_str());
    std::fflush(stdout);
    failures += out.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
