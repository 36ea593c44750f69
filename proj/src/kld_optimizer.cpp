#include "lmekf/kld_optimizer.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>

#include "lmekf/errors.hpp"

namespace lmekf {

void GdConfig::validate() const {
  if (!(step_size > 0.0)) throw std::invalid_argument("GdConfig: step_size must be positive");
  if (window < 1) throw std::invalid_argument("GdConfig: window must be positive");
  if (!(threshold > 0.0)) throw std::invalid_argument("GdConfig: threshold must be positive");
  if (max_iters < 1) throw std::invalid_argument("GdConfig: max_iters must be positive");
  if (window >= max_iters) throw std::invalid_argument("GdConfig: window must be smaller than max_iters");
}

void GdTrace::write_csv(std::ostream& out) const {
  out << "iteration,best_value\n";
  const auto old_precision = out.precision(17);
  for (std::size_t k = 0; k < best_value_per_iteration.size(); ++k) {
    out << k << ',' << best_value_per_iteration[k] << '\n';
  }
  out.precision(old_precision);
}

KldObjective::KldObjective(const GaussianMoments& prior_moments, const StateEnsemble& prior_ens,
                           const ObservationModel& obs, Vector y)
    : mu_(prior_moments.mean()), ensemble_(prior_ens.members()), obs_(obs), y_(std::move(y)) {
  const Index d = prior_moments.dim();
  if (prior_ens.dim() != d) {
    throw std::invalid_argument("KldObjective: prior moments and ensemble dimensions differ");
  }
  if (y_.size() != obs.obs_dim()) {
    throw std::invalid_argument("KldObjective: observation size does not match the model");
  }
  const RegularizedCovariance cov(prior_moments.cov());
  precision_ = cov.inverse();
  precision_ = (0.5 * (precision_ + precision_.transpose())).eval();
  second_moment_ = cov.matrix() + mu_ * mu_.transpose();
  constant_ = 0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + cov.log_det());
}

std::optional<double> KldObjective::try_evaluate(const AffineMap& map, AffineGradient* grad) const {
  const Index d = dim();
  if (map.A.rows() != d || map.A.cols() != d || map.b.size() != d) {
    throw std::invalid_argument("KldObjective: map dimension mismatch");
  }
  if (!map.A.allFinite() || !map.b.allFinite()) {
    return std::nullopt;
  }
  const Eigen::PartialPivLU<Matrix> lu(map.A);
  if (!(lu.rcond() > 1e-14)) {
    return std::nullopt;
  }
  const double log_abs_det = lu.matrixLU().diagonal().array().abs().log().sum();

  const Matrix pa = precision_ * map.A;
  const Matrix pas = pa * second_moment_;
  const Vector shift = map.b - mu_;
  const Vector a_mu = map.A * mu_;
  const Vector p_shift = precision_ * shift;

  const double quad = 0.5 * pas.cwiseProduct(map.A).sum();
  const double cross = p_shift.dot(a_mu + 0.5 * shift);

  Matrix pushed = map.A * ensemble_;
  pushed.colwise() += map.b;
  const double inv_m = 1.0 / static_cast<double>(ensemble_.cols());

  double likelihood = 0.0;
  if (grad == nullptr) {
    likelihood = obs_.nll_batch(pushed, y_).sum() * inv_m;
  } else {
    Matrix g;
    likelihood = obs_.nll_gradient_batch(pushed, y_, g) * inv_m;
    grad->dA = pas + p_shift * mu_.transpose() - lu.inverse().transpose() + (g * ensemble_.transpose()) * inv_m;
    grad->db = precision_ * (a_mu + shift) + g.rowwise().sum() * inv_m;
    if (!grad->dA.allFinite() || !grad->db.allFinite()) {
      return std::nullopt;
    }
  }

  const double value = quad + cross - log_abs_det + likelihood + constant_;
  if (!std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

double KldObjective::value(const AffineMap& map) const {
  const auto v = try_evaluate(map, nullptr);
  if (!v) {
    throw FilterError("KldObjective: A is singular or the objective is not finite");
  }
  return *v;
}

AffineGradient KldObjective::gradient(const AffineMap& map) const {
  AffineGradient g;
  if (!try_evaluate(map, &g)) {
    throw FilterError("KldObjective: A is singular or the gradient is not finite");
  }
  return g;
}

double objective(const AffineMap& map, const GaussianMoments& prior_moments, const StateEnsemble& prior_ens,
                 const ObservationModel& obs, const Vector& y) {
  return KldObjective(prior_moments, prior_ens, obs, y).value(map);
}

AffineGradient objective_gradient(const AffineMap& map, const GaussianMoments& prior_moments,
                                  const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y) {
  return KldObjective(prior_moments, prior_ens, obs, y).gradient(map);
}

KldSolution minimize_kld(const KldObjective& objective, const GdConfig& cfg, const AffineMap& init) {
  cfg.validate();
  constexpr int kMaxHalvings = 30;

  AffineMap current = init;
  AffineGradient grad;
  const auto f0 = objective.try_evaluate(current, &grad);
  if (!f0) {
    throw FilterError("minimize_kld: initial map is singular or gives a non-finite objective");
  }

  KldSolution sol{current, {}};
  GdTrace& trace = sol.trace;
  trace.best_value_per_iteration.reserve(static_cast<std::size_t>(cfg.max_iters) + 1);
  trace.best_value_per_iteration.push_back(*f0);
  double best = *f0;

  int k = 0;
  while (k < cfg.max_iters) {
    ++k;
    double step = cfg.step_size;
    AffineMap candidate;
    AffineGradient candidate_grad;
    std::optional<double> value;
    for (int halving = 0; halving <= kMaxHalvings; ++halving) {
      candidate.A = current.A - step * grad.dA;
      candidate.b = current.b - step * grad.db;
      value = objective.try_evaluate(candidate, &candidate_grad);
      if (value) break;
      step *= 0.5;
      ++trace.step_halvings;
    }
    if (!value) {
      throw FilterError("minimize_kld: iterate " + std::to_string(k) + " stayed singular after " +
                        std::to_string(kMaxHalvings) + " step halvings");
    }
    current = std::move(candidate);
    grad = std::move(candidate_grad);
    if (*value < best) {
      best = *value;
      sol.map = current;
    }
    trace.best_value_per_iteration.push_back(best);

    if (k >= cfg.window) {
      const double improvement = trace.best_value_per_iteration[static_cast<std::size_t>(k - cfg.window)] - best;
      if (improvement < cfg.threshold) break;
    }
  }
  trace.iterations_used = k;
  trace.final_objective = best;
  return sol;
}

KldSolution minimize_kld(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y,
                         const GdConfig& cfg, const AffineMap& init) {
  const KldObjective objective(empirical_moments(prior_ens), prior_ens, obs, y);
  return minimize_kld(objective, cfg, init);
}

LmekfResult lmekf_update(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y,
                         const GdConfig& cfg) {
  KldSolution sol = minimize_kld(prior_ens, obs, y, cfg, AffineMap::identity(prior_ens.dim()));
  StateEnsemble posterior = apply_affine(sol.map, prior_ens);
  return {std::move(posterior), std::move(sol.trace), std::move(sol.map)};
}

}  // namespace lmekf
