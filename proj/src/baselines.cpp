#include "lmekf/baselines.hpp"

#include <cmath>
#include <stdexcept>

#include "lmekf/errors.hpp"

namespace lmekf {

namespace {

struct WeightedMoments {
  Vector mean;
  Matrix cov;
};

WeightedMoments weighted_moments(const Matrix& X, const Vector& w) {
  WeightedMoments out;
  out.mean = X * w;
  const Matrix centered = X.colwise() - out.mean;
  out.cov = centered * w.asDiagonal() * centered.transpose();
  return out;
}

Vector offset_or_zero(const LinearGaussianObs& obs) {
  return obs.offset.size() == 0 ? Vector::Zero(obs.obs_dim()) : obs.offset;
}

// Inverse symmetric square root with eigenvalues floored at 1e-8 * trace / d.
// Returns false when the matrix carries no spread at all.
bool inverse_sqrt(const Matrix& c, Matrix& out) {
  const double trace = c.trace();
  if (!(trace > 0.0) || !std::isfinite(trace)) {
    return false;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (c + c.transpose()));
  const double floor = 1e-8 * trace / static_cast<double>(c.rows());
  const Vector inv_root = eig.eigenvalues().cwiseMax(floor).cwiseSqrt().cwiseInverse();
  out = eig.eigenvectors() * inv_root.asDiagonal() * eig.eigenvectors().transpose();
  return true;
}

}  // namespace

Matrix kalman_gain(const Matrix& prior_cov, const LinearGaussianObs& obs) {
  if (obs.H.cols() != prior_cov.rows() || obs.R.rows() != obs.H.rows()) {
    throw std::invalid_argument("kalman_gain: dimension mismatch");
  }
  const Matrix innovation = obs.H * prior_cov * obs.H.transpose() + obs.R;
  // Conditioning is judged on the unit-diagonal rescaling, so that widely
  // different per-component variances are not mistaken for singularity.
  const Vector diag = innovation.diagonal();
  if (!(diag.array() > 0.0).all() || !diag.allFinite()) {
    throw FilterError("kalman_gain: singular innovation covariance");
  }
  const Vector inv_sd = diag.cwiseSqrt().cwiseInverse();
  const Matrix scaled = inv_sd.asDiagonal() * innovation * inv_sd.asDiagonal();
  const Eigen::LDLT<Matrix> ldlt(0.5 * (scaled + scaled.transpose()));
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14)) {
    throw FilterError("kalman_gain: singular innovation covariance");
  }
  const Matrix rhs = inv_sd.asDiagonal() * (obs.H * prior_cov);
  return (inv_sd.asDiagonal() * ldlt.solve(rhs)).transpose();
}

AffineMap analytic_kalman_map(const GaussianMoments& prior_moments, const LinearGaussianObs& obs, const Vector& y) {
  const Index d = prior_moments.dim();
  const Matrix k = kalman_gain(prior_moments.cov(), obs);
  return {Matrix::Identity(d, d) - k * obs.H, k * (y - offset_or_zero(obs))};
}

GaussianMoments kalman_posterior(const GaussianMoments& prior_moments, const LinearGaussianObs& obs, const Vector& y) {
  const Index d = prior_moments.dim();
  const Matrix k = kalman_gain(prior_moments.cov(), obs);
  const Matrix a = Matrix::Identity(d, d) - k * obs.H;
  return GaussianMoments(a * prior_moments.mean() + k * (y - offset_or_zero(obs)), a * prior_moments.cov());
}

StateEnsemble ekf_update(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y) {
  const GaussianMoments prior = empirical_moments(prior_ens);
  const LinearGaussianObs lin = obs.linearize(prior.mean());
  return apply_affine(analytic_kalman_map(prior, lin, y), prior_ens);
}

Matrix enkf_gain(const Matrix& X, const Matrix& Y) {
  if (X.cols() != Y.cols() || X.cols() < 2) {
    throw std::invalid_argument("enkf_gain: need matching member counts >= 2");
  }
  const double denom = static_cast<double>(X.cols() - 1);
  const Matrix xa = X.colwise() - X.rowwise().mean();
  const Matrix ya = Y.colwise() - Y.rowwise().mean();
  const Matrix c_xy = xa * ya.transpose() / denom;
  const Matrix c_yy = ya * ya.transpose() / denom;
  const RegularizedCovariance cyy(c_yy);
  return cyy.solve(c_xy.transpose()).transpose();
}

StateEnsemble stochastic_enkf_update(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y,
                                     RandomStream& rng) {
  const Matrix& x = prior_ens.members();
  Matrix ysim(obs.obs_dim(), x.cols());
  for (Index m = 0; m < x.cols(); ++m) {
    ysim.col(m) = obs.simulate(x.col(m), rng);
  }
  const Matrix k = enkf_gain(x, ysim);
  Matrix innovations = -ysim;
  innovations.colwise() += y;
  return StateEnsemble(x + k * innovations);
}

Vector importance_weights(const Vector& nll_values) {
  const double lowest = nll_values.minCoeff();
  if (!std::isfinite(lowest) || nll_values.hasNaN()) {
    throw FilterError("importance weights are undefined (non-finite log-likelihood)");
  }
  Vector w = (-(nll_values.array() - lowest)).exp().matrix();
  const double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw FilterError("importance weights underflowed to zero (degenerate ensemble)");
  }
  return w / total;
}

WeightedEnsemble reweight(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y) {
  return {prior_ens.members(), importance_weights(obs.nll_batch(prior_ens.members(), y))};
}

std::vector<Index> systematic_resample(const Vector& weights, double u) {
  const Index n = weights.size();
  std::vector<Index> picks(static_cast<std::size_t>(n));
  double cumulative = weights(0);
  Index j = 0;
  for (Index i = 0; i < n; ++i) {
    const double position = (static_cast<double>(i) + u) / static_cast<double>(n);
    while (position >= cumulative && j < n - 1) {
      ++j;
      cumulative += weights(j);
    }
    picks[static_cast<std::size_t>(i)] = j;
  }
  return picks;
}

StateEnsemble pf_update(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y,
                        RandomStream& rng) {
  const WeightedEnsemble weighted = reweight(prior_ens, obs, y);
  const std::vector<Index> picks = systematic_resample(weighted.weights, rng.uniform(0.0, 1.0));
  Matrix out(prior_ens.dim(), prior_ens.size());
  for (std::size_t m = 0; m < picks.size(); ++m) {
    out.col(static_cast<Index>(m)) = weighted.members.col(picks[m]);
  }
  return StateEnsemble(std::move(out));
}

Vector conditional_mean(const Matrix& X, const ObservationModel& obs, const Vector& y_cond, NleafDiagnostics* diag) {
  try {
    return X * importance_weights(obs.nll_batch(X, y_cond));
  } catch (const FilterError&) {
    if (diag != nullptr) ++diag->zero_weight_fallbacks;
    return X.rowwise().mean();
  }
}

StateEnsemble nleaf_update(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y, int order,
                           RandomStream& rng, NleafDiagnostics* diag) {
  if (order != 1 && order != 2) {
    throw std::invalid_argument("nleaf_update: order must be 1 or 2");
  }
  NleafDiagnostics local;
  NleafDiagnostics& counters = diag != nullptr ? *diag : local;
  const Matrix& x = prior_ens.members();
  const Index n = x.cols();

  Matrix ysim(obs.obs_dim(), n);
  for (Index m = 0; m < n; ++m) {
    ysim.col(m) = obs.simulate(x.col(m), rng);
  }

  if (order == 1) {
    const Vector target = conditional_mean(x, obs, y, &counters);
    Matrix out(x.rows(), n);
    for (Index m = 0; m < n; ++m) {
      out.col(m) = x.col(m) + target - conditional_mean(x, obs, ysim.col(m), &counters);
    }
    return StateEnsemble(std::move(out));
  }

  // Second order: shift to E[x|y] and rescale the conditional anomaly.
  auto moments_given = [&](const Vector& y_cond) -> WeightedMoments {
    try {
      return weighted_moments(x, importance_weights(obs.nll_batch(x, y_cond)));
    } catch (const FilterError&) {
      ++counters.zero_weight_fallbacks;
      const Vector uniform = Vector::Constant(n, 1.0 / static_cast<double>(n));
      return weighted_moments(x, uniform);
    }
  };
  const WeightedMoments target = moments_given(y);
  const Matrix target_root = symmetric_sqrt(target.cov);
  Matrix out(x.rows(), n);
  Matrix inv_root;
  for (Index m = 0; m < n; ++m) {
    const WeightedMoments cond = moments_given(ysim.col(m));
    const Vector anomaly = x.col(m) - cond.mean;
    if (inverse_sqrt(cond.cov, inv_root)) {
      out.col(m) = target.mean + target_root * (inv_root * anomaly);
    } else {
      ++counters.covariance_fallbacks;
      out.col(m) = target.mean + anomaly;
    }
  }
  return StateEnsemble(std::move(out));
}

}  // namespace lmekf
