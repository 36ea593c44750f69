#pragma once

#include <vector>

#include "lmekf/ensemble.hpp"
#include "lmekf/observation.hpp"
#include "lmekf/random.hpp"

namespace lmekf {

/// Kalman gain K = S H^T (H S H^T + R)^-1 for prior covariance S.
/// Throws FilterError when the innovation covariance is singular.
Matrix kalman_gain(const Matrix& prior_cov, const LinearGaussianObs& obs);

/// Memberwise Kalman map x -> (I - K H) x + K (y - offset).
///
/// The pushed mean equals the analytic posterior mean. The pushed covariance
/// is (I - KH) S (I - KH)^T, which is smaller than the analytic posterior
/// covariance (I - KH) S unless K H = 0.
AffineMap analytic_kalman_map(const GaussianMoments& prior_moments, const LinearGaussianObs& obs, const Vector& y);

/// Analytic posterior N(mu, Sigma) of a Gaussian prior under a linear-Gaussian
/// observation.
GaussianMoments kalman_posterior(const GaussianMoments& prior_moments, const LinearGaussianObs& obs, const Vector& y);

/// Ensemble version of analytic_kalman_map: empirical prior moments, the
/// observation linearized at the prior mean, the map applied to all members.
StateEnsemble ekf_update(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y);

/// Empirical gain C_xy C_yy^-1 from prior members X (d x M) and simulated
/// observations Y (p x M); C_yy is jittered if singular.
Matrix enkf_gain(const Matrix& X, const Matrix& Y);

/// Stochastic EnKF with an empirical gain: y_m ~ g(.|x_m), K = C_xy C_yy^-1,
/// x_m <- x_m + K (y - y_m).
StateEnsemble stochastic_enkf_update(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y,
                                     RandomStream& rng);

struct WeightedEnsemble {
  Matrix members;  ///< d x M
  Vector weights;  ///< nonnegative, sum to one
};

/// Normalized weights w_m proportional to exp(-nll_m), computed with a
/// min-shift. Throws FilterError if every weight vanishes or is undefined.
Vector importance_weights(const Vector& nll_values);

WeightedEnsemble reweight(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y);

/// Systematic resampling with offset u in [0, 1): returns M member indices.
std::vector<Index> systematic_resample(const Vector& weights, double u);

/// Bootstrap particle filter update: likelihood weights, then systematic
/// resampling back to M equally weighted members.
StateEnsemble pf_update(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y,
                        RandomStream& rng);

struct NleafDiagnostics {
  int zero_weight_fallbacks = 0;  ///< conditional mean replaced by prior mean
  int covariance_fallbacks = 0;   ///< order-2 scaling replaced by the identity
};

/// Conditional mean E[x | y'] by importance weighting the prior members with
/// exp(-l(x_j; y')). Falls back to the prior mean when all weights vanish.
Vector conditional_mean(const Matrix& X, const ObservationModel& obs, const Vector& y_cond,
                        NleafDiagnostics* diag = nullptr);

/// Nonlinear ensemble adjustment filter (plain importance-sampling estimator,
/// no kernel smoothing).
///
/// order 1: x_m <- x_m + E[x|y] - E[x|y_m]
/// order 2: x_m <- E[x|y] + C(y)^{1/2} C(y_m)^{-1/2} (x_m - E[x|y_m])
///
/// with y_m ~ g(.|x_m) and C(.) the importance-weighted conditional covariance.
StateEnsemble nleaf_update(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y, int order,
                           RandomStream& rng, NleafDiagnostics* diag = nullptr);

}  // namespace lmekf
