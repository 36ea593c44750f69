#pragma once

#include <memory>
#include <span>

#include "lmekf/ensemble.hpp"
#include "lmekf/random.hpp"

namespace lmekf {

/// Linear-Gaussian observation y = H x + offset + eps, eps ~ N(0, R).
struct LinearGaussianObs {
  Matrix H;
  Matrix R;
  Vector offset;  ///< empty means zero

  Index obs_dim() const { return H.rows(); }
  Index state_dim() const { return H.cols(); }
};

/// Likelihood interface used by every filter: simulate y | x, evaluate the
/// negative log-likelihood l(x) = -log g(y | x) and its state gradient.
///
/// nll and nll_gradient refer to the same density; nll includes the full
/// normalizing constant so values are true negative log-densities.
class ObservationModel {
 public:
  virtual ~ObservationModel() = default;

  virtual Index obs_dim() const = 0;

  virtual Vector simulate(const Vector& x, RandomStream& rng) const = 0;
  virtual double nll(const Vector& x, const Vector& y) const = 0;
  virtual Vector nll_gradient(const Vector& x, const Vector& y) const = 0;

  /// nll for every column of X against one observation.
  virtual Vector nll_batch(const Matrix& X, const Vector& y) const;

  /// Fills grad with dl/dx for every column of X and returns sum_m l(x_m).
  virtual double nll_gradient_batch(const Matrix& X, const Vector& y, Matrix& grad) const;

  /// Model for the observation components aligned with the given state
  /// indices (sliding-window localization). Requires a one-to-one alignment
  /// between observation and state components.
  virtual std::unique_ptr<ObservationModel> restrict_to(std::span<const Index> indices) const = 0;

  /// First-order linear-Gaussian approximation around x0 with matching
  /// conditional variance (exact for linear-Gaussian models).
  virtual LinearGaussianObs linearize(const Vector& x0) const = 0;
};

/// Componentwise M(x) = 0.1 x^2.
Vector quad_map(const Vector& x);
/// Diagonal of the Jacobian of quad_map: 0.2 x.
Vector quad_map_jacobian(const Vector& x);

/// y = M(x) + a M(x)^theta o beta with M(x) = 0.1 x^2 and beta i.i.d. standard
/// Student-t(nu) per component (nu = 6 gives variance 1.5).
///
/// The noise scale s_i = a M(x)_i^theta is floored at `scale_floor` inside
/// nll / nll_gradient so the objective stays finite where M(x)_i = 0.
class PowerScaledNoiseModel final : public ObservationModel {
 public:
  struct Params {
    double theta = 0.0;
    double a = 1.0;
    double noise_dof = 6.0;
    double scale_floor = 1e-8;
    bool floor_scale = true;     ///< when false, s_i < scale_floor throws FilterError
    bool simulate_noise = true;  ///< test hook: false makes simulate return M(x)
  };

  PowerScaledNoiseModel(Index obs_dim, Params params);

  const Params& params() const { return params_; }
  /// Variance of one beta component, nu / (nu - 2).
  double noise_variance() const;
  /// Additive constant of the per-component Student-t log density.
  double log_normalizer() const { return log_norm_; }

  Index obs_dim() const override { return dim_; }
  Vector simulate(const Vector& x, RandomStream& rng) const override;
  double nll(const Vector& x, const Vector& y) const override;
  Vector nll_gradient(const Vector& x, const Vector& y) const override;
  Vector nll_batch(const Matrix& X, const Vector& y) const override;
  double nll_gradient_batch(const Matrix& X, const Vector& y, Matrix& grad) const override;
  std::unique_ptr<ObservationModel> restrict_to(std::span<const Index> indices) const override;
  LinearGaussianObs linearize(const Vector& x0) const override;

 private:
  Eigen::ArrayXXd scales(const Eigen::ArrayXXd& m) const;
  void check_args(Index xdim, const Vector& y) const;

  Index dim_;
  Params params_;
  double log_norm_;
};

/// g(y | x) = N(H x + offset, R).
class LinearGaussianModel final : public ObservationModel {
 public:
  explicit LinearGaussianModel(LinearGaussianObs obs, bool simulate_noise = true);

  const LinearGaussianObs& linear() const { return obs_; }

  Index obs_dim() const override { return obs_.obs_dim(); }
  Vector simulate(const Vector& x, RandomStream& rng) const override;
  double nll(const Vector& x, const Vector& y) const override;
  Vector nll_gradient(const Vector& x, const Vector& y) const override;
  Vector nll_batch(const Matrix& X, const Vector& y) const override;
  std::unique_ptr<ObservationModel> restrict_to(std::span<const Index> indices) const override;
  LinearGaussianObs linearize(const Vector& x0) const override;

 private:
  LinearGaussianObs obs_;
  bool simulate_noise_;
  Eigen::LLT<Matrix> r_llt_;
  Matrix r_factor_;
  double log_norm_;
};

}  // namespace lmekf
