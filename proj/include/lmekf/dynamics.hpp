#pragma once

#include <memory>
#include <string>

#include "lmekf/ensemble.hpp"
#include "lmekf/observation.hpp"
#include "lmekf/random.hpp"

namespace lmekf {

/// Markov transition x_t ~ f(. | x_{t-1}) plus an initial-state sampler.
class DynamicalModel {
 public:
  virtual ~DynamicalModel() = default;

  virtual Index state_dim() const = 0;
  virtual std::string name() const = 0;
  virtual Vector step(const Vector& x, RandomStream& rng) const = 0;
  virtual Vector initial_state(RandomStream& rng) const = 0;
};

/// Lorenz-96 tendency (x_{n+1} - x_{n-2}) x_{n-1} - x_n + F with cyclic indices.
Vector lorenz96_rhs(const Vector& x, double forcing = 8.0);

/// Lorenz-96 advanced by one classical RK4 step plus i.i.d. N(0, noise_std^2)
/// model noise per component. Initial states are i.i.d. U[init_low, init_high].
class Lorenz96Model final : public DynamicalModel {
 public:
  struct Params {
    Index dim = 40;
    double forcing = 8.0;
    double dt = 0.05;
    double noise_std = 1.0;  ///< 0 suppresses model noise
    double init_low = 1.0;
    double init_high = 10.0;
  };

  Lorenz96Model() : Lorenz96Model(Params{}) {}
  explicit Lorenz96Model(Params params);

  const Params& params() const { return params_; }
  Vector rhs(const Vector& x) const { return lorenz96_rhs(x, params_.forcing); }
  /// Noise-free RK4 step.
  Vector integrate(const Vector& x) const;

  Index state_dim() const override { return params_.dim; }
  std::string name() const override { return "lorenz96"; }
  Vector step(const Vector& x, RandomStream& rng) const override;
  Vector initial_state(RandomStream& rng) const override;

 private:
  Params params_;
};

/// Fisher (KPP) equation c_t = D c_xx + r c (1 - c) on [0, L] with zero-flux
/// boundaries, explicit in time.
///
/// Grid: x_i = i dx, dx = L / (N - 1); dt from D dt / dx^2 = stability.
/// Diffusion uses the central second difference with mirror ghost values
/// c_{-1} = c_0 and c_N = c_{N-1} (zero flux across the end faces), so the
/// stencil is symmetric and conserves sum_i c_i exactly. Each step adds a draw
/// from N(0, C), C_ij = noise_amplitude * exp(-(x_i - x_j)^2 / L).
class FisherModel final : public DynamicalModel {
 public:
  struct Params {
    double diffusion = 0.001;
    double growth = 0.1;
    double length = 2.0;
    Index grid_points = 200;
    double stability = 0.1;
    double noise_amplitude = 0.3;
    bool model_noise = true;
    double init_noise_halfwidth = 5.0;
  };

  FisherModel() : FisherModel(Params{}) {}
  explicit FisherModel(Params params);

  const Params& params() const { return params_; }
  double dx() const { return dx_; }
  double dt() const { return dt_; }
  Vector grid() const;
  /// Noise-free initial condition f(x): a hat of height 1 centered at L/2.
  double initial_profile(double x) const;
  const Matrix& noise_covariance() const { return noise_cov_; }
  /// One explicit step without model noise.
  Vector integrate(const Vector& c) const;

  Index state_dim() const override { return params_.grid_points; }
  std::string name() const override { return "fisher"; }
  Vector step(const Vector& c, RandomStream& rng) const override;
  Vector initial_state(RandomStream& rng) const override;

 private:
  Params params_;
  double dx_;
  double dt_;
  Matrix noise_cov_;
  Matrix noise_factor_;  // noise_cov = factor * factor^T
};

/// Truth/observation generator: dynamics paired with an observation model.
struct HiddenMarkovModel {
  std::shared_ptr<const DynamicalModel> dynamics;
  std::shared_ptr<const ObservationModel> observation;

  HiddenMarkovModel(std::shared_ptr<const DynamicalModel> dyn, std::shared_ptr<const ObservationModel> obs);

  Index state_dim() const { return dynamics->state_dim(); }
};

inline Vector initial_sampler(const DynamicalModel& model, RandomStream& rng) { return model.initial_state(rng); }

}  // namespace lmekf
