#include "lmekf/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace lmekf {

Vector lorenz96_rhs(const Vector& x, double forcing) {
  const Index n = x.size();
  if (n < 4) {
    throw std::invalid_argument("lorenz96_rhs: need at least 4 components");
  }
  Vector dx(n);
  for (Index i = 0; i < n; ++i) {
    const double next = x((i + 1) % n);
    const double prev = x((i + n - 1) % n);
    const double prev2 = x((i + n - 2) % n);
    dx(i) = (next - prev2) * prev - x(i) + forcing;
  }
  return dx;
}

Lorenz96Model::Lorenz96Model(Params params) : params_(params) {
  if (params_.dim < 4) throw std::invalid_argument("Lorenz96Model: dim must be at least 4");
  if (!(params_.dt > 0.0)) throw std::invalid_argument("Lorenz96Model: dt must be positive");
  if (params_.noise_std < 0.0) throw std::invalid_argument("Lorenz96Model: noise_std must be nonnegative");
}

Vector Lorenz96Model::integrate(const Vector& x) const {
  const double h = params_.dt;
  const Vector k1 = rhs(x);
  const Vector k2 = rhs(x + 0.5 * h * k1);
  const Vector k3 = rhs(x + 0.5 * h * k2);
  const Vector k4 = rhs(x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vector Lorenz96Model::step(const Vector& x, RandomStream& rng) const {
  Vector next = integrate(x);
  if (params_.noise_std > 0.0) {
    for (Index i = 0; i < next.size(); ++i) {
      next(i) += params_.noise_std * rng.normal();
    }
  }
  return next;
}

Vector Lorenz96Model::initial_state(RandomStream& rng) const {
  Vector x(params_.dim);
  for (Index i = 0; i < x.size(); ++i) {
    x(i) = rng.uniform(params_.init_low, params_.init_high);
  }
  return x;
}

FisherModel::FisherModel(Params params) : params_(params) {
  if (params_.grid_points < 3) throw std::invalid_argument("FisherModel: need at least 3 grid points");
  if (!(params_.diffusion > 0.0) || !(params_.length > 0.0)) {
    throw std::invalid_argument("FisherModel: diffusion and length must be positive");
  }
  if (!(params_.stability > 0.0) || params_.stability > 0.5) {
    throw std::invalid_argument("FisherModel: explicit scheme needs 0 < D dt / dx^2 <= 0.5");
  }
  dx_ = params_.length / static_cast<double>(params_.grid_points - 1);
  dt_ = params_.stability * dx_ * dx_ / params_.diffusion;

  const Vector xs = grid();
  const Index n = params_.grid_points;
  noise_cov_.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double diff = xs(i) - xs(j);
      noise_cov_(i, j) = params_.noise_amplitude * std::exp(-diff * diff / params_.length);
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(noise_cov_);
  noise_factor_ = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Vector FisherModel::grid() const {
  return Vector::LinSpaced(params_.grid_points, 0.0, params_.length);
}

double FisherModel::initial_profile(double x) const {
  const double l = params_.length;
  if (x < 0.25 * l) return 0.0;
  if (x < 0.5 * l) return 4.0 * x / l - 1.0;
  if (x < 0.75 * l) return 3.0 - 4.0 * x / l;
  return 0.0;
}

Vector FisherModel::integrate(const Vector& c) const {
  const Index n = params_.grid_points;
  if (c.size() != n) throw std::invalid_argument("FisherModel: state size mismatch");
  const double lambda = params_.stability;
  Vector next(n);
  for (Index i = 0; i < n; ++i) {
    const double left = c(i == 0 ? 0 : i - 1);
    const double right = c(i == n - 1 ? n - 1 : i + 1);
    const double diffusion = lambda * (left - 2.0 * c(i) + right);
    const double reaction = dt_ * params_.growth * c(i) * (1.0 - c(i));
    next(i) = c(i) + diffusion + reaction;
  }
  return next;
}

Vector FisherModel::step(const Vector& c, RandomStream& rng) const {
  Vector next = integrate(c);
  if (params_.model_noise) {
    Vector z(next.size());
    for (Index i = 0; i < z.size(); ++i) {
      z(i) = rng.normal();
    }
    next += noise_factor_ * z;
  }
  return next;
}

Vector FisherModel::initial_state(RandomStream& rng) const {
  const Vector xs = grid();
  Vector c(xs.size());
  for (Index i = 0; i < xs.size(); ++i) {
    c(i) = initial_profile(xs(i)) + rng.uniform(-params_.init_noise_halfwidth, params_.init_noise_halfwidth);
  }
  return c;
}

HiddenMarkovModel::HiddenMarkovModel(std::shared_ptr<const DynamicalModel> dyn,
                                     std::shared_ptr<const ObservationModel> obs)
    : dynamics(std::move(dyn)), observation(std::move(obs)) {
  if (!dynamics || !observation) {
    throw std::invalid_argument("HiddenMarkovModel: dynamics and observation are required");
  }
  if (dynamics->state_dim() != observation->obs_dim()) {
    throw std::invalid_argument("HiddenMarkovModel: observation components must align with state components");
  }
}

}  // namespace lmekf
