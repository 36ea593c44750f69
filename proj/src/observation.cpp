#include "lmekf/observation.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lmekf/errors.hpp"

namespace lmekf {

Vector ObservationModel::nll_batch(const Matrix& X, const Vector& y) const {
  Vector out(X.cols());
  for (Index m = 0; m < X.cols(); ++m) {
    out(m) = nll(X.col(m), y);
  }
  return out;
}

double ObservationModel::nll_gradient_batch(const Matrix& X, const Vector& y, Matrix& grad) const {
  grad.resize(X.rows(), X.cols());
  double total = 0.0;
  for (Index m = 0; m < X.cols(); ++m) {
    const Vector x = X.col(m);
    total += nll(x, y);
    grad.col(m) = nll_gradient(x, y);
  }
  return total;
}

Vector quad_map(const Vector& x) { return 0.1 * x.array().square(); }

Vector quad_map_jacobian(const Vector& x) { return 0.2 * x; }

// ---------------------------------------------------------------------------
// PowerScaledNoiseModel

PowerScaledNoiseModel::PowerScaledNoiseModel(Index obs_dim, Params params) : dim_(obs_dim), params_(params) {
  if (dim_ < 1) {
    throw std::invalid_argument("PowerScaledNoiseModel: obs_dim must be positive");
  }
  if (!(params_.a > 0.0)) {
    throw std::invalid_argument("PowerScaledNoiseModel: scale a must be positive");
  }
  if (!(params_.noise_dof > 2.0)) {
    throw std::invalid_argument("PowerScaledNoiseModel: noise_dof must exceed 2 (finite variance)");
  }
  if (!(params_.scale_floor > 0.0)) {
    throw std::invalid_argument("PowerScaledNoiseModel: scale_floor must be positive");
  }
  const double nu = params_.noise_dof;
  log_norm_ = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi);
}

double PowerScaledNoiseModel::noise_variance() const { return params_.noise_dof / (params_.noise_dof - 2.0); }

void PowerScaledNoiseModel::check_args(Index xdim, const Vector& y) const {
  if (xdim != dim_ || y.size() != dim_) {
    throw std::invalid_argument("PowerScaledNoiseModel: state/observation dimension mismatch");
  }
}

Eigen::ArrayXXd PowerScaledNoiseModel::scales(const Eigen::ArrayXXd& m) const {
  const double theta = params_.theta;
  Eigen::ArrayXXd s;
  if (theta == 0.0) {
    s = Eigen::ArrayXXd::Constant(m.rows(), m.cols(), params_.a);
  } else if (theta == 1.0) {
    s = params_.a * m;
  } else if (theta == 0.5) {
    s = params_.a * m.sqrt();
  } else {
    s = params_.a * m.pow(theta);
  }
  if (!params_.floor_scale && (s < params_.scale_floor).any()) {
    throw FilterError("PowerScaledNoiseModel: observation noise scale below floor (degenerate scale)");
  }
  return s;
}

Vector PowerScaledNoiseModel::simulate(const Vector& x, RandomStream& rng) const {
  if (x.size() != dim_) {
    throw std::invalid_argument("PowerScaledNoiseModel: state dimension mismatch");
  }
  const Vector m = quad_map(x);
  Vector y = m;
  if (!params_.simulate_noise) {
    return y;
  }
  for (Index i = 0; i < dim_; ++i) {
    const double beta = rng.student_t(params_.noise_dof);
    const double scale = params_.theta == 0.0 ? params_.a : params_.a * std::pow(m(i), params_.theta);
    y(i) += scale * beta;
  }
  return y;
}

double PowerScaledNoiseModel::nll(const Vector& x, const Vector& y) const {
  check_args(x.size(), y);
  return nll_batch(x, y)(0);
}

Vector PowerScaledNoiseModel::nll_gradient(const Vector& x, const Vector& y) const {
  check_args(x.size(), y);
  Matrix grad;
  nll_gradient_batch(x, y, grad);
  return grad.col(0);
}

Vector PowerScaledNoiseModel::nll_batch(const Matrix& X, const Vector& y) const {
  check_args(X.rows(), y);
  const double nu = params_.noise_dof;
  const Eigen::ArrayXXd m = 0.1 * X.array().square();
  const Eigen::ArrayXXd s = scales(m).max(params_.scale_floor);
  const Eigen::ArrayXXd r = ((-m).colwise() + y.array()) / s;
  const Eigen::ArrayXXd terms = s.log() + 0.5 * (nu + 1.0) * (r.square() / nu).log1p();
  Vector out = terms.colwise().sum().transpose().matrix();
  return out.array() - static_cast<double>(dim_) * log_norm_;
}

double PowerScaledNoiseModel::nll_gradient_batch(const Matrix& X, const Vector& y, Matrix& grad) const {
  check_args(X.rows(), y);
  const double nu = params_.noise_dof;
  const double theta = params_.theta;
  const Eigen::ArrayXXd x = X.array();
  const Eigen::ArrayXXd m = 0.1 * x.square();
  const Eigen::ArrayXXd dm = 0.2 * x;
  const Eigen::ArrayXXd raw = scales(m);
  const auto floored = raw < params_.scale_floor;
  const Eigen::ArrayXXd s = floored.select(params_.scale_floor, raw);
  // ds/dx = theta * s * dm / m away from the floor; zero where floored or theta == 0.
  Eigen::ArrayXXd ds = Eigen::ArrayXXd::Zero(x.rows(), x.cols());
  if (theta != 0.0) {
    ds = (floored || m <= 0.0).select(0.0, theta * s * dm / m);
  }
  const Eigen::ArrayXXd r = ((-m).colwise() + y.array()) / s;
  const Eigen::ArrayXXd dr = -dm / s - r * ds / s;
  const Eigen::ArrayXXd dpsi = (nu + 1.0) * r / (nu + r.square());
  grad = (ds / s + dpsi * dr).matrix();
  const Eigen::ArrayXXd terms = s.log() + 0.5 * (nu + 1.0) * (r.square() / nu).log1p();
  return terms.sum() - static_cast<double>(X.cols() * dim_) * log_norm_;
}

std::unique_ptr<ObservationModel> PowerScaledNoiseModel::restrict_to(std::span<const Index> indices) const {
  for (const Index i : indices) {
    if (i < 0 || i >= dim_) {
      throw std::invalid_argument("PowerScaledNoiseModel::restrict_to: index out of range");
    }
  }
  return std::make_unique<PowerScaledNoiseModel>(static_cast<Index>(indices.size()), params_);
}

LinearGaussianObs PowerScaledNoiseModel::linearize(const Vector& x0) const {
  if (x0.size() != dim_) {
    throw std::invalid_argument("PowerScaledNoiseModel::linearize: dimension mismatch");
  }
  const Vector m = quad_map(x0);
  const Vector jac = quad_map_jacobian(x0);
  const Eigen::ArrayXd s = scales(Eigen::ArrayXXd(m.array())).max(params_.scale_floor).col(0);
  LinearGaussianObs lin;
  lin.H = jac.asDiagonal();
  lin.offset = m - jac.cwiseProduct(x0);
  lin.R = (s.square() * noise_variance()).matrix().asDiagonal();
  return lin;
}

// ---------------------------------------------------------------------------
// LinearGaussianModel

LinearGaussianModel::LinearGaussianModel(LinearGaussianObs obs, bool simulate_noise)
    : obs_(std::move(obs)), simulate_noise_(simulate_noise) {
  const Index p = obs_.obs_dim();
  if (obs_.R.rows() != p || obs_.R.cols() != p) {
    throw std::invalid_argument("LinearGaussianModel: R must be obs_dim x obs_dim");
  }
  if (obs_.offset.size() == 0) {
    obs_.offset = Vector::Zero(p);
  } else if (obs_.offset.size() != p) {
    throw std::invalid_argument("LinearGaussianModel: offset size mismatch");
  }
  obs_.R = (0.5 * (obs_.R + obs_.R.transpose())).eval();
  r_llt_.compute(obs_.R);
  if (r_llt_.info() != Eigen::Success) {
    throw std::invalid_argument("LinearGaussianModel: R must be symmetric positive definite");
  }
  r_factor_ = r_llt_.matrixL();
  const double logdet = 2.0 * r_llt_.matrixLLT().diagonal().array().log().sum();
  log_norm_ = 0.5 * (static_cast<double>(p) * std::log(2.0 * std::numbers::pi) + logdet);
}

Vector LinearGaussianModel::simulate(const Vector& x, RandomStream& rng) const {
  Vector y = obs_.H * x + obs_.offset;
  if (simulate_noise_) {
    Vector z(obs_dim());
    for (Index i = 0; i < z.size(); ++i) {
      z(i) = rng.normal();
    }
    y += r_factor_ * z;
  }
  return y;
}

double LinearGaussianModel::nll(const Vector& x, const Vector& y) const {
  const Vector resid = y - obs_.H * x - obs_.offset;
  return 0.5 * resid.dot(r_llt_.solve(resid)) + log_norm_;
}

Vector LinearGaussianModel::nll_gradient(const Vector& x, const Vector& y) const {
  const Vector resid = y - obs_.H * x - obs_.offset;
  return -obs_.H.transpose() * r_llt_.solve(resid);
}

Vector LinearGaussianModel::nll_batch(const Matrix& X, const Vector& y) const {
  Matrix resid = -(obs_.H * X);
  resid.colwise() += y - obs_.offset;
  const Matrix whitened = r_llt_.matrixL().solve(resid);
  return (0.5 * whitened.colwise().squaredNorm().array() + log_norm_).matrix().transpose();
}

std::unique_ptr<ObservationModel> LinearGaussianModel::restrict_to(std::span<const Index> indices) const {
  if (obs_.H.rows() != obs_.H.cols()) {
    throw std::invalid_argument("LinearGaussianModel::restrict_to: observation must align with state components");
  }
  const std::vector<Index> idx(indices.begin(), indices.end());
  LinearGaussianObs local;
  local.H = obs_.H(idx, idx);
  local.R = obs_.R(idx, idx);
  local.offset = obs_.offset(idx);
  return std::make_unique<LinearGaussianModel>(std::move(local), simulate_noise_);
}

LinearGaussianObs LinearGaussianModel::linearize(const Vector&) const { return obs_; }

}  // namespace lmekf
