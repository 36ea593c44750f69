#include "lmekf/ensemble.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "lmekf/errors.hpp"

namespace lmekf {

StateEnsemble::StateEnsemble(Matrix members) : members_(std::move(members)) {
  if (members_.rows() < 1) {
    throw std::invalid_argument("StateEnsemble: state dimension must be positive");
  }
  if (members_.cols() < 2) {
    throw std::invalid_argument("StateEnsemble: at least two members are required");
  }
}

StateEnsemble StateEnsemble::from_members(const std::vector<Vector>& members) {
  if (members.empty()) {
    throw std::invalid_argument("StateEnsemble: empty member list");
  }
  const Index d = members.front().size();
  Matrix x(d, static_cast<Index>(members.size()));
  for (std::size_t m = 0; m < members.size(); ++m) {
    if (members[m].size() != d) {
      throw std::invalid_argument("StateEnsemble: members have different dimensions");
    }
    x.col(static_cast<Index>(m)) = members[m];
  }
  return StateEnsemble(std::move(x));
}

GaussianMoments::GaussianMoments(Vector mean, Matrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size()) {
    throw std::invalid_argument("GaussianMoments: covariance shape does not match mean");
  }
  cov_ = (0.5 * (cov_ + cov_.transpose())).eval();
  if (!cov_.allFinite() || !mean_.allFinite()) {
    throw std::invalid_argument("GaussianMoments: non-finite moments");
  }
  const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
  const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(cov_, Eigen::EigenvaluesOnly).eigenvalues()(0);
  if (min_eig < -1e-10 * scale) {
    throw std::invalid_argument("GaussianMoments: covariance is not positive semidefinite (min eigenvalue " +
                                std::to_string(min_eig) + ")");
  }
}

AffineMap AffineMap::identity(Index d) { return {Matrix::Identity(d, d), Vector::Zero(d)}; }

RegularizedCovariance::RegularizedCovariance(const Matrix& cov) : cov_(0.5 * (cov + cov.transpose())) {
  const Index d = cov_.rows();
  llt_.compute(cov_);
  if (llt_.info() == Eigen::Success && llt_.rcond() >= 1e-12) {
    return;
  }
  const double trace = cov_.trace();
  jitter_ = trace > 0.0 ? 1e-8 * trace / static_cast<double>(d) : 1e-8;
  cov_.diagonal().array() += jitter_;
  llt_.compute(cov_);
  if (llt_.info() != Eigen::Success) {
    throw FilterError("covariance is degenerate even after jitter");
  }
}

double RegularizedCovariance::log_det() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

Matrix RegularizedCovariance::inverse() const {
  return llt_.solve(Matrix::Identity(cov_.rows(), cov_.cols()));
}

GaussianMoments empirical_moments(const StateEnsemble& ens) {
  const Index m = ens.size();
  if (m < 2) {
    throw std::invalid_argument("empirical_moments: need at least two members");
  }
  Vector mean = ens.mean();
  const Matrix anomalies = ens.members().colwise() - mean;
  Matrix cov = (anomalies * anomalies.transpose()) / static_cast<double>(m - 1);
  return GaussianMoments(std::move(mean), std::move(cov));
}

Matrix symmetric_sqrt(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (s + s.transpose()));
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

StateEnsemble sample_gaussian(const GaussianMoments& moments, Index n, RandomStream& rng) {
  const Index d = moments.dim();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(moments.cov());
  const Matrix factor = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  Matrix z(d, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < d; ++i) {
      z(i, j) = rng.normal();
    }
  }
  Matrix x = factor * z;
  x.colwise() += moments.mean();
  return StateEnsemble(std::move(x));
}

StateEnsemble apply_affine(const AffineMap& map, const StateEnsemble& ens) {
  if (map.A.rows() != ens.dim() || map.A.cols() != ens.dim() || map.b.size() != ens.dim()) {
    throw std::invalid_argument("apply_affine: map dimension does not match ensemble");
  }
  Matrix x = map.A * ens.members();
  x.colwise() += map.b;
  return StateEnsemble(std::move(x));
}

double gaussian_kld(const GaussianMoments& p, const GaussianMoments& q) {
  if (p.dim() != q.dim()) {
    throw std::invalid_argument("gaussian_kld: dimension mismatch");
  }
  const double d = static_cast<double>(p.dim());
  const Eigen::LLT<Matrix> lp(p.cov());
  const Eigen::LLT<Matrix> lq(q.cov());
  if (lp.info() != Eigen::Success || lq.info() != Eigen::Success) {
    throw std::invalid_argument("gaussian_kld: covariances must be positive definite");
  }
  const Vector diff = q.mean() - p.mean();
  const double trace_term = lq.solve(p.cov()).trace();
  const double maha = diff.dot(lq.solve(diff));
  const double logdet_p = 2.0 * lp.matrixLLT().diagonal().array().log().sum();
  const double logdet_q = 2.0 * lq.matrixLLT().diagonal().array().log().sum();
  return 0.5 * (trace_term + maha - d + logdet_q - logdet_p);
}

}  // namespace lmekf
