#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lmekf/random.hpp"

namespace lmekf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// M equally weighted state vectors of dimension d, stored column-wise
/// (d x M). Requires M >= 2.
class StateEnsemble {
 public:
  explicit StateEnsemble(Matrix members);
  static StateEnsemble from_members(const std::vector<Vector>& members);

  Index dim() const { return members_.rows(); }
  Index size() const { return members_.cols(); }

  const Matrix& members() const { return members_; }
  auto member(Index m) const { return members_.col(m); }
  Vector mean() const { return members_.rowwise().mean(); }

 private:
  Matrix members_;
};

/// Mean and covariance of a Gaussian approximation. The covariance is
/// symmetrized on construction and must not have an eigenvalue below
/// -1e-10 * max(1, max|cov_ij|).
class GaussianMoments {
 public:
  GaussianMoments(Vector mean, Matrix cov);

  Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }

 private:
  Vector mean_;
  Matrix cov_;
};

/// Transport map x -> A x + b.
struct AffineMap {
  Matrix A;
  Vector b;

  static AffineMap identity(Index d);
  Index dim() const { return b.size(); }
  Vector operator()(const Vector& x) const { return A * x + b; }
};

/// Cholesky factorization of a covariance, with a diagonal jitter applied
/// only when the matrix is numerically singular.
///
/// Jitter is lambda = 1e-8 * trace / d (or 1e-8 when the trace is zero) and is
/// added when the plain Cholesky fails or its reciprocal condition estimate
/// drops below 1e-12.
class RegularizedCovariance {
 public:
  explicit RegularizedCovariance(const Matrix& cov);

  const Matrix& matrix() const { return cov_; }
  double jitter() const { return jitter_; }
  double log_det() const;
  Matrix inverse() const;
  template <typename Rhs>
  Matrix solve(const Eigen::MatrixBase<Rhs>& rhs) const {
    return llt_.solve(rhs);
  }

 private:
  Matrix cov_;
  double jitter_ = 0.0;
  Eigen::LLT<Matrix> llt_;
};

/// Sample mean and unbiased (1/(M-1)) covariance. Throws for M < 2.
GaussianMoments empirical_moments(const StateEnsemble& ens);

/// n i.i.d. draws from N(mean, cov) via a symmetric eigen-factorization with
/// negative eigenvalues clipped to zero.
StateEnsemble sample_gaussian(const GaussianMoments& moments, Index n, RandomStream& rng);

StateEnsemble apply_affine(const AffineMap& map, const StateEnsemble& ens);

/// Closed-form KL(p || q) between two nondegenerate Gaussians.
double gaussian_kld(const GaussianMoments& p, const GaussianMoments& q);

/// Symmetric square root of a symmetric PSD matrix (eigenvalues clipped at 0).
Matrix symmetric_sqrt(const Matrix& s);

}  // namespace lmekf
