#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "lmekf/ensemble.hpp"
#include "lmekf/observation.hpp"

namespace lmekf {

/// Fixed-step gradient descent settings and stopping rule.
///
/// The run stops at iteration k >= window when the running best objective
/// improved by less than `threshold` over the trailing `window` iterations,
/// or when k reaches `max_iters`.
struct GdConfig {
  double step_size = 1e-3;
  int window = 20;
  double threshold = 0.1;
  int max_iters = 1000;

  void validate() const;
};

/// Running best objective F*_k for k = 0..iterations_used (k = 0 is the
/// initial map). Non-increasing by construction.
struct GdTrace {
  int iterations_used = 0;
  std::vector<double> best_value_per_iteration;
  double final_objective = 0.0;
  int step_halvings = 0;

  /// CSV with header "iteration,best_value".
  void write_csv(std::ostream& out) const;
};

struct AffineGradient {
  Matrix dA;
  Vector db;
};

/// KL objective F(A, b) of the affine map pushing the prior ensemble towards
/// the Gaussian-prior approximate posterior, up to the constant entropy of the
/// true prior:
///
///   F(A,b) = 1/2 tr[(S + mu mu^T) A^T S^-1 A] + (b - mu)^T S^-1 [A mu + (b - mu)/2]
///            - log|det A| + (1/M) sum_m l(A x_m + b) + 1/2 (d log 2pi + log|S|)
///
/// where (mu, S) are the prior moments (S jittered if singular) and the
/// likelihood expectation is the Monte-Carlo average over the prior ensemble.
class KldObjective {
 public:
  KldObjective(const GaussianMoments& prior_moments, const StateEnsemble& prior_ens, const ObservationModel& obs,
               Vector y);

  Index dim() const { return mu_.size(); }

  double value(const AffineMap& map) const;
  AffineGradient gradient(const AffineMap& map) const;

  /// Value and gradient in one pass; nullopt when A is numerically singular or
  /// the result is not finite.
  std::optional<double> try_evaluate(const AffineMap& map, AffineGradient* grad) const;

  const Matrix& prior_precision() const { return precision_; }

 private:
  Vector mu_;
  Matrix second_moment_;  // S + mu mu^T
  Matrix precision_;      // S^-1
  double constant_;
  Matrix ensemble_;
  const ObservationModel& obs_;
  Vector y_;
};

double objective(const AffineMap& map, const GaussianMoments& prior_moments, const StateEnsemble& prior_ens,
                 const ObservationModel& obs, const Vector& y);

AffineGradient objective_gradient(const AffineMap& map, const GaussianMoments& prior_moments,
                                  const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y);

struct KldSolution {
  AffineMap map;
  GdTrace trace;
};

/// Fixed-step gradient descent on KldObjective starting from `init`; returns
/// the best map seen. A step that makes A singular (or the objective
/// non-finite) is halved, up to 30 times, before aborting with FilterError.
KldSolution minimize_kld(const KldObjective& objective, const GdConfig& cfg, const AffineMap& init);

KldSolution minimize_kld(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y,
                         const GdConfig& cfg, const AffineMap& init);

struct LmekfResult {
  StateEnsemble ensemble;
  GdTrace trace;
  AffineMap map;
};

/// One LMEKF analysis: empirical prior moments, KLD minimization from the
/// identity map, and the optimal map applied to every member.
LmekfResult lmekf_update(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y,
                         const GdConfig& cfg);

}  // namespace lmekf
