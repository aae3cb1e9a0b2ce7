#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <string_view>

namespace tenmtl {

enum class FamilyKind { Gaussian, Bernoulli };

/// Canonical-link exponential family: density exp(y*theta - b(theta)).
struct Family {
  FamilyKind kind = FamilyKind::Gaussian;

  static Family gaussian() { return {FamilyKind::Gaussian}; }
  static Family bernoulli() { return {FamilyKind::Bernoulli}; }
  static Family parse(std::string_view name);

  std::string_view name() const;

  /// Cumulant function b(theta).
  double cumulant(double theta) const;
  /// b'(theta), the mean response (inverse canonical link).
  double mean(double theta) const;
  /// b''(theta), the variance function.
  double variance(double theta) const;

  friend bool operator==(Family, Family) = default;
};

/// Linear predictor magnitude cap used when forming Bernoulli IRLS weights.
inline constexpr double kEtaCap = 30.0;

/// Sum_j ( -y_j * eta_j + b(eta_j) ).
double neg_log_likelihood(Family family, const Eigen::VectorXd& eta, const Eigen::VectorXd& y);

/// GLM subproblem with fixed per-sample offsets:
///   min_beta NLL(design * beta + offset; y) + l1 * ||beta||_1 + (l2 / 2) * ||beta||^2
/// No intercept is fitted; add a constant column to the design if one is wanted.
struct GlmProblem {
  Eigen::MatrixXd design;
  Eigen::VectorXd response;
  Eigen::VectorXd offset;
  double l1_penalty = 0.0;
  double l2_penalty = 0.0;
  Family family;

  Eigen::Index samples() const { return design.rows(); }
  Eigen::Index coefficients() const { return design.cols(); }
  void validate() const;
};

struct GlmSolution {
  Eigen::VectorXd coefficients;
  double objective = 0.0;
  std::size_t iterations = 0;
  double kkt_residual = 0.0;
  bool converged = false;
  /// Bernoulli only: |eta| exceeded the cap, which indicates (quasi-)separation.
  bool eta_capped = false;
};

double glm_objective(const GlmProblem& p, const Eigen::VectorXd& beta);

/// Gradient of the smooth part (NLL plus ridge) with respect to beta.
Eigen::VectorXd glm_gradient(const GlmProblem& p, const Eigen::VectorXd& beta);

/// Smallest l1 penalty for which beta = 0 is optimal (ridge does not move it).
double lambda_max(const GlmProblem& p);

/// Largest violation of the subgradient optimality conditions at beta.
double kkt_check(const GlmProblem& p, const Eigen::VectorXd& beta);

/// IRLS outer loop; each Newton model is minimised by cyclic coordinate
/// descent with soft-thresholding, polished by an exact solve on the active
/// set. Bernoulli steps are halved until the penalised objective does not
/// increase. An empty `init` starts from zero.
GlmSolution fit_glm(const GlmProblem& p, const Eigen::VectorXd& init, double tol = 1e-8,
                    std::size_t max_iter = 100);

/// Minimises 0.5 b'Ab - c'b + lambda ||b||_1 for symmetric PSD A, starting at `beta`.
/// Returns the number of coordinate sweeps used.
std::size_t solve_lasso_quadratic(const Eigen::MatrixXd& a, const Eigen::VectorXd& c,
                                  double lambda, Eigen::VectorXd& beta, double tol,
                                  std::size_t max_sweeps = 20000);

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

}  // namespace tenmtl
