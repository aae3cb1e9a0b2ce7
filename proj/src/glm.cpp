#include "tenmtl/glm.hpp"

#include "tenmtl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace tenmtl {

Family Family::parse(std::string_view name) {
  if (name == "gaussian") return gaussian();
  if (name == "bernoulli" || name == "binomial") return bernoulli();
  throw std::invalid_argument("unknown family '" + std::string(name) + "'");
}

std::string_view Family::name() const {
  return kind == FamilyKind::Gaussian ? "gaussian" : "bernoulli";
}

double Family::cumulant(double theta) const {
  if (kind == FamilyKind::Gaussian) return 0.5 * theta * theta;
  // log(1 + exp(theta)) without overflow.
  return theta > 0 ? theta + std::log1p(std::exp(-theta)) : std::log1p(std::exp(theta));
}

double Family::mean(double theta) const {
  if (kind == FamilyKind::Gaussian) return theta;
  if (theta >= 0) return 1.0 / (1.0 + std::exp(-theta));
  const double e = std::exp(theta);
  return e / (1.0 + e);
}

double Family::variance(double theta) const {
  if (kind == FamilyKind::Gaussian) return 1.0;
  const double m = mean(theta);
  return m * (1.0 - m);
}

double neg_log_likelihood(Family family, const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  if (eta.size() != y.size()) throw ShapeError("neg_log_likelihood: length mismatch");
  double total = 0.0;
  for (Eigen::Index j = 0; j < eta.size(); ++j) total += -y(j) * eta(j) + family.cumulant(eta(j));
  return total;
}

void GlmProblem::validate() const {
  if (response.size() != design.rows() || offset.size() != design.rows())
    throw ShapeError("GlmProblem: design rows, response and offset lengths differ");
  if (!(l1_penalty >= 0.0) || !(l2_penalty >= 0.0))
    throw std::invalid_argument("GlmProblem: penalties must be nonnegative");
}

namespace {

Eigen::VectorXd linear_predictor(const GlmProblem& p, const Eigen::VectorXd& beta) {
  if (p.coefficients() == 0) return p.offset;
  return p.design * beta + p.offset;
}

double subgradient_violation(const Eigen::VectorXd& grad, const Eigen::VectorXd& beta,
                             double lambda) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < grad.size(); ++k) {
    double v;
    if (beta(k) > 0)
      v = std::abs(grad(k) + lambda);
    else if (beta(k) < 0)
      v = std::abs(grad(k) - lambda);
    else
      v = std::max(0.0, std::abs(grad(k)) - lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

double quadratic_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& c, double lambda,
                           const Eigen::VectorXd& beta) {
  return 0.5 * beta.dot(a * beta) - c.dot(beta) + lambda * beta.lpNorm<1>();
}

// Exact minimiser on the current support with the current sign pattern held
// fixed. Accepted only when the signs survive and the objective does not rise.
bool polish_active_set(const Eigen::MatrixXd& a, const Eigen::VectorXd& c, double lambda,
                       Eigen::VectorXd& beta) {
  std::vector<Eigen::Index> support;
  for (Eigen::Index k = 0; k < beta.size(); ++k)
    if (lambda == 0.0 || beta(k) != 0.0) support.push_back(k);
  if (support.empty()) return false;
  const auto s = static_cast<Eigen::Index>(support.size());
  Eigen::MatrixXd sub(s, s);
  Eigen::VectorXd rhs(s);
  for (Eigen::Index i = 0; i < s; ++i) {
    const auto ki = support[i];
    double sign = beta(ki) > 0 ? 1.0 : (beta(ki) < 0 ? -1.0 : 0.0);
    rhs(i) = c(ki) - lambda * sign;
    for (Eigen::Index j = 0; j < s; ++j) sub(i, j) = a(ki, support[j]);
  }
  Eigen::VectorXd x = sub.ldlt().solve(rhs);
  const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
  if (!x.allFinite() || (sub * x - rhs).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    // Singular support: take the minimum-norm solution instead.
    x = sub.completeOrthogonalDecomposition().solve(rhs);
    if (!x.allFinite()) return false;
  }
  // Walk from beta toward x, stopping where the first coordinate reaches
  // zero; the objective is convex along the segment inside the orthant.
  double step = 1.0;
  Eigen::Index blocking = -1;
  if (lambda > 0.0)
    for (Eigen::Index i = 0; i < s; ++i) {
      const double b = beta(support[i]);
      if (x(i) == 0.0 || (x(i) > 0) != (b > 0)) {
        const double t = b / (b - x(i));
        if (t < step) {
          step = t;
          blocking = i;
        }
      }
    }
  Eigen::VectorXd candidate = Eigen::VectorXd::Zero(beta.size());
  for (Eigen::Index i = 0; i < s; ++i) {
    const auto ki = support[i];
    candidate(ki) = i == blocking ? 0.0 : beta(ki) + step * (x(i) - beta(ki));
    if (lambda > 0.0 && candidate(ki) != 0.0 && (candidate(ki) > 0) != (beta(ki) > 0)) candidate(ki) = 0.0;
  }
  if (quadratic_objective(a, c, lambda, candidate) > quadratic_objective(a, c, lambda, beta))
    return false;
  const bool moved = candidate != beta;
  beta = std::move(candidate);
  return moved;
}

}  // namespace

std::size_t solve_lasso_quadratic(const Eigen::MatrixXd& a, const Eigen::VectorXd& c,
                                  double lambda, Eigen::VectorXd& beta, double tol,
                                  std::size_t max_sweeps) {
  const Eigen::Index q = c.size();
  if (beta.size() != q) beta = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd grad = a * beta - c;
  std::vector<signed char> pattern(q, 0), last_failed;
  std::size_t since_attempt = 0;
  for (std::size_t sweep = 1; sweep <= max_sweeps; ++sweep) {
    bool pattern_changed = false;
    for (Eigen::Index k = 0; k < q; ++k) {
      const double diag = a(k, k);
      const double old = beta(k);
      double updated = 0.0;
      if (diag > 0.0) updated = soft_threshold(diag * old - grad(k), lambda) / diag;
      if (updated != old) {
        grad.noalias() += a.col(k) * (updated - old);
        beta(k) = updated;
      }
      const signed char sign = updated > 0 ? 1 : (updated < 0 ? -1 : 0);
      if (sign != pattern[k]) {
        pattern[k] = sign;
        pattern_changed = true;
      }
    }
    if (subgradient_violation(grad, beta, lambda) <= tol) return sweep;
    ++since_attempt;
    const bool stable = !pattern_changed && pattern != last_failed;
    if (stable || since_attempt >= 16) {
      since_attempt = 0;
      if (polish_active_set(a, c, lambda, beta)) {
        grad = a * beta - c;
        if (subgradient_violation(grad, beta, lambda) <= tol) return sweep;
      } else {
        last_failed = pattern;
      }
    }
  }
  return max_sweeps;
}

double glm_objective(const GlmProblem& p, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = linear_predictor(p, beta);
  double value = neg_log_likelihood(p.family, eta, p.response);
  if (beta.size() > 0) {
    value += p.l1_penalty * beta.lpNorm<1>();
    value += 0.5 * p.l2_penalty * beta.squaredNorm();
  }
  return value;
}

Eigen::VectorXd glm_gradient(const GlmProblem& p, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = linear_predictor(p, beta);
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index j = 0; j < eta.size(); ++j) resid(j) = p.family.mean(eta(j)) - p.response(j);
  Eigen::VectorXd grad = p.design.transpose() * resid;
  if (p.l2_penalty > 0.0) grad += p.l2_penalty * beta;
  return grad;
}

double lambda_max(const GlmProblem& p) {
  p.validate();
  if (p.coefficients() == 0) return 0.0;
  return glm_gradient(p, Eigen::VectorXd::Zero(p.coefficients())).cwiseAbs().maxCoeff();
}

double kkt_check(const GlmProblem& p, const Eigen::VectorXd& beta) {
  if (beta.size() != p.coefficients()) throw ShapeError("kkt_check: coefficient length mismatch");
  if (beta.size() == 0) return 0.0;
  return subgradient_violation(glm_gradient(p, beta), beta, p.l1_penalty);
}

GlmSolution fit_glm(const GlmProblem& p, const Eigen::VectorXd& init, double tol,
                    std::size_t max_iter) {
  p.validate();
  if (!(tol > 0.0)) throw std::invalid_argument("fit_glm: tolerance must be positive");
  const Eigen::Index q = p.coefficients();
  GlmSolution sol;
  sol.coefficients = init.size() == q ? init : Eigen::VectorXd::Zero(q);

  auto finish = [&](bool converged) {
    sol.objective = glm_objective(p, sol.coefficients);
    sol.kkt_residual = kkt_check(p, sol.coefficients);
    sol.converged = converged || sol.kkt_residual <= tol;
    if (p.family.kind == FamilyKind::Bernoulli && q > 0)
      sol.eta_capped = linear_predictor(p, sol.coefficients).cwiseAbs().maxCoeff() > kEtaCap;
    return sol;
  };

  if (q == 0) return finish(true);
  if (p.l1_penalty >= lambda_max(p)) {
    sol.coefficients.setZero();
    return finish(true);
  }

  const bool gaussian = p.family.kind == FamilyKind::Gaussian;
  Eigen::MatrixXd gram;
  if (gaussian) {
    gram = p.design.transpose() * p.design;
    gram.diagonal().array() += p.l2_penalty;
  }
  double current = glm_objective(p, sol.coefficients);
  for (std::size_t it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd eta = linear_predictor(p, sol.coefficients);
    Eigen::VectorXd resid(eta.size());
    for (Eigen::Index j = 0; j < eta.size(); ++j) resid(j) = p.family.mean(eta(j)) - p.response(j);
    Eigen::VectorXd grad = p.design.transpose() * resid;
    grad += p.l2_penalty * sol.coefficients;
    if (subgradient_violation(grad, sol.coefficients, p.l1_penalty) <= tol)
      return finish(true);

    Eigen::MatrixXd hessian;
    if (gaussian) {
      hessian = gram;
    } else {
      Eigen::VectorXd w(eta.size());
      for (Eigen::Index j = 0; j < eta.size(); ++j)
        w(j) = p.family.variance(std::clamp(eta(j), -kEtaCap, kEtaCap));
      hessian = p.design.transpose() * w.asDiagonal() * p.design;
      hessian.diagonal().array() += p.l2_penalty;
    }
    const Eigen::VectorXd c = hessian * sol.coefficients - grad;
    Eigen::VectorXd target = sol.coefficients;
    solve_lasso_quadratic(hessian, c, p.l1_penalty, target, 0.1 * tol);

    const Eigen::VectorXd direction = target - sol.coefficients;
    double step = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 50; ++halving) {
      Eigen::VectorXd candidate = sol.coefficients + step * direction;
      const double value = glm_objective(p, candidate);
      if (value <= current) {
        accepted = value < current || step == 1.0;
        if (accepted) {
          sol.coefficients = std::move(candidate);
          current = value;
        }
        break;
      }
      step *= 0.5;
    }
    sol.iterations = it + 1;
    if (!accepted) {
      // Near the optimum the decrease drops below the objective's rounding
      // error; fall back to the KKT residual as the progress measure.
      const Eigen::VectorXd candidate = target;
      const double value = glm_objective(p, candidate);
      const double slack = 1e-12 * std::max(1.0, std::abs(current));
      if (value > current + slack ||
          kkt_check(p, candidate) >= subgradient_violation(grad, sol.coefficients, p.l1_penalty))
        break;
      sol.coefficients = candidate;
      current = value;
    }
  }
  return finish(false);
}

}  // namespace tenmtl
