#include "support.hpp"

#include "tenmtl/glm.hpp"

#include <doctest.h>

using namespace tenmtl;
using namespace testsupport;

namespace {

GlmProblem random_problem(Rng& rng, Family family, Eigen::Index n, Eigen::Index q) {
  GlmProblem p;
  p.family = family;
  p.design = random_matrix(rng, n, q);
  p.offset = 0.3 * random_vector(rng, n);
  const Eigen::VectorXd truth = random_vector(rng, q);
  p.response.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double eta = p.design.row(j).dot(truth) + p.offset(j);
    p.response(j) = family.kind == FamilyKind::Gaussian ? eta + 0.5 * rng.normal()
                                                        : (rng.uniform() < family.mean(eta) ? 1.0 : 0.0);
  }
  return p;
}

}  // namespace

TEST_CASE("family functions are consistent derivatives of the cumulant") {
  for (Family f : {Family::gaussian(), Family::bernoulli()})
    for (double theta : {-40.0, -3.0, -0.5, 0.0, 0.7, 2.5, 40.0}) {
      const double h = 1e-5;
      const double d1 = (f.cumulant(theta + h) - f.cumulant(theta - h)) / (2 * h);
      const double d2 = (f.mean(theta + h) - f.mean(theta - h)) / (2 * h);
      CHECK(f.mean(theta) == doctest::Approx(d1).epsilon(1e-6));
      CHECK(f.variance(theta) == doctest::Approx(d2).epsilon(1e-5));
    }
  CHECK(Family::parse("binomial") == Family::bernoulli());
  CHECK_THROWS_AS(Family::parse("poisson"), std::invalid_argument);
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(21);
  for (Family f : {Family::gaussian(), Family::bernoulli()})
    for (int trial = 0; trial < 25; ++trial) {
      GlmProblem p = random_problem(rng, f, 20, 1 + static_cast<Eigen::Index>(rng.index(6)));
      p.l2_penalty = rng.uniform();
      const Eigen::VectorXd beta = random_vector(rng, p.coefficients());
      const Eigen::VectorXd grad = glm_gradient(p, beta);
      for (Eigen::Index k = 0; k < beta.size(); ++k) {
        const double h = 1e-6 * std::max(1.0, std::abs(beta(k)));
        Eigen::VectorXd up = beta, down = beta;
        up(k) += h;
        down(k) -= h;
        const double numeric = (glm_objective(p, up) - glm_objective(p, down)) / (2 * h);
        CHECK(std::abs(numeric - grad(k)) <= 1e-5 * std::max(1.0, std::abs(grad(k))));
      }
    }
}

TEST_CASE("lasso GLM reaches the KKT conditions") {
  Rng rng(22);
  int declared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Family f = trial % 2 ? Family::bernoulli() : Family::gaussian();
    GlmProblem p = random_problem(rng, f, 40, 2 + static_cast<Eigen::Index>(rng.index(10)));
    p.l1_penalty = rng.uniform() * lambda_max(p);
    const GlmSolution sol = fit_glm(p, {}, 1e-8);
    if (!sol.converged) continue;
    ++declared;
    CHECK(sol.kkt_residual <= 1e-6);
    CHECK(kkt_check(p, sol.coefficients) == doctest::Approx(sol.kkt_residual));
  }
  CHECK(declared == 100);
}

TEST_CASE("penalty at or above lambda_max gives exactly zero") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Family f = trial % 2 ? Family::bernoulli() : Family::gaussian();
    GlmProblem p = random_problem(rng, f, 30, 5);
    const double lmax = lambda_max(p);
    // Oracle: the gradient of the smooth part at zero.
    Eigen::VectorXd resid(p.samples());
    for (Eigen::Index j = 0; j < p.samples(); ++j) resid(j) = f.mean(p.offset(j)) - p.response(j);
    CHECK(lmax == doctest::Approx((p.design.transpose() * resid).cwiseAbs().maxCoeff()).epsilon(1e-12));
    p.l1_penalty = lmax * (1.0 + rng.uniform());
    const GlmSolution sol = fit_glm(p, random_vector(rng, 5));
    CHECK(sol.coefficients == Eigen::VectorXd::Zero(5));
    CHECK(sol.converged);
  }
}

TEST_CASE("unpenalized Gaussian fit equals least squares") {
  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    GlmProblem p = random_problem(rng, Family::gaussian(), 25, 6);
    const GlmSolution sol = fit_glm(p, {}, 1e-10);
    const Eigen::VectorXd ls = p.design.colPivHouseholderQr().solve(p.response - p.offset);
    CHECK((sol.coefficients - ls).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("ridge Gaussian fit equals the regularised normal equations") {
  Rng rng(25);
  GlmProblem p = random_problem(rng, Family::gaussian(), 5, 9);  // underdetermined
  p.l2_penalty = 0.3;
  const GlmSolution sol = fit_glm(p, {}, 1e-10);
  const Eigen::MatrixXd a = p.design.transpose() * p.design + 0.3 * Eigen::MatrixXd::Identity(9, 9);
  const Eigen::VectorXd expect = a.ldlt().solve(p.design.transpose() * (p.response - p.offset));
  CHECK((sol.coefficients - expect).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("orthonormal design lasso is a soft threshold") {
  Rng rng(26);
  const Eigen::MatrixXd q = random_matrix(rng, 30, 5).householderQr().householderQ() * Eigen::MatrixXd::Identity(30, 5);
  GlmProblem p;
  p.design = q;
  p.response = random_vector(rng, 30);
  p.offset = Eigen::VectorXd::Zero(30);
  p.l1_penalty = 0.4;
  const GlmSolution sol = fit_glm(p, {}, 1e-12);
  const Eigen::VectorXd z = q.transpose() * p.response;
  for (Eigen::Index k = 0; k < 5; ++k) CHECK(sol.coefficients(k) == doctest::Approx(soft_threshold(z(k), 0.4)));
}

TEST_CASE("separable Bernoulli data flags the eta cap") {
  GlmProblem p;
  p.family = Family::bernoulli();
  p.design = Eigen::MatrixXd(6, 1);
  p.design << -3, -2, -1, 1, 2, 3;
  p.response = (Eigen::VectorXd(6) << 0, 0, 0, 1, 1, 1).finished();
  p.offset = Eigen::VectorXd::Zero(6);
  const GlmSolution sol = fit_glm(p, {}, 1e-8, 200);
  CHECK(sol.coefficients.allFinite());
  CHECK(sol.eta_capped);
}

TEST_CASE("solver is deterministic and warm starts do not hurt") {
  Rng rng(27);
  GlmProblem p = random_problem(rng, Family::bernoulli(), 40, 8);
  p.l1_penalty = 0.2 * lambda_max(p);
  const GlmSolution a = fit_glm(p, {});
  const GlmSolution b = fit_glm(p, {});
  CHECK(a.coefficients == b.coefficients);
  const GlmSolution warm = fit_glm(p, a.coefficients);
  CHECK(warm.objective <= a.objective + 1e-12);
}

TEST_CASE("invalid problems are rejected") {
  GlmProblem p;
  p.design = Eigen::MatrixXd::Zero(3, 2);
  p.response = Eigen::VectorXd::Zero(2);
  p.offset = Eigen::VectorXd::Zero(3);
  CHECK_THROWS(fit_glm(p, {}));
  p.response = Eigen::VectorXd::Zero(3);
  p.l1_penalty = -1;
  CHECK_THROWS_AS(fit_glm(p, {}), std::invalid_argument);
}
