#include "support.hpp"

#include "tenmtl/tensor.hpp"

#include <doctest.h>

using namespace tenmtl;
using namespace testsupport;

namespace {

// Column of entry `idx` in the mode-n unfolding, straight from the definition:
// j = 1 + sum_{k != n} (i_k - 1) J_k with J_k = prod_{l < k, l != n} I_l.
std::size_t unfolding_column(const Shape& shape, const std::vector<std::size_t>& idx, std::size_t mode) {
  std::size_t col = 0;
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (k == mode) continue;
    std::size_t stride = 1;
    for (std::size_t l = 0; l < k; ++l)
      if (l != mode) stride *= shape[l];
    col += idx[k] * stride;
  }
  return col;
}

double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
  REQUIRE(a.shape() == b.shape());
  return (a.as_vector() - b.as_vector()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("matricize places every entry where the index formula says") {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const Shape shape = random_shape(rng, 1, 4);
    const DenseTensor t = random_tensor(rng, shape);
    for (std::size_t mode = 0; mode < shape.size(); ++mode) {
      const Eigen::MatrixXd m = matricize(t, mode);
      CHECK(static_cast<std::size_t>(m.rows()) == shape[mode]);
      CHECK(static_cast<std::size_t>(m.size()) == t.size());
      for_each_index(shape, [&](const std::vector<std::size_t>& idx) {
        const auto col = static_cast<Eigen::Index>(unfolding_column(shape, idx, mode));
        CHECK(m(static_cast<Eigen::Index>(idx[mode]), col) == t.at(idx));
      });
      CHECK(fold(m, mode, shape) == t);
    }
  }
}

TEST_CASE("mode product matches the summation definition") {
  Rng rng(12);
  for (int trial = 0; trial < 60; ++trial) {
    const Shape shape = random_shape(rng, 1, 4);
    const DenseTensor t = random_tensor(rng, shape);
    const std::size_t mode = rng.index(shape.size());
    const auto rows = static_cast<Eigen::Index>(1 + rng.index(4));
    const Eigen::MatrixXd a = random_matrix(rng, rows, static_cast<Eigen::Index>(shape[mode]));
    const DenseTensor got = mode_product(t, a, mode);
    Shape out_shape = shape;
    out_shape[mode] = static_cast<std::size_t>(rows);
    DenseTensor expect(out_shape);
    for_each_index(out_shape, [&](const std::vector<std::size_t>& idx) {
      double sum = 0.0;
      std::vector<std::size_t> src = idx;
      for (std::size_t k = 0; k < shape[mode]; ++k) {
        src[mode] = k;
        sum += a(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(k)) * t.at(src);
      }
      expect.at(idx) = sum;
    });
    CHECK(max_abs_diff(got, expect) <= 1e-12);
  }
}

TEST_CASE("mode product identities") {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const Shape shape = random_shape(rng, 2, 4);
    const DenseTensor t = random_tensor(rng, shape);
    const std::size_t n = rng.index(shape.size());
    const Eigen::MatrixXd a = random_matrix(rng, 3, static_cast<Eigen::Index>(shape[n]));
    const Eigen::MatrixXd b = random_matrix(rng, 2, 3);
    // (T x_n A) x_n B = T x_n (BA)
    CHECK(max_abs_diff(mode_product(mode_product(t, a, n), b, n), mode_product(t, b * a, n)) <= 1e-12);
    // products along distinct modes commute
    const std::size_t m = (n + 1) % shape.size();
    const Eigen::MatrixXd c = random_matrix(rng, 2, static_cast<Eigen::Index>(shape[m]));
    CHECK(max_abs_diff(mode_product(mode_product(t, a, n), c, m), mode_product(mode_product(t, c, m), a, n)) <=
          1e-12);
    // unfolding identity: (T x_n A)_(n) = A T_(n)
    CHECK((matricize(mode_product(t, a, n), n) - a * matricize(t, n)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("kronecker matches the block definition") {
  Rng rng(14);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::MatrixXd a = random_matrix(rng, 1 + rng.index(4), 1 + rng.index(4));
    const Eigen::MatrixXd b = random_matrix(rng, 1 + rng.index(4), 1 + rng.index(4));
    const Eigen::MatrixXd k = kronecker(a, b);
    REQUIRE(k.rows() == a.rows() * b.rows());
    REQUIRE(k.cols() == a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index p = 0; p < b.rows(); ++p)
          for (Eigen::Index q = 0; q < b.cols(); ++q)
            CHECK(k(i * b.rows() + p, j * b.cols() + q) == a(i, j) * b(p, q));
  }
}

TEST_CASE("tucker_reconstruct matches the full multilinear sum") {
  Rng rng(15);
  for (int trial = 0; trial < 40; ++trial) {
    const Shape core_shape = random_shape(rng, 1, 4, 3);
    TuckerFactors f;
    f.core = random_tensor(rng, core_shape);
    Shape out_shape;
    for (auto r : core_shape) {
      const std::size_t rows = 1 + rng.index(4);
      out_shape.push_back(rows);
      f.factors.push_back(random_matrix(rng, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(r)));
    }
    const DenseTensor got = tucker_reconstruct(f);
    DenseTensor expect(out_shape);
    for_each_index(out_shape, [&](const std::vector<std::size_t>& i) {
      double sum = 0.0;
      for_each_index(core_shape, [&](const std::vector<std::size_t>& r) {
        double term = f.core.at(r);
        for (std::size_t k = 0; k < r.size(); ++k)
          term *= f.factors[k](static_cast<Eigen::Index>(i[k]), static_cast<Eigen::Index>(r[k]));
        sum += term;
      });
      expect.at(i) = sum;
    });
    CHECK(max_abs_diff(got, expect) <= 1e-12);
  }
}

TEST_CASE("full-rank HOSVD reproduces the tensor") {
  Rng rng(16);
  for (int trial = 0; trial < 30; ++trial) {
    const Shape shape = random_shape(rng, 1, 4, 5);
    const DenseTensor t = random_tensor(rng, shape);
    const TuckerFactors f = hosvd(t, shape);
    CHECK(max_abs_diff(tucker_reconstruct(f), t) <= 1e-10);
    for (const auto& u : f.factors)
      CHECK((u.transpose() * u - Eigen::MatrixXd::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("truncated HOSVD is exact on a tensor of lower multilinear rank") {
  Rng rng(17);
  TuckerFactors f;
  f.core = random_tensor(rng, {2, 3, 2});
  f.factors = {random_matrix(rng, 5, 2), random_matrix(rng, 6, 3), random_matrix(rng, 4, 2)};
  const DenseTensor t = tucker_reconstruct(f);
  CHECK(max_abs_diff(tucker_reconstruct(hosvd(t, {2, 3, 2})), t) <= 1e-10);
  CHECK_THROWS_AS(hosvd(t, {6, 3, 2}), ShapeError);
}

TEST_CASE("contract and inner product") {
  Rng rng(18);
  for (int trial = 0; trial < 30; ++trial) {
    const Shape shape = random_shape(rng, 2, 4);
    const DenseTensor t = random_tensor(rng, shape);
    const std::size_t mode = rng.index(shape.size());
    const Eigen::VectorXd v = random_vector(rng, static_cast<Eigen::Index>(shape[mode]));
    const DenseTensor got = contract(t, v, mode);
    Shape reduced = shape;
    reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(mode));
    DenseTensor expect(reduced);
    for_each_index(shape, [&](const std::vector<std::size_t>& idx) {
      std::vector<std::size_t> r = idx;
      r.erase(r.begin() + static_cast<std::ptrdiff_t>(mode));
      expect.at(r) += v(static_cast<Eigen::Index>(idx[mode])) * t.at(idx);
    });
    CHECK(max_abs_diff(got, expect) <= 1e-12);

    const DenseTensor u = random_tensor(rng, shape);
    double dot = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) dot += t[k] * u[k];
    CHECK(inner_product(t, u) == doctest::Approx(dot).epsilon(1e-12));
  }
}

TEST_CASE("shape errors") {
  CHECK_THROWS_AS(DenseTensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(DenseTensor({2, 2}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(DenseTensor({1}, {std::nan("")}), std::domain_error);
  const DenseTensor t({2, 3});
  CHECK_THROWS_AS(mode_product(t, Eigen::MatrixXd::Zero(2, 2), 1), ShapeError);
  CHECK_THROWS_AS(matricize(t, 2), ShapeError);
  CHECK_THROWS_AS(inner_product(t, DenseTensor({3, 2})), ShapeError);
  CHECK_THROWS_AS(fold(Eigen::MatrixXd::Zero(2, 2), 0, {2, 3}), ShapeError);
}
