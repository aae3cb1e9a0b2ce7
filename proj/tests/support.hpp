#pragma once

#include "tenmtl/model.hpp"
#include "tenmtl/random.hpp"
#include "tenmtl/tensor.hpp"

#include <vector>

namespace testsupport {

using tenmtl::DenseTensor;
using tenmtl::Rng;
using tenmtl::Shape;

inline Shape random_shape(Rng& rng, std::size_t min_order, std::size_t max_order, std::size_t max_dim = 4) {
  const std::size_t order = min_order + rng.index(max_order - min_order + 1);
  Shape s(order);
  for (auto& d : s) d = 1 + rng.index(max_dim);
  return s;
}

inline DenseTensor random_tensor(Rng& rng, const Shape& shape) {
  std::vector<double> v(tenmtl::shape_size(shape));
  for (auto& x : v) x = rng.normal();
  return {shape, std::move(v)};
}

inline Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

inline Eigen::VectorXd random_vector(Rng& rng, Eigen::Index n) { return random_matrix(rng, n, 1).col(0); }

/// Calls f(index) for every multi-index of `shape` in row-major order.
template <class F>
void for_each_index(const Shape& shape, F&& f) {
  std::vector<std::size_t> idx(shape.size(), 0);
  const std::size_t total = tenmtl::shape_size(shape);
  for (std::size_t flat = 0; flat < total; ++flat) {
    f(idx);
    for (std::size_t k = shape.size(); k-- > 0;) {
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
    }
  }
}

/// Random multi-task data with scalar and/or tensor predictors drawn from a
/// planted linear model plus noise.
inline std::vector<tenmtl::TaskDataset> random_tasks(Rng& rng, std::size_t tasks, std::size_t n, std::size_t p,
                                                     const Shape& dims, bool bernoulli = false,
                                                     double noise = 0.3) {
  std::vector<tenmtl::TaskDataset> out(tasks);
  const std::size_t dim = dims.empty() ? 0 : tenmtl::shape_size(dims);
  const Eigen::VectorXd base = random_vector(rng, static_cast<Eigen::Index>(p + dim));
  for (std::size_t i = 0; i < tasks; ++i) {
    auto& t = out[i];
    t.id = std::to_string(i);
    const Eigen::VectorXd coef = base + 0.3 * random_vector(rng, base.size());
    t.z = random_matrix(rng, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    t.y.resize(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
      double eta = p ? t.z.row(static_cast<Eigen::Index>(j)).dot(coef.head(static_cast<Eigen::Index>(p))) : 0.0;
      if (dim) {
        t.x.push_back(random_tensor(rng, dims));
        eta += t.x.back().as_vector().dot(coef.tail(static_cast<Eigen::Index>(dim)));
      }
      if (bernoulli) {
        const double prob = 1.0 / (1.0 + std::exp(-0.5 * eta));
        t.y(static_cast<Eigen::Index>(j)) = rng.uniform() < prob ? 1.0 : 0.0;
      } else {
        t.y(static_cast<Eigen::Index>(j)) = eta + noise * rng.normal();
      }
    }
  }
  return out;
}

}  // namespace testsupport
