#include "tenmtl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace tenmtl {

std::size_t shape_size(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t k = 0; k < shape.size(); ++k) os << (k ? "," : "") << shape[k];
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one mode");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_string(shape));
}

// Splits a shape around `mode` into (outer, inner) strides for row-major storage.
std::pair<std::size_t, std::size_t> outer_inner(const Shape& shape, std::size_t mode) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < mode; ++k) outer *= shape[k];
  for (std::size_t k = mode + 1; k < shape.size(); ++k) inner *= shape[k];
  return {outer, inner};
}

}  // namespace

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), 0.0);
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_size(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  for (double v : data_)
    if (!std::isfinite(v)) throw std::domain_error("tensor entries must be finite");
}

DenseTensor DenseTensor::from_matrix(const Eigen::MatrixXd& m) {
  DenseTensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.data_[i * m.cols() + j] = m(i, j);
  return t;
}

std::size_t DenseTensor::flat_index(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw ShapeError("index order does not match tensor order");
  std::size_t flat = 0;
  for (std::size_t k = 0; k < shape_.size(); ++k) {
    if (index[k] >= shape_[k]) throw ShapeError("tensor index out of range");
    flat = flat * shape_[k] + index[k];
  }
  return flat;
}

double& DenseTensor::at(std::span<const std::size_t> index) { return data_[flat_index(index)]; }
double DenseTensor::at(std::span<const std::size_t> index) const { return data_[flat_index(index)]; }

double DenseTensor::frobenius_norm() const { return as_vector().norm(); }

Eigen::Map<const Eigen::VectorXd> DenseTensor::as_vector() const {
  return {data_.data(), static_cast<Eigen::Index>(data_.size())};
}

Eigen::MatrixXd DenseTensor::as_matrix() const {
  if (empty()) return {};
  const auto rows = static_cast<Eigen::Index>(shape_[0]);
  const auto cols = static_cast<Eigen::Index>(data_.size() / shape_[0]);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = data_[i * cols + j];
  return m;
}

void TuckerFactors::validate() const {
  if (factors.size() != core.order())
    throw ShapeError("Tucker factor count " + std::to_string(factors.size()) +
                     " does not match core order " + std::to_string(core.order()));
  for (std::size_t k = 0; k < factors.size(); ++k) {
    if (static_cast<std::size_t>(factors[k].cols()) != core.dim(k))
      throw ShapeError("factor " + std::to_string(k) + " column count does not match core");
  }
}

Eigen::MatrixXd matricize(const DenseTensor& t, std::size_t mode) {
  if (mode >= t.order()) throw ShapeError("matricize: mode out of range");
  const auto& shape = t.shape();
  const std::size_t n = t.order();
  // Column stride of each non-selected mode: earlier modes vary fastest.
  std::vector<std::size_t> col_stride(n, 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < n; ++k) {
    if (k == mode) continue;
    col_stride[k] = stride;
    stride *= shape[k];
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(shape[mode]), static_cast<Eigen::Index>(stride));
  std::vector<std::size_t> idx(n, 0);
  for (std::size_t flat = 0; flat < t.size(); ++flat) {
    std::size_t col = 0;
    for (std::size_t k = 0; k < n; ++k) col += col_stride[k] * idx[k];
    m(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(col)) = t[flat];
    for (std::size_t k = n; k-- > 0;) {
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
    }
  }
  return m;
}

DenseTensor fold(const Eigen::MatrixXd& m, std::size_t mode, const Shape& shape) {
  check_shape(shape);
  if (mode >= shape.size()) throw ShapeError("fold: mode out of range");
  const std::size_t total = shape_size(shape);
  if (static_cast<std::size_t>(m.rows()) != shape[mode] ||
      static_cast<std::size_t>(m.rows() * m.cols()) != total)
    throw ShapeError("fold: matrix size does not match shape " + shape_string(shape));
  const std::size_t n = shape.size();
  std::vector<std::size_t> col_stride(n, 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < n; ++k) {
    if (k == mode) continue;
    col_stride[k] = stride;
    stride *= shape[k];
  }
  std::vector<double> data(total);
  std::vector<std::size_t> idx(n, 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t col = 0;
    for (std::size_t k = 0; k < n; ++k) col += col_stride[k] * idx[k];
    data[flat] = m(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(col));
    for (std::size_t k = n; k-- > 0;) {
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
    }
  }
  return {shape, std::move(data)};
}

DenseTensor mode_product(const DenseTensor& t, const Eigen::MatrixXd& a, std::size_t mode) {
  if (mode >= t.order()) throw ShapeError("mode_product: mode out of range");
  if (static_cast<std::size_t>(a.cols()) != t.dim(mode))
    throw ShapeError("mode_product: matrix has " + std::to_string(a.cols()) +
                     " columns but mode " + std::to_string(mode) + " has dimension " +
                     std::to_string(t.dim(mode)));
  if (a.rows() == 0) throw ShapeError("mode_product: matrix must have at least one row");
  Shape out_shape = t.shape();
  out_shape[mode] = static_cast<std::size_t>(a.rows());
  const auto [outer, inner] = outer_inner(t.shape(), mode);
  const std::size_t in_dim = t.dim(mode);
  const std::size_t out_dim = out_shape[mode];
  std::vector<double> out(outer * out_dim * inner, 0.0);
  const auto src = t.data();
  for (std::size_t o = 0; o < outer; ++o) {
    const double* s = src.data() + o * in_dim * inner;
    double* d = out.data() + o * out_dim * inner;
    for (std::size_t l = 0; l < out_dim; ++l) {
      double* drow = d + l * inner;
      for (std::size_t i = 0; i < in_dim; ++i) {
        const double coef = a(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i));
        if (coef == 0.0) continue;
        const double* srow = s + i * inner;
        for (std::size_t q = 0; q < inner; ++q) drow[q] += coef * srow[q];
      }
    }
  }
  return {std::move(out_shape), std::move(out)};
}

DenseTensor contract(const DenseTensor& t, const Eigen::VectorXd& v, std::size_t mode) {
  if (t.order() < 2) throw ShapeError("contract: tensor order must be at least 2");
  if (mode >= t.order()) throw ShapeError("contract: mode out of range");
  if (static_cast<std::size_t>(v.size()) != t.dim(mode))
    throw ShapeError("contract: vector length does not match mode dimension");
  Shape out_shape = t.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(mode));
  const auto [outer, inner] = outer_inner(t.shape(), mode);
  const std::size_t dim = t.dim(mode);
  std::vector<double> out(outer * inner, 0.0);
  const auto src = t.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < dim; ++i) {
      const double coef = v(static_cast<Eigen::Index>(i));
      const double* s = src.data() + (o * dim + i) * inner;
      double* d = out.data() + o * inner;
      for (std::size_t q = 0; q < inner; ++q) d[q] += coef * s[q];
    }
  return {std::move(out_shape), std::move(out)};
}

Eigen::MatrixXd kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return k;
}

DenseTensor tucker_reconstruct(const TuckerFactors& f) {
  f.validate();
  DenseTensor out = f.core;
  for (std::size_t k = 0; k < f.factors.size(); ++k) out = mode_product(out, f.factors[k], k);
  return out;
}

TuckerFactors hosvd(const DenseTensor& t, const std::vector<std::size_t>& ranks) {
  if (ranks.size() != t.order())
    throw ShapeError("hosvd: expected " + std::to_string(t.order()) + " ranks");
  TuckerFactors f;
  f.factors.reserve(t.order());
  for (std::size_t k = 0; k < t.order(); ++k) {
    if (ranks[k] < 1 || ranks[k] > t.dim(k))
      throw ShapeError("hosvd: rank " + std::to_string(ranks[k]) + " invalid for mode " +
                       std::to_string(k) + " of dimension " + std::to_string(t.dim(k)));
    const Eigen::MatrixXd unfolded = matricize(t, k);
    // A tall unfolding needs the full U when the rank exceeds its column count.
    const bool full = static_cast<Eigen::Index>(ranks[k]) > unfolded.cols();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(unfolded,
                                          full ? Eigen::ComputeFullU : Eigen::ComputeThinU);
    Eigen::MatrixXd u = svd.matrixU().leftCols(static_cast<Eigen::Index>(ranks[k]));
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
      Eigen::Index arg = 0;
      u.col(c).cwiseAbs().maxCoeff(&arg);
      if (u(arg, c) < 0) u.col(c) *= -1.0;
    }
    f.factors.push_back(std::move(u));
  }
  DenseTensor core = t;
  for (std::size_t k = 0; k < t.order(); ++k) core = mode_product(core, f.factors[k].transpose(), k);
  f.core = std::move(core);
  return f;
}

double inner_product(const DenseTensor& a, const DenseTensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("inner_product: shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " differ");
  return a.as_vector().dot(b.as_vector());
}

}  // namespace tenmtl
