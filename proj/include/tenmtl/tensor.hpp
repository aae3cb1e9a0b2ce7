#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tenmtl {

using Shape = std::vector<std::size_t>;

/// Thrown when operands have incompatible shapes or an index is out of range.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense n-mode array stored row-major (last index fastest).
///
/// A default-constructed tensor is "absent": order 0 and no storage. Every
/// constructed tensor has strictly positive mode dimensions.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape);
  DenseTensor(Shape shape, std::vector<double> data);

  static DenseTensor from_matrix(const Eigen::MatrixXd& m);

  const Shape& shape() const { return shape_; }
  std::size_t order() const { return shape_.size(); }
  std::size_t dim(std::size_t mode) const { return shape_.at(mode); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t flat) const { return data_[flat]; }
  double& operator[](std::size_t flat) { return data_[flat]; }

  double& at(std::span<const std::size_t> index);
  double at(std::span<const std::size_t> index) const;
  std::size_t flat_index(std::span<const std::size_t> index) const;

  double frobenius_norm() const;
  Eigen::Map<const Eigen::VectorXd> as_vector() const;

  /// Rows = dim(0), cols = product of remaining dims, i.e. the row-major reshape.
  Eigen::MatrixXd as_matrix() const;

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Core tensor plus one factor matrix per mode; factor k is I_k x P_k.
struct TuckerFactors {
  DenseTensor core;
  std::vector<Eigen::MatrixXd> factors;

  void validate() const;
};

/// Mode-`mode` unfolding. Columns enumerate the remaining indices with the
/// earliest remaining mode varying fastest.
Eigen::MatrixXd matricize(const DenseTensor& t, std::size_t mode);

/// Inverse of matricize for a tensor of the given shape.
DenseTensor fold(const Eigen::MatrixXd& m, std::size_t mode, const Shape& shape);

/// t x_mode a, where a is L x I_mode.
DenseTensor mode_product(const DenseTensor& t, const Eigen::MatrixXd& a, std::size_t mode);

/// Sums mode `mode` against v and removes it; requires order >= 2.
DenseTensor contract(const DenseTensor& t, const Eigen::VectorXd& v, std::size_t mode);

Eigen::MatrixXd kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

DenseTensor tucker_reconstruct(const TuckerFactors& f);

/// Truncated higher-order SVD. Factor columns are the leading left singular
/// vectors of each unfolding, sign-normalised so the largest-magnitude entry of
/// each column is positive.
TuckerFactors hosvd(const DenseTensor& t, const std::vector<std::size_t>& ranks);

double inner_product(const DenseTensor& a, const DenseTensor& b);

}  // namespace tenmtl
