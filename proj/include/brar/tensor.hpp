#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace brar {

using Index = Eigen::Index;

/// Dense tensor of rank 0, 1 or 2 backed by a row-major Eigen matrix.
///
/// Vectors are stored as a single row, scalars as a 1x1 matrix, so the
/// underlying buffer is always row-major and `size()` equals the product of
/// `shape()`.
template <typename Scalar>
class BasicTensor {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  BasicTensor() : data_(Matrix::Zero(1, 1)), rank_(0) {}

  /// Wraps a matrix as a rank-2 tensor.
  explicit BasicTensor(Matrix m) : data_(std::move(m)), rank_(2) { check_dims(); }

  static BasicTensor scalar(Scalar v) {
    BasicTensor t;
    t.data_(0, 0) = v;
    return t;
  }

  static BasicTensor zeros_vector(Index n) { return vector(RowVector::Zero(n)); }

  template <typename Derived>
  static BasicTensor vector(const Eigen::MatrixBase<Derived>& v) {
    BasicTensor t;
    t.rank_ = 1;
    t.data_.resize(1, v.size());
    for (Index i = 0; i < v.size(); ++i) t.data_(0, i) = v(i);
    t.check_dims();
    return t;
  }

  static BasicTensor vector(const std::vector<Scalar>& v) {
    return vector(Eigen::Map<const RowVector>(v.data(), static_cast<Index>(v.size())));
  }

  static BasicTensor zeros(Index rows, Index cols) { return BasicTensor(Matrix::Zero(rows, cols)); }

  /// A zero tensor with the same shape as `like`.
  static BasicTensor zeros_like(const BasicTensor& like) {
    BasicTensor t = like;
    t.data_.setZero();
    return t;
  }

  int rank() const { return rank_; }
  Index rows() const { return data_.rows(); }
  Index cols() const { return data_.cols(); }
  Index size() const { return data_.size(); }

  std::vector<Index> shape() const {
    switch (rank_) {
      case 0: return {};
      case 1: return {data_.cols()};
      default: return {data_.rows(), data_.cols()};
    }
  }

  bool same_shape(const BasicTensor& o) const {
    return rank_ == o.rank_ && rows() == o.rows() && cols() == o.cols();
  }

  std::string shape_string() const {
    switch (rank_) {
      case 0: return "[]";
      case 1: return "[" + std::to_string(cols()) + "]";
      default: return "[" + std::to_string(rows()) + " x " + std::to_string(cols()) + "]";
    }
  }

  Matrix& mat() { return data_; }
  const Matrix& mat() const { return data_; }

  /// Flat row-major view over every coordinate.
  Eigen::Map<RowVector> flat() { return {data_.data(), data_.size()}; }
  Eigen::Map<const RowVector> flat() const { return {data_.data(), data_.size()}; }

  Scalar& operator[](Index i) { return data_.data()[i]; }
  Scalar operator[](Index i) const { return data_.data()[i]; }
  Scalar& operator()(Index r, Index c) { return data_(r, c); }
  Scalar operator()(Index r, Index c) const { return data_(r, c); }

  Scalar item() const {
    if (size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_string());
    return data_(0, 0);
  }

  bool all_finite() const { return data_.allFinite(); }

 private:
  void check_dims() const {
    if (data_.rows() <= 0 || data_.cols() <= 0)
      throw std::invalid_argument("tensor dimensions must be positive");
  }

  Matrix data_;
  int rank_;
};

using Tensor = BasicTensor<double>;
using Matrix = Tensor::Matrix;
using RowVector = Tensor::RowVector;

}  // namespace brar
