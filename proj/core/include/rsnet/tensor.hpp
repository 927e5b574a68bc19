#pragma once

#include <Eigen/Core>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "rsnet/errors.hpp"

namespace rsnet {

/// Dense row-major tensor. Feature maps use NCHW order, matrices (rows, cols).
template <typename T>
class Tensor {
 public:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using VectorMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
  using ConstVectorMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), T(0)) {}

  Tensor(std::initializer_list<std::size_t> shape)
      : Tensor(std::vector<std::size_t>(shape)) {}

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<std::size_t> shape, T value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t i, std::size_t j) {
    assert(rank() == 2);
    return data_[i * shape_[1] + j];
  }
  const T& operator()(std::size_t i, std::size_t j) const {
    assert(rank() == 2);
    return data_[i * shape_[1] + j];
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    assert(rank() == 4);
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    assert(rank() == 4);
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  void set_zero() { fill(T(0)); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// Reinterpret as a different shape with identical element count.
  Tensor reshaped(std::vector<std::size_t> shape) const {
    if (count(shape) != size()) {
      throw LengthMismatch("reshape from " + std::to_string(size()) + " to " +
                           std::to_string(count(shape)) + " elements");
    }
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  MatrixMap as_matrix(std::size_t rows, std::size_t cols) {
    assert(rows * cols == size());
    return MatrixMap(data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  ConstMatrixMap as_matrix(std::size_t rows, std::size_t cols) const {
    assert(rows * cols == size());
    return ConstMatrixMap(data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  VectorMap as_vector() { return VectorMap(data(), static_cast<Eigen::Index>(size())); }
  ConstVectorMap as_vector() const {
    return ConstVectorMap(data(), static_cast<Eigen::Index>(size()));
  }

  bool all_finite() const {
    for (const T& v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t(1),
                           std::multiplies<std::size_t>());
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

/// Channel-wise concatenation of two NCHW tensors with matching N, H, W.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dim(0) != b.dim(0)) throw LengthMismatch("batch sizes differ in concat");
  if (a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw SpatialMismatch(std::to_string(a.dim(2)) + "x" + std::to_string(a.dim(3)) +
                          " vs " + std::to_string(b.dim(2)) + "x" + std::to_string(b.dim(3)));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t hw = a.dim(2) * a.dim(3);
  Tensor<T> out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(a.data() + i * ca * hw, a.data() + (i + 1) * ca * hw,
              out.data() + i * (ca + cb) * hw);
    std::copy(b.data() + i * cb * hw, b.data() + (i + 1) * cb * hw,
              out.data() + i * (ca + cb) * hw + ca * hw);
  }
  return out;
}

}  // namespace rsnet
