#pragma once

#include <Eigen/Core>

#include <cstdint>

#include "fpnp/error.hpp"

namespace fpnp {

using Real = double;
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct Shape {
  int channels = 0;
  int rows = 0;
  int cols = 0;

  std::int64_t pixels() const noexcept { return std::int64_t{rows} * cols; }
  std::int64_t size() const noexcept { return pixels() * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Multi-channel image, stored channel-major then row-major. Each channel is a
/// contiguous rows*cols block, which is also the layout the im2col kernels use.
class Image {
 public:
  Image() = default;
  explicit Image(Shape shape, Real fill = 0.0);
  Image(int channels, int rows, int cols, Real fill = 0.0)
      : Image(Shape{channels, rows, cols}, fill) {}

  const Shape& shape() const noexcept { return shape_; }
  int channels() const noexcept { return shape_.channels; }
  int rows() const noexcept { return shape_.rows; }
  int cols() const noexcept { return shape_.cols; }
  Eigen::Index size() const noexcept { return values_.size(); }

  Vector& values() noexcept { return values_; }
  const Vector& values() const noexcept { return values_; }
  Real* data() noexcept { return values_.data(); }
  const Real* data() const noexcept { return values_.data(); }

  Real& operator()(int c, int r, int col) {
    return values_[(std::int64_t{c} * shape_.rows + r) * shape_.cols + col];
  }
  Real operator()(int c, int r, int col) const {
    return values_[(std::int64_t{c} * shape_.rows + r) * shape_.cols + col];
  }

  Eigen::Map<RowMatrix> plane(int c);
  Eigen::Map<const RowMatrix> plane(int c) const;

  /// Channels as rows of a (channels x pixels) matrix.
  Eigen::Map<RowMatrix> as_matrix();
  Eigen::Map<const RowMatrix> as_matrix() const;

  Image& operator+=(const Image& other);
  Image& operator-=(const Image& other);
  Image& operator*=(Real s);

  friend Image operator+(Image a, const Image& b) { return a += b; }
  friend Image operator-(Image a, const Image& b) { return a -= b; }
  friend Image operator*(Image a, Real s) { return a *= s; }
  friend Image operator*(Real s, Image a) { return a *= s; }

  Real dot(const Image& other) const;
  Real squared_norm() const { return values_.squaredNorm(); }
  bool all_finite() const { return values_.allFinite(); }

 private:
  Shape shape_;
  Vector values_;
};

void require_same_shape(const Image& a, const Image& b, const char* what);

}  // namespace fpnp
