#pragma once

#include "fpnp/image.hpp"

namespace fpnp {

/// Convolution weight tensor of logical shape (k, k, C_in, C_out).
///
/// Stored as the unfolded (C_out x C_in*k*k) matrix, so that
/// `at(a, b, j, i)` lives at row i, column (j*k + a)*k + b. The same matrix is
/// the GEMM operand of the im2col convolution and the matrix whose largest
/// singular value spectral normalization estimates.
class ConvWeight {
 public:
  ConvWeight() = default;
  ConvWeight(int kernel, int in_channels, int out_channels, Real fill = 0.0);

  int kernel() const noexcept { return kernel_; }
  int in_channels() const noexcept { return in_channels_; }
  int out_channels() const noexcept { return out_channels_; }
  Eigen::Index size() const noexcept { return matrix_.size(); }

  Real& at(int a, int b, int j, int i) {
    return matrix_(i, (std::int64_t{j} * kernel_ + a) * kernel_ + b);
  }
  Real at(int a, int b, int j, int i) const {
    return matrix_(i, (std::int64_t{j} * kernel_ + a) * kernel_ + b);
  }

  RowMatrix& matrix() noexcept { return matrix_; }
  const RowMatrix& matrix() const noexcept { return matrix_; }

  bool same_shape(const ConvWeight& o) const noexcept {
    return kernel_ == o.kernel_ && in_channels_ == o.in_channels_ &&
           out_channels_ == o.out_channels_;
  }

 private:
  int kernel_ = 0;
  int in_channels_ = 0;
  int out_channels_ = 0;
  RowMatrix matrix_;
};

/// Zero-padded, stride-1 cross-correlation preserving spatial shape:
/// out(i) = sum_j W(:,:,j,i) * in(j) + bias(i). An empty bias means none.
Image conv2d(const Image& input, const ConvWeight& weight, const Vector& bias = {});

/// Reverse-mode pass of conv2d. Accumulates into grad_weight and grad_bias
/// (either may be null) and returns the gradient with respect to the input
/// when grad_input is non-null.
void conv2d_backward(const Image& input, const ConvWeight& weight, const Image& grad_output,
                     Image* grad_input, RowMatrix* grad_weight, Vector* grad_bias);

}  // namespace fpnp
