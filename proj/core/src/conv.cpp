#include "fpnp/conv.hpp"

#include <string>

namespace fpnp {

ConvWeight::ConvWeight(int kernel, int in_channels, int out_channels, Real fill)
    : kernel_(kernel), in_channels_(in_channels), out_channels_(out_channels) {
  if (kernel < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "kernel size must be positive, got " + std::to_string(kernel));
  }
  if (in_channels < 1 || out_channels < 1) {
    throw Error(ErrorCode::kInvalidArgument, "channel counts must be positive");
  }
  matrix_ = RowMatrix::Constant(out_channels, std::int64_t{in_channels} * kernel * kernel, fill);
}

namespace {

// cols has (C_in*k*k) rows and (rows*cols) columns.
void im2col(const Image& input, int k, RowMatrix& cols) {
  const int channels = input.channels();
  const int h = input.rows();
  const int w = input.cols();
  const int pad = k / 2;
  cols.resize(std::int64_t{channels} * k * k, std::int64_t{h} * w);
  for (int j = 0; j < channels; ++j) {
    const Real* src = input.data() + std::int64_t{j} * h * w;
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) {
        Real* dst = cols.row((std::int64_t{j} * k + a) * k + b).data();
        const int dr = a - pad;
        const int dc = b - pad;
        for (int r = 0; r < h; ++r) {
          const int sr = r + dr;
          Real* out = dst + std::int64_t{r} * w;
          if (sr < 0 || sr >= h) {
            std::fill(out, out + w, 0.0);
            continue;
          }
          const Real* in = src + std::int64_t{sr} * w;
          const int c0 = std::max(0, -dc);
          const int c1 = std::min(w, w - dc);
          for (int c = 0; c < c0; ++c) out[c] = 0.0;
          for (int c = c0; c < c1; ++c) out[c] = in[c + dc];
          for (int c = std::max(c1, c0); c < w; ++c) out[c] = 0.0;
        }
      }
    }
  }
}

void col2im_accumulate(const RowMatrix& cols, int k, Image& grad_input) {
  const int channels = grad_input.channels();
  const int h = grad_input.rows();
  const int w = grad_input.cols();
  const int pad = k / 2;
  for (int j = 0; j < channels; ++j) {
    Real* dst = grad_input.data() + std::int64_t{j} * h * w;
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) {
        const Real* src = cols.row((std::int64_t{j} * k + a) * k + b).data();
        const int dr = a - pad;
        const int dc = b - pad;
        for (int r = 0; r < h; ++r) {
          const int sr = r + dr;
          if (sr < 0 || sr >= h) continue;
          const Real* g = src + std::int64_t{r} * w;
          Real* out = dst + std::int64_t{sr} * w;
          const int c0 = std::max(0, -dc);
          const int c1 = std::min(w, w - dc);
          for (int c = c0; c < c1; ++c) out[c + dc] += g[c];
        }
      }
    }
  }
}

void check_input(const Image& input, const ConvWeight& weight) {
  if (weight.kernel() % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "same-size convolution needs an odd kernel, got " + std::to_string(weight.kernel()));
  }
  if (input.channels() != weight.in_channels()) {
    throw Error(ErrorCode::kShapeMismatch,
                "convolution expects " + std::to_string(weight.in_channels()) +
                    " input channels, got " + std::to_string(input.channels()));
  }
}

}  // namespace

Image conv2d(const Image& input, const ConvWeight& weight, const Vector& bias) {
  check_input(input, weight);
  if (bias.size() != 0 && bias.size() != weight.out_channels()) {
    throw Error(ErrorCode::kShapeMismatch, "bias length does not match output channels");
  }
  Image out(weight.out_channels(), input.rows(), input.cols());
  auto out_mat = out.as_matrix();
  if (weight.kernel() == 1) {
    out_mat.noalias() = weight.matrix() * input.as_matrix();
  } else {
    RowMatrix cols;
    im2col(input, weight.kernel(), cols);
    out_mat.noalias() = weight.matrix() * cols;
  }
  if (bias.size() != 0) out_mat.colwise() += bias;
  return out;
}

void conv2d_backward(const Image& input, const ConvWeight& weight, const Image& grad_output,
                     Image* grad_input, RowMatrix* grad_weight, Vector* grad_bias) {
  check_input(input, weight);
  const auto g = grad_output.as_matrix();
  if (grad_bias != nullptr) *grad_bias += g.rowwise().sum().transpose();
  if (weight.kernel() == 1) {
    if (grad_weight != nullptr) grad_weight->noalias() += g * input.as_matrix().transpose();
    if (grad_input != nullptr) {
      *grad_input = Image(input.shape());
      grad_input->as_matrix().noalias() = weight.matrix().transpose() * g;
    }
    return;
  }
  if (grad_weight != nullptr) {
    RowMatrix cols;
    im2col(input, weight.kernel(), cols);
    grad_weight->noalias() += g * cols.transpose();
  }
  if (grad_input != nullptr) {
    RowMatrix grad_cols = weight.matrix().transpose() * g;
    *grad_input = Image(input.shape());
    col2im_accumulate(grad_cols, weight.kernel(), *grad_input);
  }
}

}  // namespace fpnp
