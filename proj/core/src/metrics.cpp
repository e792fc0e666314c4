#include "fpnp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace fpnp {

double loss(const Image& x_hat, const Image& x) {
  require_same_shape(x_hat, x, "loss");
  return (x_hat.values() - x.values()).squaredNorm() / static_cast<double>(x.size());
}

Image loss_gradient(const Image& x_hat, const Image& x) {
  require_same_shape(x_hat, x, "loss gradient");
  Image g(x.shape());
  g.values() = (x_hat.values() - x.values()) * (2.0 / static_cast<double>(x.size()));
  return g;
}

double psnr(const Image& x, const Image& x_hat, double peak) {
  require_same_shape(x, x_hat, "psnr");
  if (!(peak > 0.0)) throw Error(ErrorCode::kInvalidArgument, "psnr peak must be positive");
  const double mse = (x.values() - x_hat.values()).squaredNorm() / static_cast<double>(x.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(size);
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-0.5 * (i - half) * (i - half) / (sigma * sigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable "valid" filtering of one plane.
RowMatrix filter_valid(const RowMatrix& in, const std::vector<double>& w) {
  const int n = static_cast<int>(w.size());
  const Eigen::Index rows = in.rows() - n + 1;
  const Eigen::Index cols = in.cols() - n + 1;
  RowMatrix tmp = RowMatrix::Zero(in.rows(), cols);
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += w[i] * in(r, c + i);
      tmp(r, c) = acc;
    }
  }
  RowMatrix out = RowMatrix::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += w[i] * tmp(r + i, c);
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Image& x, const Image& x_hat) {
  require_same_shape(x, x_hat, "ssim");
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  int size = std::min({11, x.rows(), x.cols()});
  if (size % 2 == 0) --size;
  const auto w = gaussian_window(size, 1.5);
  double total = 0.0;
  for (int c = 0; c < x.channels(); ++c) {
    const RowMatrix a = x.plane(c);
    const RowMatrix b = x_hat.plane(c);
    const RowMatrix mu_a = filter_valid(a, w);
    const RowMatrix mu_b = filter_valid(b, w);
    const RowMatrix aa = filter_valid(a.cwiseProduct(a), w);
    const RowMatrix bb = filter_valid(b.cwiseProduct(b), w);
    const RowMatrix ab = filter_valid(a.cwiseProduct(b), w);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a.data()[i];
      const double mb = mu_b.data()[i];
      const double va = aa.data()[i] - ma * ma;
      const double vb = bb.data()[i] - mb * mb;
      const double cov = ab.data()[i] - ma * mb;
      sum += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
             ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
    }
    total += sum / static_cast<double>(mu_a.size());
  }
  return total / x.channels();
}

}  // namespace fpnp
