#include <gtest/gtest.h>

#include "fpnp/conv.hpp"
#include "test_util.hpp"

namespace fpnp {
namespace {

using testing::random_image;
using testing::random_weight;

// Direct zero-padded cross-correlation.
Image conv_loop(const Image& in, const ConvWeight& w, const Vector& bias) {
  const int k = w.kernel();
  const int pad = k / 2;
  Image out(w.out_channels(), in.rows(), in.cols());
  for (int i = 0; i < w.out_channels(); ++i) {
    for (int r = 0; r < in.rows(); ++r) {
      for (int c = 0; c < in.cols(); ++c) {
        double s = bias.size() ? bias[i] : 0.0;
        for (int j = 0; j < w.in_channels(); ++j) {
          for (int a = 0; a < k; ++a) {
            for (int b = 0; b < k; ++b) {
              const int rr = r + a - pad;
              const int cc = c + b - pad;
              if (rr < 0 || rr >= in.rows() || cc < 0 || cc >= in.cols()) continue;
              s += w.at(a, b, j, i) * in(j, rr, cc);
            }
          }
        }
        out(i, r, c) = s;
      }
    }
  }
  return out;
}

class ConvShapes : public ::testing::TestWithParam<std::tuple<int, int, int>> {};

TEST_P(ConvShapes, MatchesLoop) {
  const auto [k, cin, cout] = GetParam();
  const Image in = random_image({cin, 9, 7}, 1, -1, 1);
  const ConvWeight w = random_weight(k, cin, cout, 2);
  const Vector bias = testing::random_vector(cout, 3);
  const Image got = conv2d(in, w, bias);
  const Image want = conv_loop(in, w, bias);
  EXPECT_LT((got.values() - want.values()).cwiseAbs().maxCoeff(), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(All, ConvShapes,
                         ::testing::Combine(::testing::Values(1, 3, 5), ::testing::Values(1, 4),
                                            ::testing::Values(1, 3)));

TEST(Conv, BackwardIsAdjoint) {
  // <conv(x), g> = <x, conv^T(g)>, and weight/bias gradients match the loop.
  const Image in = random_image({3, 8, 8}, 4, -1, 1);
  const ConvWeight w = random_weight(3, 3, 5, 5);
  const Image g = random_image({5, 8, 8}, 6, -1, 1);
  Image gin;
  RowMatrix gw = RowMatrix::Zero(5, 27);
  Vector gb = Vector::Zero(5);
  conv2d_backward(in, w, g, &gin, &gw, &gb);
  EXPECT_NEAR(conv2d(in, w).dot(g), in.dot(gin), 1e-10);

  // dL/dW(a,b,j,i) for L = <conv(x;W), g> is the response to a unit kernel.
  for (int t = 0; t < 10; ++t) {
    const int a = t % 3, b = (t / 3) % 3, j = t % 3, i = t % 5;
    ConvWeight unit(3, 3, 5);
    unit.at(a, b, j, i) = 1.0;
    EXPECT_NEAR(gw(i, (j * 3 + a) * 3 + b), conv_loop(in, unit, {}).dot(g), 1e-10);
  }
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(gb[i], g.plane(i).sum(), 1e-10);
}

TEST(Conv, BackwardAccumulates) {
  const Image in = random_image({2, 6, 6}, 7);
  const ConvWeight w = random_weight(3, 2, 2, 8);
  const Image g = random_image({2, 6, 6}, 9);
  RowMatrix once = RowMatrix::Zero(2, 18);
  conv2d_backward(in, w, g, nullptr, &once, nullptr);
  RowMatrix twice = once;
  conv2d_backward(in, w, g, nullptr, &twice, nullptr);
  EXPECT_LT((twice - 2 * once).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Conv, RejectsChannelMismatch) {
  const Image in = random_image({2, 6, 6}, 1);
  const ConvWeight w = random_weight(3, 3, 2, 2);
  EXPECT_THROW(conv2d(in, w), Error);
}

}  // namespace
}  // namespace fpnp
