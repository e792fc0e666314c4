#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "fpnp/metrics.hpp"
#include "fpnp/solver.hpp"
#include "test_util.hpp"

namespace fpnp {
namespace {

using testing::random_image;
using testing::tiny_net;

// A prior whose residual network is identically zero, so D = identity.
PriorNetwork identity_prior(int channels, int features = 4) {
  auto net = tiny_net(channels, 2, features);
  for (auto& layer : net.layers()) {
    layer.weight.matrix().setZero();
    layer.bias.setZero();
  }
  return net;
}

TEST(Momentum, FistaRecursion) {
  const auto s1 = momentum_step(1.0, MomentumMode::kFista);
  EXPECT_NEAR(s1.q, (1.0 + std::sqrt(5.0)) / 2.0, 1e-15);
  EXPECT_EQ(s1.beta, 0.0);
  const auto s2 = momentum_step(s1.q, MomentumMode::kFista);
  // Independent evaluation of the recursion.
  const double q2 = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * s1.q * s1.q));
  EXPECT_NEAR(s2.q, q2, 1e-15);
  EXPECT_NEAR(s2.q, 2.19353, 1e-5);
  EXPECT_NEAR(s2.beta, (s1.q - 1.0) / q2, 1e-15);
  EXPECT_NEAR(s2.beta, 0.28175, 1e-5);
}

TEST(Momentum, FixedQ1) {
  for (double q : {1.0, 1.618, 5.0, 100.0}) {
    const auto s = momentum_step(q, MomentumMode::kFixedQ1);
    EXPECT_EQ(s.q, 1.0);
    EXPECT_EQ(s.beta, 0.0);
  }
  EXPECT_THROW(momentum_step(0.5, MomentumMode::kFista), Error);
  EXPECT_THROW(momentum_step(0.5, MomentumMode::kFixedQ1), Error);
  EXPECT_EQ(parse_momentum_mode("fista"), MomentumMode::kFista);
  EXPECT_EQ(parse_momentum_mode("fixed_q1"), MomentumMode::kFixedQ1);
  EXPECT_THROW(parse_momentum_mode("nesterov"), Error);
}

TEST(Solver, ZeroIterationsIsZeroFilled) {
  const auto op = MeasurementOperator::masked_fourier(make_mask(MaskPattern::kRadial, 16, 16, 4.0, 1),
                                                      SignalField::kReal);
  const auto net = tiny_net();
  const auto y = op.forward(random_image({1, 16, 16}, 1));
  SolverConfig cfg;
  cfg.iterations = 0;
  EXPECT_EQ(unrolled_reconstruct(y, op, net, nullptr, cfg).values(), op.adjoint(y).values());
}

TEST(Solver, FullMaskExactInOneStep) {
  const auto op = MeasurementOperator::masked_fourier(make_mask(MaskPattern::kFull, 16, 16, 1.0, 0),
                                                      SignalField::kReal);
  const auto net = identity_prior(1);
  const Image x = random_image({1, 16, 16}, 2);
  const auto y = op.forward(x);
  const ArOperator prior(net);
  SolverConfig cfg{5, 1.0, MomentumMode::kFixedQ1};
  const UnrolledSolver solver(op, prior, cfg);
  solver.reconstruct(y, [&](int k, const Image& xk) {
    if (k >= 1) {
      EXPECT_LE((xk.values() - x.values()).cwiseAbs().maxCoeff(), 1e-12) << "iteration " << k;
    }
  });
}

TEST(Solver, GradientDescentMatchesLeastSquares) {
  const int m = 16;
  const auto op = MeasurementOperator::gaussian_matrix(m, Shape{1, 8, 8}, 3);
  const auto net = identity_prior(1);
  const Image x = random_image({1, 8, 8}, 4);
  const auto y = op.forward(x);
  const Eigen::MatrixXd a = *op.matrix();
  const double l = Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()[0];
  SolverConfig cfg{200, 1.0 / (l * l), MomentumMode::kFixedQ1};
  const ArOperator prior(net);
  const UnrolledSolver solver(op, prior, cfg);
  double prev = std::numeric_limits<double>::infinity();
  const Image xk = solver.reconstruct(y, [&](int, const Image& it) {
    const double g = data_fidelity(op, it, y);
    EXPECT_LE(g, prev * (1 + 1e-12) + 1e-24);
    prev = g;
  });
  // Gradient descent from A^T y stays in range(A^T): the minimum-norm solution.
  const Eigen::VectorXd yr = y.values.real();
  const Eigen::VectorXd x_ls = a.completeOrthogonalDecomposition().pseudoInverse() * yr;
  EXPECT_LE((xk.values() - x_ls).norm() / x_ls.norm(), 1e-3);
}

TEST(Solver, Deterministic) {
  const auto op = MeasurementOperator::masked_fourier(make_mask(MaskPattern::kSpiral, 16, 16, 4.0, 1),
                                                      SignalField::kReal);
  const auto net = tiny_net();
  const auto y = op.forward(random_image({1, 16, 16}, 5));
  SolverConfig cfg{4, 1.5, MomentumMode::kFista};
  EXPECT_EQ(unrolled_reconstruct(y, op, net, nullptr, cfg).values(),
            unrolled_reconstruct(y, op, net, nullptr, cfg).values());
}

TEST(Solver, ZeroModulationMatchesBase) {
  const auto op = MeasurementOperator::masked_fourier(make_mask(MaskPattern::kRadial, 16, 16, 4.0, 1),
                                                      SignalField::kReal);
  const auto net = tiny_net();
  const auto y = op.forward(random_image({1, 16, 16}, 6));
  const auto zero = zero_modulation(net, "z");
  SolverConfig cfg{6, 1.5, MomentumMode::kFixedQ1};
  const Image a = unrolled_reconstruct(y, op, net, nullptr, cfg);
  const Image b = unrolled_reconstruct(y, op, net, &zero, cfg);
  EXPECT_LE((a.values() - b.values()).norm(), 1e-6 * a.values().norm());
}

TEST(Solver, ChannelMismatch) {
  const auto op = MeasurementOperator::masked_fourier(make_mask(MaskPattern::kRadial, 16, 16, 4.0, 1),
                                                      SignalField::kComplex);
  const auto net = tiny_net(1);
  const ArOperator prior(net);
  EXPECT_THROW(UnrolledSolver(op, prior, SolverConfig{}), Error);
  SolverConfig bad;
  bad.gamma = 0.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Solver, NonFiniteAbortsWithIteration) {
  const auto op = MeasurementOperator::masked_fourier(make_mask(MaskPattern::kFull, 16, 16, 1.0, 0),
                                                      SignalField::kReal);
  auto net = tiny_net();
  net.layers()[0].bias[0] = std::numeric_limits<double>::infinity();
  const auto y = op.forward(random_image({1, 16, 16}, 7));
  try {
    unrolled_reconstruct(y, op, net, nullptr, SolverConfig{3, 1.0, MomentumMode::kFixedQ1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumerical);
    EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos) << e.what();
  }
}

// Loss of x^K as a function of the network, for finite differences.
double solver_loss(const MeasurementOperator& op, const PriorNetwork& net, const ModulationSet* m,
                   const Measurements& y, const Image& target, const SolverConfig& cfg) {
  return loss(unrolled_reconstruct(y, op, net, m, cfg), target);
}

class SolverGradient : public ::testing::TestWithParam<MomentumMode> {};

TEST_P(SolverGradient, ModulationFactorsMatchFiniteDifferences) {
  const auto op = MeasurementOperator::masked_fourier(make_mask(MaskPattern::kRadial, 16, 16, 4.0, 2),
                                                      SignalField::kReal);
  const auto net = tiny_net(1, 3, 8, 3);
  auto mod = init_modulation(net, "d", 4);
  const Image x = random_image({1, 16, 16}, 8);
  const auto y = op.forward(x);
  const SolverConfig cfg{3, 1.5, GetParam()};
  const ArOperator prior(net, &mod);
  const UnrolledSolver solver(op, prior, cfg);
  UnrolledSolver::Tape tape;
  const Image xk = solver.reconstruct(y, tape);
  PriorGradients grads(net);
  solver.backward(tape, loss_gradient(xk, x), grads);
  const auto fg = modulation_gradients(net, mod, grads);
  std::mt19937 rng(9);
  Vector LayerFactors::*members[] = {&LayerFactors::kernel_rows, &LayerFactors::kernel_cols,
                                     &LayerFactors::in_channels, &LayerFactors::out_channels};
  for (int t = 0; t < 20; ++t) {
    const int l = static_cast<int>(rng() % net.layer_count());
    const auto member = members[rng() % 4];
    const auto i = static_cast<Eigen::Index>(rng() % (mod.layers.at(l).*member).size());
    const double h = 1e-4;
    auto plus = mod;
    auto minus = mod;
    (plus.layers.at(l).*member)[i] += h;
    (minus.layers.at(l).*member)[i] -= h;
    const double fd = (solver_loss(op, net, &plus, y, x, cfg) - solver_loss(op, net, &minus, y, x, cfg)) / (2 * h);
    const double an = (fg.at(l).*member)[i];
    EXPECT_LE(std::abs(an - fd), 1e-3 * std::max(std::abs(fd), 1e-8)) << "layer " << l;
  }
}

TEST_P(SolverGradient, BackboneWeightsMatchFiniteDifferences) {
  const auto op = MeasurementOperator::gaussian_matrix(40, Shape{1, 8, 8}, 5);
  const auto net = tiny_net(1, 2, 4, 6);
  const Image x = random_image({1, 8, 8}, 10);
  const auto y = op.forward(x);
  const SolverConfig cfg{3, 0.5, GetParam()};
  PriorGradients grads(net);
  {
    const ArOperator prior(net);
    const UnrolledSolver solver(op, prior, cfg);
    UnrolledSolver::Tape tape;
    const Image xk = solver.reconstruct(y, tape);
    solver.backward(tape, loss_gradient(xk, x), grads);
  }
  const auto wg = backbone_weight_gradients(net, grads);
  for (int l = 0; l < net.layer_count(); ++l) {
    for (int t = 0; t < 3; ++t) {
      const Eigen::Index idx = (t * 11 + 3 * l) % net.layer(l).weight.size();
      const double h = 1e-5;
      auto plus = net;
      auto minus = net;
      plus.layers()[l].weight.matrix().data()[idx] += h;
      minus.layers()[l].weight.matrix().data()[idx] -= h;
      const double fd =
          (solver_loss(op, plus, nullptr, y, x, cfg) - solver_loss(op, minus, nullptr, y, x, cfg)) / (2 * h);
      EXPECT_LE(std::abs(wg[l].data()[idx] - fd), 1e-3 * std::max(std::abs(fd), 1e-8)) << "layer " << l;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Modes, SolverGradient,
                         ::testing::Values(MomentumMode::kFixedQ1, MomentumMode::kFista));

}  // namespace
}  // namespace fpnp
