#include "fpnp/solver.hpp"

#include <cmath>
#include <string>

namespace fpnp {

MomentumMode parse_momentum_mode(std::string_view name) {
  if (name == "fista") return MomentumMode::kFista;
  if (name == "fixed_q1") return MomentumMode::kFixedQ1;
  throw Error(ErrorCode::kInvalidArgument, "unknown momentum mode '" + std::string(name) + "'");
}

std::string_view to_string(MomentumMode mode) noexcept {
  return mode == MomentumMode::kFista ? "fista" : "fixed_q1";
}

void SolverConfig::validate() const {
  if (iterations < 0) throw Error(ErrorCode::kInvalidArgument, "solver iterations must be >= 0");
  if (!(gamma > 0.0)) throw Error(ErrorCode::kInvalidArgument, "solver step size must be > 0");
}

MomentumStep momentum_step(Real q_prev, MomentumMode mode) {
  if (!(q_prev >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "momentum q must be >= 1");
  if (mode == MomentumMode::kFixedQ1) return {1.0, 0.0};
  const Real q = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * q_prev * q_prev));
  return {q, (q_prev - 1.0) / q};
}

UnrolledSolver::UnrolledSolver(const MeasurementOperator& op, const ArOperator& prior,
                               SolverConfig config)
    : op_(&op), prior_(&prior), config_(config) {
  config_.validate();
  const auto& in = op.input_shape();
  if (in.channels != prior.network().channels()) {
    throw Error(ErrorCode::kShapeMismatch,
                "operator signal has " + std::to_string(in.channels) +
                    " channels but the prior expects " + std::to_string(prior.network().channels()));
  }
}

Image UnrolledSolver::run(const Measurements& y, Tape* tape, const Observer* observer) const {
  const Image aty = op_->adjoint(y);
  Image x = aty;
  Image s_prev = x;
  Real q = 1.0;
  if (tape != nullptr) {
    tape->prior.assign(config_.iterations, {});
    tape->beta.assign(config_.iterations, 0.0);
  }
  if (observer && *observer) (*observer)(0, x);
  for (int k = 1; k <= config_.iterations; ++k) {
    // z = x - gamma * (A^H A x - A^H y)
    Image z = op_->normal(x);
    z -= aty;
    z *= -config_.gamma;
    z += x;
    Image s = tape ? prior_->apply(z, tape->prior[k - 1]) : prior_->apply(z);
    const auto [q_next, beta] = momentum_step(q, config_.momentum);
    q = q_next;
    if (tape != nullptr) tape->beta[k - 1] = beta;
    if (beta != 0.0) {
      x = s;
      x.values() += beta * (s.values() - s_prev.values());
    } else {
      x = s;
    }
    if (!x.all_finite()) {
      throw Error(ErrorCode::kNumerical, "non-finite iterate at iteration " + std::to_string(k));
    }
    s_prev = std::move(s);
    if (observer && *observer) (*observer)(k, x);
  }
  return x;
}

Image UnrolledSolver::reconstruct(const Measurements& y, const Observer& observer) const {
  return run(y, nullptr, &observer);
}

Image UnrolledSolver::reconstruct(const Measurements& y, Tape& tape) const {
  return run(y, &tape, nullptr);
}

Image UnrolledSolver::backward(const Tape& tape, const Image& grad_output,
                               PriorGradients& grads) const {
  const int iterations = static_cast<int>(tape.prior.size());
  Image x_bar = grad_output;
  Image carry(grad_output.shape());  // gradient reaching s_k from x_{k+1}
  for (int k = iterations; k >= 1; --k) {
    const Real beta = tape.beta[k - 1];
    Image s_bar = carry;
    s_bar.values() += (1.0 + beta) * x_bar.values();
    carry = x_bar * (-beta);
    Image z_bar = prior_->backward(tape.prior[k - 1], s_bar, &grads);
    x_bar = z_bar;
    x_bar.values() -= config_.gamma * op_->normal(z_bar).values();
  }
  x_bar += carry;  // s_0 = x_0
  return x_bar;
}

Image unrolled_reconstruct(const Measurements& y, const MeasurementOperator& op,
                           const PriorNetwork& net, const ModulationSet* modulation,
                           const SolverConfig& config) {
  const ArOperator prior(net, modulation);
  return UnrolledSolver(op, prior, config).reconstruct(y);
}

}  // namespace fpnp
