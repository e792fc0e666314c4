#pragma once

#include <functional>
#include <string_view>
#include <vector>

#include "fpnp/operators.hpp"
#include "fpnp/prior.hpp"

namespace fpnp {

enum class MomentumMode { kFista, kFixedQ1 };

MomentumMode parse_momentum_mode(std::string_view name);
std::string_view to_string(MomentumMode mode) noexcept;

struct SolverConfig {
  int iterations = 33;
  Real gamma = 1.5;
  MomentumMode momentum = MomentumMode::kFixedQ1;

  void validate() const;
};

struct MomentumStep {
  Real q;
  Real beta;
};

/// FISTA: q = (1 + sqrt(1 + 4 q_prev^2)) / 2, beta = (q_prev - 1) / q.
/// Fixed: q = 1, beta = 0.
MomentumStep momentum_step(Real q_prev, MomentumMode mode);

/// Unrolled PnP-FISTA:
///   x0 = A^H y, s0 = x0
///   z_k = x_{k-1} - gamma * A^H (A x_{k-1} - y)
///   s_k = D(z_k)
///   x_k = s_k + beta_k (s_k - s_{k-1})
class UnrolledSolver {
 public:
  UnrolledSolver(const MeasurementOperator& op, const ArOperator& prior, SolverConfig config);

  struct Tape {
    std::vector<ArOperator::Tape> prior;
    std::vector<Real> beta;
  };

  using Observer = std::function<void(int k, const Image& x)>;

  Image reconstruct(const Measurements& y, const Observer& observer = {}) const;
  Image reconstruct(const Measurements& y, Tape& tape) const;

  /// Back-propagates dL/dx_K through all iterations; accumulates prior
  /// parameter gradients and returns dL/dx0.
  Image backward(const Tape& tape, const Image& grad_output, PriorGradients& grads) const;

  const SolverConfig& config() const noexcept { return config_; }

 private:
  Image run(const Measurements& y, Tape* tape, const Observer* observer) const;

  const MeasurementOperator* op_;
  const ArOperator* prior_;
  SolverConfig config_;
};

Image unrolled_reconstruct(const Measurements& y, const MeasurementOperator& op,
                           const PriorNetwork& net, const ModulationSet* modulation,
                           const SolverConfig& config);

}  // namespace fpnp
