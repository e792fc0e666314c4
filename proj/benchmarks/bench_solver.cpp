#include <benchmark/benchmark.h>

#include "fpnp/operators.hpp"
#include "fpnp/prior.hpp"
#include "fpnp/solver.hpp"
#include "fpnp/synth.hpp"

namespace {

using namespace fpnp;

void BM_ArApply(benchmark::State& state) {
  const auto net = PriorNetwork::build(PriorArchitecture{1, 5, static_cast<int>(state.range(0)), 3}, 0);
  const ArOperator prior(net);
  const auto x = synth_dataset(SynthKind::kSheppLogan, 1, 64, 0).front();
  for (auto _ : state) benchmark::DoNotOptimize(prior.apply(x));
}
BENCHMARK(BM_ArApply)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_FourierForwardAdjoint(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto op = MeasurementOperator::masked_fourier(make_mask(MaskPattern::kRadial, side, side, 4.0, 0),
                                                      SignalField::kReal);
  const auto x = synth_dataset(SynthKind::kSheppLogan, 1, side, 0).front();
  for (auto _ : state) benchmark::DoNotOptimize(op.adjoint(op.forward(x)));
}
BENCHMARK(BM_FourierForwardAdjoint)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_Reconstruct(benchmark::State& state) {
  const auto net = PriorNetwork::build(PriorArchitecture{1, 5, 16, 3}, 0);
  const auto op = MeasurementOperator::masked_fourier(make_mask(MaskPattern::kRadial, 64, 64, 4.0, 0),
                                                      SignalField::kReal);
  const auto y = op.forward(synth_dataset(SynthKind::kSheppLogan, 1, 64, 0).front());
  const SolverConfig cfg{static_cast<int>(state.range(0)), 1.0, MomentumMode::kFixedQ1};
  for (auto _ : state) benchmark::DoNotOptimize(unrolled_reconstruct(y, op, net, nullptr, cfg));
}
BENCHMARK(BM_Reconstruct)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
