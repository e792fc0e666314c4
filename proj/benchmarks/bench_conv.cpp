#include <benchmark/benchmark.h>

#include <random>

#include "fpnp/conv.hpp"
#include "fpnp/modulation.hpp"

namespace {

using namespace fpnp;

Vector noise(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  Vector v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

ConvWeight weight(int channels, std::uint64_t seed) {
  ConvWeight w(3, channels, channels);
  const Vector v = noise(w.size(), seed);
  w.matrix() = Eigen::Map<const RowMatrix>(v.data(), w.matrix().rows(), w.matrix().cols());
  return w;
}

Image input(int channels, int side) {
  Image x(Shape{channels, side, side});
  x.values() = noise(x.size(), 1);
  return x;
}

LayerFactors factors(int channels) {
  return {noise(3, 2), noise(3, 3), noise(channels, 4), noise(channels, 5)};
}

void BM_Conv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int side = static_cast<int>(state.range(1));
  const auto w = weight(c, 0);
  const auto x = input(c, side);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w));
}
BENCHMARK(BM_Conv2d)->Args({16, 64})->Args({64, 64})->Unit(benchmark::kMicrosecond);

void BM_ModulatedConv(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const auto w = weight(c, 0);
  const auto f = factors(c);
  const auto x = input(c, 64);
  for (auto _ : state) benchmark::DoNotOptimize(modulated_conv(x, w, f));
}
BENCHMARK(BM_ModulatedConv)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_ModulatedConvDecomposed(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const auto w = weight(c, 0);
  const auto f = factors(c);
  const auto x = input(c, 64);
  for (auto _ : state) benchmark::DoNotOptimize(modulated_conv_decomposed(x, w, f));
}
BENCHMARK(BM_ModulatedConvDecomposed)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

}  // namespace
