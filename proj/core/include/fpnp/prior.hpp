#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fpnp/conv.hpp"
#include "fpnp/io.hpp"
#include "fpnp/modulation.hpp"

namespace fpnp {

/// DnCNN-style layout: `blocks` conv+ReLU blocks followed by one output conv.
struct PriorArchitecture {
  int channels = 1;
  int blocks = 12;
  int features = 64;
  int kernel = 3;

  int layer_count() const noexcept { return blocks + 1; }
  friend bool operator==(const PriorArchitecture&, const PriorArchitecture&) = default;
};

/// Persistent power-iteration vectors for one layer's unfolded weight.
struct SpectralState {
  Vector u;  // length C_out
  Vector v;  // length C_in*k*k

  /// u^T W v, floored at 1e-12.
  Real sigma(const RowMatrix& weight) const;
};

inline constexpr Real kSigmaFloor = 1e-12;

/// One power-iteration update of `state` on `weight`, then W / sigma.
RowMatrix spectral_normalize(const RowMatrix& weight, SpectralState& state);

struct ConvLayer {
  ConvWeight weight;
  Vector bias;
  SpectralState spectral;
  bool activation = true;
  bool spectral_norm = true;

  /// W / sigma with the stored power-iteration vectors (no update).
  ConvWeight normalized_weight() const;
};

class PriorNetwork {
 public:
  static PriorNetwork build(const PriorArchitecture& arch, std::uint64_t seed, Real alpha = 0.2,
                            int spectral_warmup = 50);
  /// Full-size 12-block, 64-feature network.
  static PriorNetwork build(int channels, std::uint64_t seed);

  const PriorArchitecture& architecture() const noexcept { return arch_; }
  int channels() const noexcept { return arch_.channels; }
  int layer_count() const noexcept { return static_cast<int>(layers_.size()); }
  Real alpha() const noexcept { return alpha_; }
  void set_alpha(Real alpha);
  std::uint64_t seed() const noexcept { return seed_; }

  const std::vector<ConvLayer>& layers() const noexcept { return layers_; }
  std::vector<ConvLayer>& layers() noexcept { return layers_; }
  const ConvLayer& layer(int l) const { return layers_.at(l); }

  std::int64_t weight_count() const;
  std::int64_t bias_count() const;
  std::int64_t parameter_count() const { return weight_count() + bias_count(); }

  /// SHA-256 over every parameter byte (weights, biases, spectral vectors)
  /// plus alpha and the architecture.
  std::string fingerprint() const;

  /// Advances each layer's power iteration by one step (training mode).
  void update_spectral_state(int iterations = 1);

  TensorArchive to_archive() const;
  static PriorNetwork from_archive(const TensorArchive& archive);
  void save(const std::filesystem::path& path) const;
  static PriorNetwork load(const std::filesystem::path& path);

 private:
  PriorArchitecture arch_;
  Real alpha_ = 0.2;
  std::uint64_t seed_ = 0;
  std::vector<ConvLayer> layers_;
};

/// Accumulated gradients with respect to each layer's effective (normalized,
/// possibly modulated) weight and bias.
struct PriorGradients {
  std::vector<RowMatrix> weight;
  std::vector<Vector> bias;

  explicit PriorGradients(const PriorNetwork& net);
  void set_zero();
  PriorGradients& operator+=(const PriorGradients& other);
};

/// The averaged artifact-removal operator x - alpha * f(x) with frozen
/// parameters. Effective weights are computed once at construction.
class ArOperator {
 public:
  ArOperator(const PriorNetwork& net, const ModulationSet* modulation = nullptr);

  struct Tape {
    std::vector<Image> inputs;  // input of each conv layer
  };

  Image apply(const Image& x) const;
  Image apply(const Image& x, Tape& tape) const;
  /// f(x) alone, without the residual and averaging.
  Image residual_network(const Image& x) const;

  /// Given dL/d(output), returns dL/dx and accumulates parameter gradients.
  Image backward(const Tape& tape, const Image& grad_output, PriorGradients* grads) const;

  const PriorNetwork& network() const noexcept { return *net_; }
  const ModulationSet* modulation() const noexcept { return modulation_; }
  const std::vector<ConvWeight>& effective_weights() const noexcept { return effective_; }

 private:
  Image run(const Image& x, Tape* tape) const;

  const PriorNetwork* net_;
  const ModulationSet* modulation_;
  std::vector<ConvWeight> effective_;
};

Image ar_apply(const Image& x, const PriorNetwork& net, const ModulationSet* modulation = nullptr);

/// Gradients of the factors of `modulation` given gradients with respect to
/// the effective weights.
std::map<int, LayerFactors> modulation_gradients(const PriorNetwork& net,
                                                 const ModulationSet& modulation,
                                                 const PriorGradients& grads);

/// Gradients with respect to the raw weights W of an unmodulated network,
/// through W / (u^T W v) with the power-iteration vectors held constant.
std::vector<RowMatrix> backbone_weight_gradients(const PriorNetwork& net,
                                                 const PriorGradients& grads);

}  // namespace fpnp
