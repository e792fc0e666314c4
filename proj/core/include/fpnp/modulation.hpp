#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpnp/conv.hpp"

namespace fpnp {

class PriorNetwork;

/// Rank-one factors of one convolution layer. The combined modulation is
/// M[a,b,j,i] = kernel_rows[a] * kernel_cols[b] * in_channels[j] * out_channels[i]
/// and the layer runs with weights W * (1 + M).
struct LayerFactors {
  Vector kernel_rows;
  Vector kernel_cols;
  Vector in_channels;
  Vector out_channels;

  static LayerFactors zeros(int kernel, int c_in, int c_out);
  static LayerFactors ones(int kernel, int c_in, int c_out);

  int kernel() const noexcept { return static_cast<int>(kernel_rows.size()); }
  std::int64_t parameter_count() const noexcept {
    return kernel_rows.size() + kernel_cols.size() + in_channels.size() + out_channels.size();
  }
  bool all_finite() const;
  /// Throws kShapeMismatch unless the lengths are (k, k, C_in, C_out) of `weight`.
  void check_matches(const ConvWeight& weight) const;

  friend bool operator==(const LayerFactors& a, const LayerFactors& b);
};

ConvWeight combine_factors(const LayerFactors& factors);

/// W * (1 + combine_factors(factors)).
ConvWeight effective_weights(const ConvWeight& weight, const LayerFactors& factors);

/// Convolution with the dense effective weight W * (1 + M).
Image modulated_conv(const Image& input, const ConvWeight& weight, const LayerFactors& factors);

/// Same result computed without materializing M: the plain convolution plus
/// the channel-decomposed product term, in which input channels are scaled by
/// M3, each 2D kernel slice by M1 (x) M2, and output channels by M4.
Image modulated_conv_decomposed(const Image& input, const ConvWeight& weight,
                                const LayerFactors& factors);

/// Chain rule from dL/dW_eff (W_eff = W * (1 + M)) to the four factor vectors.
LayerFactors factor_gradients(const LayerFactors& factors, const ConvWeight& weight,
                              const RowMatrix& grad_effective);

/// Per-domain modulation for one backbone. Layers missing from `layers` are
/// unmodulated (implicit zero).
struct ModulationSet {
  std::string domain_id;
  std::string backbone_fingerprint;
  std::uint64_t seed = 0;
  std::map<int, LayerFactors> layers;
  nlohmann::json metadata = nlohmann::json::object();

  const LayerFactors* find(int layer) const;
  std::int64_t parameter_count() const;
  std::vector<int> layer_indices() const;
};

/// Factors drawn i.i.d. from U[-1/sqrt(f), 1/sqrt(f)], f the vector length.
/// `layers` restricts modulation to a subset; by default every layer.
ModulationSet init_modulation(const PriorNetwork& net, const std::string& domain_id,
                              std::uint64_t seed,
                              std::optional<std::vector<int>> layers = std::nullopt);

/// All-zero factors on every layer; behaves exactly like no modulation.
ModulationSet zero_modulation(const PriorNetwork& net, const std::string& domain_id);

/// Sum over `layers` of (k + k + C_in + C_out).
std::int64_t count_modulation_params(const PriorNetwork& net, std::span<const int> layers);
std::int64_t count_modulation_params(const PriorNetwork& net);

/// Throws kShapeMismatch if a factor set does not fit its layer, or if a layer
/// index is out of range.
void check_modulation(const PriorNetwork& net, const ModulationSet& modulation);

std::string serialize_modulation(const ModulationSet& modulation);
ModulationSet parse_modulation(std::string_view bytes);
void save_modulation(const ModulationSet& modulation, const std::filesystem::path& path);
ModulationSet load_modulation(const std::filesystem::path& path);

}  // namespace fpnp
