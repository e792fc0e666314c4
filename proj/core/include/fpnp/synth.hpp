#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "fpnp/image.hpp"

namespace fpnp {

/// Synthetic image families standing in for the MRI, face and CT datasets.
enum class SynthKind {
  kSheppLogan,    // perturbed ellipse phantoms
  kTextureFaces,  // smooth blobs inside a face-like silhouette
  kCtLike,        // piecewise-constant anatomy with thin bright structures
};

SynthKind parse_synth_kind(std::string_view name);
std::string_view to_string(SynthKind kind) noexcept;

/// `n` single-channel size x size images with values in [0, 1]. Image i
/// depends only on (kind, size, seed, i).
std::vector<Image> synth_dataset(SynthKind kind, int n, int size, std::uint64_t seed);

/// Mean forward-difference gradient magnitude over the first channel.
double mean_gradient_magnitude(const Image& image);

}  // namespace fpnp
