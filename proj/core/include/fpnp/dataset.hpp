#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fpnp/image.hpp"

namespace fpnp {

struct SplitFractions {
  double train = 0.85;
  double val = 0.15;
  double test = 0.0;
};

/// Where images come from and how they are split. `source` is either
/// "synthetic:<family>" or a directory of Netpbm images.
struct DatasetSpec {
  std::string name = "shepp_logan";
  std::string source = "synthetic:shepp_logan";
  int count = 100;  // synthetic sources only
  int size = 64;
  int channels = 1;
  SplitFractions split;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ManifestEntry {
  std::string path;
  std::string split;
  std::string sha256;
  bool lossy = false;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Image> train;
  std::vector<Image> val;
  std::vector<Image> test;
  std::vector<ManifestEntry> manifest;
  std::size_t skipped = 0;
};

/// Per-split counts: round(fraction * n) for train and val, the rest to test.
struct SplitCounts {
  std::size_t train;
  std::size_t val;
  std::size_t test;
};
SplitCounts split_counts(const SplitFractions& split, std::size_t n);

/// Loads or generates the images, center-crops and resizes them to
/// size x size, scales to [0, 1] and assigns a deterministic shuffled split.
/// Undecodable files are skipped and counted.
Dataset ingest(const DatasetSpec& spec);

std::string manifest_text(const std::vector<ManifestEntry>& manifest);
void write_manifest(const std::vector<ManifestEntry>& manifest, const std::filesystem::path& path);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Throws kManifestMismatch if any recorded checksum differs from the data
/// on disk (or, for synthetic entries, from the regenerated images).
void verify_manifest(const DatasetSpec& spec, const std::vector<ManifestEntry>& manifest);

/// Center-crops to a square, resizes bilinearly to size x size and clamps to
/// [0, 1]. RGB input is converted to gray when one channel is requested.
Image fit_image(const Image& image, int size, int channels);

/// SHA-256 of an image's raw value bytes.
std::string image_checksum(const Image& image);

}  // namespace fpnp
