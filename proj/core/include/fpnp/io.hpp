#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpnp/image.hpp"

namespace fpnp {

/// Lowercase hex SHA-256 of a byte range.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over `path`.
void atomic_write_file(const std::filesystem::path& path, std::string_view bytes);

struct NamedTensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> values;
};

/// Self-describing binary container: an 8-byte magic, a JSON header and a
/// payload of little-endian doubles. Used for checkpoints, modulation
/// entries and mask files.
struct TensorArchive {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor& get(std::string_view name) const;
  const NamedTensor* find(std::string_view name) const;

  std::string serialize() const;
  static TensorArchive parse(std::string_view bytes);
};

void save_archive(const TensorArchive& archive, const std::filesystem::path& path);
TensorArchive load_archive(const std::filesystem::path& path);

/// Binary PGM (P5). Values are clipped to [0,1] and quantized to 16 bits;
/// channels beyond the first are ignored.
void write_pgm(const Image& image, const std::filesystem::path& path);

/// Reads P2/P5 graymaps and P3/P6 pixmaps; output channels are 1 for PGM and
/// 3 for PPM, scaled by maxval into [0,1].
Image read_netpbm(const std::filesystem::path& path);

}  // namespace fpnp
