#include "fpnp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "fpnp/io.hpp"
#include "fpnp/synth.hpp"

namespace fpnp {

namespace {

constexpr std::string_view kSyntheticPrefix = "synthetic:";

bool is_synthetic(const std::string& source) {
  return source.rfind(kSyntheticPrefix, 0) == 0;
}

bool lossy_extension(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg";
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "dataset source " + dir.string() + " is not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

Image fit_image(const Image& in, int size, int channels) {
  Image src = in;
  if (src.channels() == 3 && channels == 1) {
    Image gray(1, src.rows(), src.cols());
    const Eigen::Index n = src.shape().pixels();
    gray.values() = 0.299 * src.values().segment(0, n) + 0.587 * src.values().segment(n, n) +
                    0.114 * src.values().segment(2 * n, n);
    src = std::move(gray);
  } else if (src.channels() != channels) {
    throw Error(ErrorCode::kIo, "image has " + std::to_string(src.channels()) +
                                    " channels, dataset declares " + std::to_string(channels));
  }
  const int side = std::min(src.rows(), src.cols());
  const int r0 = (src.rows() - side) / 2;
  const int c0 = (src.cols() - side) / 2;
  Image out(channels, size, size);
  const double scale = static_cast<double>(side) / size;
  for (int ch = 0; ch < channels; ++ch) {
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const double sy = std::clamp((r + 0.5) * scale - 0.5, 0.0, side - 1.0);
        const double sx = std::clamp((c + 0.5) * scale - 0.5, 0.0, side - 1.0);
        const int y0 = static_cast<int>(sy);
        const int x0 = static_cast<int>(sx);
        const int y1 = std::min(y0 + 1, side - 1);
        const int x1 = std::min(x0 + 1, side - 1);
        const double fy = sy - y0;
        const double fx = sx - x0;
        out(ch, r, c) = (1 - fy) * ((1 - fx) * src(ch, r0 + y0, c0 + x0) + fx * src(ch, r0 + y0, c0 + x1)) +
                        fy * ((1 - fx) * src(ch, r0 + y1, c0 + x0) + fx * src(ch, r0 + y1, c0 + x1));
      }
    }
  }
  out.values() = out.values().cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

void DatasetSpec::validate() const {
  const double sum = split.train + split.val + split.test;
  if (std::abs(sum - 1.0) > 1e-9 || split.train < 0 || split.val < 0 || split.test < 0) {
    throw Error(ErrorCode::kConfig, "dataset.split fractions must be non-negative and sum to 1");
  }
  if (size < 16) throw Error(ErrorCode::kConfig, "dataset.size must be >= 16");
  if (channels < 1 || channels > 3) throw Error(ErrorCode::kConfig, "dataset.channels must be 1..3");
}

SplitCounts split_counts(const SplitFractions& split, std::size_t n) {
  const auto train = static_cast<std::size_t>(std::llround(split.train * static_cast<double>(n)));
  const auto val = std::min(n - std::min(n, train),
                            static_cast<std::size_t>(std::llround(split.val * static_cast<double>(n))));
  const std::size_t t = std::min(train, n);
  return {t, val, n - t - val};
}

std::string image_checksum(const Image& image) {
  return sha256_hex(std::string_view(reinterpret_cast<const char*>(image.data()),
                                     static_cast<std::size_t>(image.size()) * sizeof(Real)));
}

Dataset ingest(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  std::vector<Image> images;
  std::vector<std::string> paths;
  std::vector<std::string> checksums;
  std::vector<bool> lossy;
  if (is_synthetic(spec.source)) {
    const auto kind = parse_synth_kind(spec.source.substr(kSyntheticPrefix.size()));
    if (spec.channels != 1) throw Error(ErrorCode::kConfig, "synthetic datasets are single-channel");
    images = synth_dataset(kind, spec.count, spec.size, spec.seed);
    for (std::size_t i = 0; i < images.size(); ++i) {
      paths.push_back(spec.source + "/" + std::to_string(i));
      checksums.push_back(image_checksum(images[i]));
      lossy.push_back(false);
    }
  } else {
    for (const auto& file : list_images(spec.source)) {
      try {
        const auto bytes = read_file(file);
        images.push_back(fit_image(read_netpbm(file), spec.size, spec.channels));
        paths.push_back(file.string());
        checksums.push_back(sha256_hex(bytes));
        lossy.push_back(lossy_extension(file));
      } catch (const Error& e) {
        std::cerr << "warning: skipping " << file.string() << ": " << e.what() << "\n";
        ++ds.skipped;
      }
    }
    if (ds.skipped > 0) {
      std::cerr << "warning: skipped " << ds.skipped << " undecodable file(s) in " << spec.source << "\n";
    }
  }
  const auto counts = split_counts(spec.split, images.size());
  if (counts.train == 0 || (spec.split.val > 0 && counts.val == 0) ||
      (spec.split.test > 0 && counts.test == 0)) {
    throw Error(ErrorCode::kEmptyDataset, "dataset '" + spec.name + "' yields an empty split (" +
                                              std::to_string(images.size()) + " images)");
  }
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    const char* split = k < counts.train ? "train" : (k < counts.train + counts.val ? "val" : "test");
    auto& bucket = k < counts.train ? ds.train : (k < counts.train + counts.val ? ds.val : ds.test);
    bucket.push_back(images[i]);
    ds.manifest.push_back({paths[i], split, checksums[i], lossy[i]});
  }
  return ds;
}

std::string manifest_text(const std::vector<ManifestEntry>& manifest) {
  std::ostringstream out;
  out << "# path\tsplit\tsha256\tlossy\n";
  for (const auto& e : manifest) {
    out << e.path << "\t" << e.split << "\t" << e.sha256 << "\t" << (e.lossy ? 1 : 0) << "\n";
  }
  return out.str();
}

void write_manifest(const std::vector<ManifestEntry>& manifest, const std::filesystem::path& path) {
  atomic_write_file(path, manifest_text(manifest));
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    ManifestEntry e;
    std::string lossy;
    if (!std::getline(fields, e.path, '\t') || !std::getline(fields, e.split, '\t') ||
        !std::getline(fields, e.sha256, '\t') || !std::getline(fields, lossy)) {
      throw Error(ErrorCode::kIo, "malformed manifest line in " + path.string());
    }
    e.lossy = lossy == "1";
    out.push_back(std::move(e));
  }
  return out;
}

void verify_manifest(const DatasetSpec& spec, const std::vector<ManifestEntry>& manifest) {
  if (is_synthetic(spec.source)) {
    const auto current = ingest(spec);
    if (current.manifest.size() != manifest.size()) {
      throw Error(ErrorCode::kManifestMismatch, "manifest lists " + std::to_string(manifest.size()) +
                                                    " images, dataset has " +
                                                    std::to_string(current.manifest.size()));
    }
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      const auto& a = manifest[i];
      const auto& b = current.manifest[i];
      if (a.path != b.path || a.split != b.split || a.sha256 != b.sha256) {
        throw Error(ErrorCode::kManifestMismatch, "manifest entry " + a.path + " does not match data");
      }
    }
    return;
  }
  for (const auto& e : manifest) {
    std::string bytes;
    try {
      bytes = read_file(e.path);
    } catch (const Error&) {
      throw Error(ErrorCode::kManifestMismatch, "manifest file " + e.path + " is missing");
    }
    if (sha256_hex(bytes) != e.sha256) {
      throw Error(ErrorCode::kManifestMismatch, "checksum mismatch for " + e.path);
    }
  }
}

}  // namespace fpnp
