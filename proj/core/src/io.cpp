#include "fpnp/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace fpnp {

static_assert(std::endian::native == std::endian::little, "archive payload assumes little-endian");

namespace {
constexpr std::string_view kMagic = "FPNPARC1";
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error(ErrorCode::kIo, "sha256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void atomic_write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "rename to " + path.string() + " failed: " + ec.message());
}

const NamedTensor* TensorArchive::find(std::string_view name) const {
  auto it = std::find_if(tensors.begin(), tensors.end(),
                         [&](const NamedTensor& t) { return t.name == name; });
  return it == tensors.end() ? nullptr : &*it;
}

const NamedTensor& TensorArchive::get(std::string_view name) const {
  if (const auto* t = find(name)) return *t;
  throw Error(ErrorCode::kIo, "archive has no tensor named '" + std::string(name) + "'");
}

std::string TensorArchive::serialize() const {
  nlohmann::json header;
  header["kind"] = kind;
  header["meta"] = meta;
  auto& index = header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    std::int64_t count = 1;
    for (auto d : t.shape) count *= d;
    if (count != static_cast<std::int64_t>(t.values.size())) {
      throw Error(ErrorCode::kShapeMismatch, "tensor '" + t.name + "' shape/value count mismatch");
    }
    index.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.values.size();
  }
  const std::string text = header.dump();
  std::string out(kMagic);
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof len);
  out += text;
  for (const auto& t : tensors) {
    out.append(reinterpret_cast<const char*>(t.values.data()), t.values.size() * sizeof(double));
  }
  return out;
}

TensorArchive TensorArchive::parse(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw Error(ErrorCode::kIo, "not an fpnp archive (bad magic)");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + kMagic.size(), sizeof len);
  const std::size_t body = kMagic.size() + sizeof len;
  if (bytes.size() < body + len) throw Error(ErrorCode::kIo, "truncated archive header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(body, len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("corrupt archive header: ") + e.what());
  }
  TensorArchive archive;
  archive.kind = header.at("kind").get<std::string>();
  archive.meta = header.at("meta");
  const std::size_t payload = body + len;
  for (const auto& entry : header.at("tensors")) {
    NamedTensor t;
    t.name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
    std::int64_t count = 1;
    for (auto d : t.shape) count *= d;
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const std::size_t start = payload + offset * sizeof(double);
    if (count < 0 || bytes.size() < start + count * sizeof(double)) {
      throw Error(ErrorCode::kIo, "truncated archive payload for '" + t.name + "'");
    }
    t.values.resize(count);
    std::memcpy(t.values.data(), bytes.data() + start, count * sizeof(double));
    archive.tensors.push_back(std::move(t));
  }
  return archive;
}

void save_archive(const TensorArchive& archive, const std::filesystem::path& path) {
  atomic_write_file(path, archive.serialize());
}

TensorArchive load_archive(const std::filesystem::path& path) {
  return TensorArchive::parse(read_file(path));
}

void write_pgm(const Image& image, const std::filesystem::path& path) {
  std::string out = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) +
                    "\n65535\n";
  out.reserve(out.size() + 2 * image.rows() * image.cols());
  for (int r = 0; r < image.rows(); ++r) {
    for (int c = 0; c < image.cols(); ++c) {
      const double v = std::clamp(image(0, r, c), 0.0, 1.0);
      const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
      out.push_back(static_cast<char>(q >> 8));
      out.push_back(static_cast<char>(q & 0xff));
    }
  }
  atomic_write_file(path, out);
}

namespace {

// Netpbm header token reader honoring '#' comments.
class NetpbmReader {
 public:
  explicit NetpbmReader(std::string_view bytes) : bytes_(bytes) {}

  std::string token() {
    skip_space();
    std::string tok;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      tok.push_back(bytes_[pos_++]);
    }
    if (tok.empty()) throw Error(ErrorCode::kIo, "truncated netpbm header");
    return tok;
  }

  long number() {
    const auto tok = token();
    try {
      return std::stol(tok);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kIo, "bad netpbm header field '" + tok + "'");
    }
  }

  // Exactly one whitespace byte separates the header from binary data.
  std::size_t binary_start() const { return pos_ + 1; }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image read_netpbm(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  NetpbmReader reader(bytes);
  const std::string magic = reader.token();
  const bool ascii = magic == "P2" || magic == "P3";
  const bool binary = magic == "P5" || magic == "P6";
  if (!ascii && !binary) throw Error(ErrorCode::kIo, path.string() + ": unsupported image format");
  const int channels = (magic == "P3" || magic == "P6") ? 3 : 1;
  const long w = reader.number();
  const long h = reader.number();
  const long maxval = reader.number();
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) {
    throw Error(ErrorCode::kIo, path.string() + ": invalid netpbm dimensions");
  }
  Image img(channels, static_cast<int>(h), static_cast<int>(w));
  const std::size_t samples = static_cast<std::size_t>(w * h * channels);
  std::vector<long> raw(samples);
  if (ascii) {
    for (auto& v : raw) v = reader.number();
  } else {
    const int bps = maxval > 255 ? 2 : 1;
    std::size_t pos = reader.binary_start();
    if (bytes.size() < pos + samples * bps) throw Error(ErrorCode::kIo, path.string() + ": truncated");
    for (auto& v : raw) {
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
      v = bps == 2 ? (long{p[0]} << 8) | p[1] : long{p[0]};
      pos += bps;
    }
  }
  std::size_t idx = 0;
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      for (int ch = 0; ch < channels; ++ch) {
        img(ch, static_cast<int>(r), static_cast<int>(c)) =
            static_cast<double>(raw[idx++]) / static_cast<double>(maxval);
      }
    }
  }
  return img;
}

}  // namespace fpnp
