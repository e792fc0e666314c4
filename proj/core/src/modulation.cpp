#include "fpnp/modulation.hpp"

#include <cmath>
#include <random>
#include <regex>

#include "fpnp/io.hpp"
#include "fpnp/prior.hpp"

namespace fpnp {

LayerFactors LayerFactors::zeros(int kernel, int c_in, int c_out) {
  return {Vector::Zero(kernel), Vector::Zero(kernel), Vector::Zero(c_in), Vector::Zero(c_out)};
}

LayerFactors LayerFactors::ones(int kernel, int c_in, int c_out) {
  return {Vector::Ones(kernel), Vector::Ones(kernel), Vector::Ones(c_in), Vector::Ones(c_out)};
}

bool LayerFactors::all_finite() const {
  return kernel_rows.allFinite() && kernel_cols.allFinite() && in_channels.allFinite() &&
         out_channels.allFinite();
}

void LayerFactors::check_matches(const ConvWeight& weight) const {
  if (kernel_rows.size() != weight.kernel() || kernel_cols.size() != weight.kernel() ||
      in_channels.size() != weight.in_channels() ||
      out_channels.size() != weight.out_channels()) {
    throw Error(ErrorCode::kShapeMismatch,
                "modulation factors (" + std::to_string(kernel_rows.size()) + "," +
                    std::to_string(kernel_cols.size()) + "," + std::to_string(in_channels.size()) +
                    "," + std::to_string(out_channels.size()) + ") do not fit layer (" +
                    std::to_string(weight.kernel()) + "," + std::to_string(weight.kernel()) + "," +
                    std::to_string(weight.in_channels()) + "," +
                    std::to_string(weight.out_channels()) + ")");
  }
}

bool operator==(const LayerFactors& a, const LayerFactors& b) {
  return a.kernel_rows == b.kernel_rows && a.kernel_cols == b.kernel_cols &&
         a.in_channels == b.in_channels && a.out_channels == b.out_channels;
}

ConvWeight combine_factors(const LayerFactors& f) {
  const int k = f.kernel();
  if (f.kernel_cols.size() != k) {
    throw Error(ErrorCode::kShapeMismatch, "kernel row/column factors differ in length");
  }
  ConvWeight m(k, static_cast<int>(f.in_channels.size()), static_cast<int>(f.out_channels.size()));
  for (int i = 0; i < m.out_channels(); ++i) {
    for (int j = 0; j < m.in_channels(); ++j) {
      const Real ij = f.out_channels[i] * f.in_channels[j];
      for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) m.at(a, b, j, i) = ij * f.kernel_rows[a] * f.kernel_cols[b];
      }
    }
  }
  return m;
}

ConvWeight effective_weights(const ConvWeight& weight, const LayerFactors& factors) {
  factors.check_matches(weight);
  ConvWeight out = combine_factors(factors);
  out.matrix() = weight.matrix().cwiseProduct((out.matrix().array() + 1.0).matrix());
  return out;
}

Image modulated_conv(const Image& input, const ConvWeight& weight, const LayerFactors& factors) {
  return conv2d(input, effective_weights(weight, factors));
}

Image modulated_conv_decomposed(const Image& input, const ConvWeight& weight,
                                const LayerFactors& factors) {
  factors.check_matches(weight);
  if (input.channels() != weight.in_channels()) {
    throw Error(ErrorCode::kShapeMismatch, "modulated convolution input channel mismatch");
  }
  const int k = weight.kernel();
  // Kernel slices modulated by the 2D outer product M1 (x) M2.
  ConvWeight sliced = weight;
  for (int i = 0; i < weight.out_channels(); ++i) {
    for (int j = 0; j < weight.in_channels(); ++j) {
      for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) {
          sliced.at(a, b, j, i) *= factors.kernel_rows[a] * factors.kernel_cols[b];
        }
      }
    }
  }
  Image scaled = input;
  for (int j = 0; j < input.channels(); ++j) scaled.plane(j) *= factors.in_channels[j];
  Image product = conv2d(scaled, sliced);
  for (int i = 0; i < product.channels(); ++i) product.plane(i) *= factors.out_channels[i];
  Image out = conv2d(input, weight);
  out += product;
  return out;
}

LayerFactors factor_gradients(const LayerFactors& f, const ConvWeight& weight,
                              const RowMatrix& grad_effective) {
  f.check_matches(weight);
  const int k = weight.kernel();
  LayerFactors g = LayerFactors::zeros(k, weight.in_channels(), weight.out_channels());
  const RowMatrix gm = grad_effective.cwiseProduct(weight.matrix());
  for (int i = 0; i < weight.out_channels(); ++i) {
    for (int j = 0; j < weight.in_channels(); ++j) {
      // s = sum_{a,b} gm * M1[a] M2[b] restricted to slice (j, i).
      Real slice_sum = 0.0;
      for (int a = 0; a < k; ++a) {
        Real row_sum = 0.0;
        for (int b = 0; b < k; ++b) {
          const Real v = gm(i, (std::int64_t{j} * k + a) * k + b);
          row_sum += v * f.kernel_cols[b];
          g.kernel_cols[b] += v * f.kernel_rows[a] * f.in_channels[j] * f.out_channels[i];
        }
        g.kernel_rows[a] += row_sum * f.in_channels[j] * f.out_channels[i];
        slice_sum += row_sum * f.kernel_rows[a];
      }
      g.in_channels[j] += slice_sum * f.out_channels[i];
      g.out_channels[i] += slice_sum * f.in_channels[j];
    }
  }
  return g;
}

const LayerFactors* ModulationSet::find(int layer) const {
  auto it = layers.find(layer);
  return it == layers.end() ? nullptr : &it->second;
}

std::int64_t ModulationSet::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [l, f] : layers) n += f.parameter_count();
  return n;
}

std::vector<int> ModulationSet::layer_indices() const {
  std::vector<int> out;
  for (const auto& [l, f] : layers) out.push_back(l);
  return out;
}

namespace {

Vector uniform_vector(std::mt19937_64& rng, int length) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(length));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Vector v(length);
  for (int i = 0; i < length; ++i) v[i] = dist(rng);
  return v;
}

std::vector<int> all_layers(const PriorNetwork& net) {
  std::vector<int> out(net.layer_count());
  for (int l = 0; l < net.layer_count(); ++l) out[l] = l;
  return out;
}

void check_layer_index(const PriorNetwork& net, int l) {
  if (l < 0 || l >= net.layer_count()) {
    throw Error(ErrorCode::kShapeMismatch, "layer index " + std::to_string(l) +
                                               " outside network with " +
                                               std::to_string(net.layer_count()) + " layers");
  }
}

}  // namespace

ModulationSet init_modulation(const PriorNetwork& net, const std::string& domain_id,
                              std::uint64_t seed, std::optional<std::vector<int>> layers) {
  ModulationSet set;
  set.domain_id = domain_id;
  set.backbone_fingerprint = net.fingerprint();
  set.seed = seed;
  std::mt19937_64 rng(seed);
  for (int l : layers ? *layers : all_layers(net)) {
    check_layer_index(net, l);
    const auto& w = net.layer(l).weight;
    LayerFactors f;
    f.kernel_rows = uniform_vector(rng, w.kernel());
    f.kernel_cols = uniform_vector(rng, w.kernel());
    f.in_channels = uniform_vector(rng, w.in_channels());
    f.out_channels = uniform_vector(rng, w.out_channels());
    set.layers.emplace(l, std::move(f));
  }
  return set;
}

ModulationSet zero_modulation(const PriorNetwork& net, const std::string& domain_id) {
  ModulationSet set;
  set.domain_id = domain_id;
  set.backbone_fingerprint = net.fingerprint();
  for (int l = 0; l < net.layer_count(); ++l) {
    const auto& w = net.layer(l).weight;
    set.layers.emplace(l, LayerFactors::zeros(w.kernel(), w.in_channels(), w.out_channels()));
  }
  return set;
}

std::int64_t count_modulation_params(const PriorNetwork& net, std::span<const int> layers) {
  std::int64_t n = 0;
  for (int l : layers) {
    check_layer_index(net, l);
    const auto& w = net.layer(l).weight;
    n += 2 * w.kernel() + w.in_channels() + w.out_channels();
  }
  return n;
}

std::int64_t count_modulation_params(const PriorNetwork& net) {
  const auto layers = all_layers(net);
  return count_modulation_params(net, layers);
}

void check_modulation(const PriorNetwork& net, const ModulationSet& modulation) {
  for (const auto& [l, f] : modulation.layers) {
    check_layer_index(net, l);
    f.check_matches(net.layer(l).weight);
    if (!f.all_finite()) {
      throw Error(ErrorCode::kNumerical, "modulation factors of layer " + std::to_string(l) + " are not finite");
    }
  }
}

namespace {

void validate_domain_id(const std::string& id) {
  static const std::regex kPattern("[A-Za-z0-9_.-]+");
  if (id.empty() || !std::regex_match(id, kPattern) || id == "." || id == "..") {
    throw Error(ErrorCode::kInvalidArgument,
                "domain id '" + id + "' must match [A-Za-z0-9_.-]+");
  }
}

NamedTensor vector_tensor(std::string name, const Vector& v) {
  return {std::move(name), {v.size()}, std::vector<double>(v.data(), v.data() + v.size())};
}

Vector tensor_vector(const NamedTensor& t) {
  return Eigen::Map<const Vector>(t.values.data(), static_cast<Eigen::Index>(t.values.size()));
}

}  // namespace

std::string serialize_modulation(const ModulationSet& m) {
  validate_domain_id(m.domain_id);
  TensorArchive archive;
  archive.kind = "modulation";
  archive.meta = {{"domain_id", m.domain_id},
                  {"backbone_fingerprint", m.backbone_fingerprint},
                  {"seed", m.seed},
                  {"layers", m.layer_indices()},
                  {"metadata", m.metadata}};
  for (const auto& [l, f] : m.layers) {
    const std::string p = "layer" + std::to_string(l) + ".";
    archive.tensors.push_back(vector_tensor(p + "kernel_rows", f.kernel_rows));
    archive.tensors.push_back(vector_tensor(p + "kernel_cols", f.kernel_cols));
    archive.tensors.push_back(vector_tensor(p + "in_channels", f.in_channels));
    archive.tensors.push_back(vector_tensor(p + "out_channels", f.out_channels));
  }
  return archive.serialize();
}

ModulationSet parse_modulation(std::string_view bytes) {
  const auto archive = TensorArchive::parse(bytes);
  if (archive.kind != "modulation") throw Error(ErrorCode::kIo, "not a modulation file");
  ModulationSet m;
  m.domain_id = archive.meta.at("domain_id").get<std::string>();
  m.backbone_fingerprint = archive.meta.at("backbone_fingerprint").get<std::string>();
  m.seed = archive.meta.at("seed").get<std::uint64_t>();
  m.metadata = archive.meta.at("metadata");
  for (int l : archive.meta.at("layers").get<std::vector<int>>()) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerFactors f;
    f.kernel_rows = tensor_vector(archive.get(p + "kernel_rows"));
    f.kernel_cols = tensor_vector(archive.get(p + "kernel_cols"));
    f.in_channels = tensor_vector(archive.get(p + "in_channels"));
    f.out_channels = tensor_vector(archive.get(p + "out_channels"));
    m.layers.emplace(l, std::move(f));
  }
  return m;
}

void save_modulation(const ModulationSet& modulation, const std::filesystem::path& path) {
  atomic_write_file(path, serialize_modulation(modulation));
}

ModulationSet load_modulation(const std::filesystem::path& path) {
  return parse_modulation(read_file(path));
}

}  // namespace fpnp
