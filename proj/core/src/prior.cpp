#include "fpnp/prior.hpp"

#include <cmath>
#include <cstring>
#include <random>

namespace fpnp {

namespace {

Vector random_unit(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v / v.norm();
}

Vector normalized(const Vector& v) {
  const Real n = v.norm();
  return n > kSigmaFloor ? Vector(v / n) : Vector::Zero(v.size());
}

}  // namespace

Real SpectralState::sigma(const RowMatrix& weight) const {
  return std::max(u.dot(weight * v), kSigmaFloor);
}

RowMatrix spectral_normalize(const RowMatrix& weight, SpectralState& state) {
  if (state.u.size() != weight.rows() || state.v.size() != weight.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "spectral state does not match weight shape");
  }
  state.v = normalized(weight.transpose() * state.u);
  state.u = normalized(weight * state.v);
  return weight / state.sigma(weight);
}

ConvWeight ConvLayer::normalized_weight() const {
  if (!spectral_norm) return weight;
  ConvWeight w = weight;
  w.matrix() /= spectral.sigma(weight.matrix());
  return w;
}

PriorNetwork PriorNetwork::build(const PriorArchitecture& arch, std::uint64_t seed, Real alpha,
                                 int spectral_warmup) {
  if (arch.channels < 1 || arch.channels > 3) {
    throw Error(ErrorCode::kInvalidArgument, "prior channels must be 1, 2 or 3");
  }
  if (arch.blocks < 1 || arch.features < 1) {
    throw Error(ErrorCode::kInvalidArgument, "prior needs at least one block and one feature");
  }
  PriorNetwork net;
  net.arch_ = arch;
  net.seed_ = seed;
  net.set_alpha(alpha);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int c_in = l == 0 ? arch.channels : arch.features;
    const int c_out = l == arch.blocks ? arch.channels : arch.features;
    ConvLayer layer;
    layer.weight = ConvWeight(arch.kernel, c_in, c_out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_in) * arch.kernel * arch.kernel);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.matrix().data()[i] = dist(rng);
    layer.bias = Vector::Zero(c_out);
    layer.activation = l != arch.blocks;
    layer.spectral.u = random_unit(rng, c_out);
    layer.spectral.v = random_unit(rng, layer.weight.matrix().cols());
    net.layers_.push_back(std::move(layer));
  }
  // Start from converged singular-vector estimates.
  net.update_spectral_state(spectral_warmup);
  return net;
}

PriorNetwork PriorNetwork::build(int channels, std::uint64_t seed) {
  return build(PriorArchitecture{channels, 12, 64, 3}, seed);
}

void PriorNetwork::set_alpha(Real alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must lie in [0, 1]");
  }
  alpha_ = alpha;
}

std::int64_t PriorNetwork::weight_count() const {
  std::int64_t n = 0;
  for (const auto& l : layers_) n += l.weight.size();
  return n;
}

std::int64_t PriorNetwork::bias_count() const {
  std::int64_t n = 0;
  for (const auto& l : layers_) n += l.bias.size();
  return n;
}

void PriorNetwork::update_spectral_state(int iterations) {
  for (auto& layer : layers_) {
    if (!layer.spectral_norm) continue;
    for (int it = 0; it < iterations; ++it) spectral_normalize(layer.weight.matrix(), layer.spectral);
  }
}

namespace {

TensorArchive raw_archive(const PriorNetwork& net);

}  // namespace

TensorArchive PriorNetwork::to_archive() const {
  auto archive = raw_archive(*this);
  archive.meta["fingerprint"] = fingerprint();
  return archive;
}

std::string PriorNetwork::fingerprint() const {
  auto archive = raw_archive(*this);
  archive.meta["fingerprint"] = nullptr;
  return sha256_hex(archive.serialize());
}

namespace {

TensorArchive raw_archive(const PriorNetwork& net) {
  const auto& arch_ = net.architecture();
  TensorArchive archive;
  archive.kind = "prior_network";
  archive.meta = {{"channels", arch_.channels}, {"blocks", arch_.blocks},
                  {"features", arch_.features}, {"kernel", arch_.kernel},
                  {"alpha", net.alpha()},       {"seed", net.seed()}};
  auto add = [&](std::string name, std::vector<std::int64_t> shape, const Real* data,
                 Eigen::Index n) {
    archive.tensors.push_back({std::move(name), std::move(shape), std::vector<double>(data, data + n)});
  };
  for (int l = 0; l < net.layer_count(); ++l) {
    const auto& layer = net.layers()[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    const auto& w = layer.weight;
    add(p + "weight", {w.out_channels(), w.in_channels(), w.kernel(), w.kernel()},
        w.matrix().data(), w.size());
    add(p + "bias", {layer.bias.size()}, layer.bias.data(), layer.bias.size());
    add(p + "sn_u", {layer.spectral.u.size()}, layer.spectral.u.data(), layer.spectral.u.size());
    add(p + "sn_v", {layer.spectral.v.size()}, layer.spectral.v.data(), layer.spectral.v.size());
  }
  return archive;
}

}  // namespace

PriorNetwork PriorNetwork::from_archive(const TensorArchive& archive) {
  if (archive.kind != "prior_network") throw Error(ErrorCode::kIo, "not a prior checkpoint");
  const auto& m = archive.meta;
  PriorArchitecture arch{m.at("channels").get<int>(), m.at("blocks").get<int>(),
                         m.at("features").get<int>(), m.at("kernel").get<int>()};
  PriorNetwork net = build(arch, m.at("seed").get<std::uint64_t>(), m.at("alpha").get<Real>());
  for (int l = 0; l < net.layer_count(); ++l) {
    auto& layer = net.layers_[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    auto copy = [&](const std::string& name, Real* dst, Eigen::Index n) {
      const auto& t = archive.get(p + name);
      if (static_cast<Eigen::Index>(t.values.size()) != n) {
        throw Error(ErrorCode::kShapeMismatch, "checkpoint tensor " + p + name + " has wrong size");
      }
      std::memcpy(dst, t.values.data(), n * sizeof(Real));
    };
    copy("weight", layer.weight.matrix().data(), layer.weight.size());
    copy("bias", layer.bias.data(), layer.bias.size());
    copy("sn_u", layer.spectral.u.data(), layer.spectral.u.size());
    copy("sn_v", layer.spectral.v.data(), layer.spectral.v.size());
  }
  if (m.contains("fingerprint") && m.at("fingerprint").is_string() &&
      m.at("fingerprint").get<std::string>() != net.fingerprint()) {
    throw Error(ErrorCode::kFingerprintMismatch, "checkpoint contents do not match stored fingerprint");
  }
  return net;
}

void PriorNetwork::save(const std::filesystem::path& path) const {
  auto archive = to_archive();
  save_archive(archive, path);
}

PriorNetwork PriorNetwork::load(const std::filesystem::path& path) {
  return from_archive(load_archive(path));
}

// ---------------------------------------------------------------------------

PriorGradients::PriorGradients(const PriorNetwork& net) {
  for (const auto& layer : net.layers()) {
    weight.push_back(RowMatrix::Zero(layer.weight.matrix().rows(), layer.weight.matrix().cols()));
    bias.push_back(Vector::Zero(layer.bias.size()));
  }
}

void PriorGradients::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

PriorGradients& PriorGradients::operator+=(const PriorGradients& other) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    weight[l] += other.weight[l];
    bias[l] += other.bias[l];
  }
  return *this;
}

ArOperator::ArOperator(const PriorNetwork& net, const ModulationSet* modulation)
    : net_(&net), modulation_(modulation) {
  if (modulation != nullptr) check_modulation(net, *modulation);
  for (int l = 0; l < net.layer_count(); ++l) {
    ConvWeight w = net.layer(l).normalized_weight();
    if (modulation != nullptr) {
      if (const auto* f = modulation->find(l)) w = fpnp::effective_weights(w, *f);
    }
    effective_.push_back(std::move(w));
  }
}

Image ArOperator::run(const Image& x, Tape* tape) const {
  if (x.channels() != net_->channels()) {
    throw Error(ErrorCode::kShapeMismatch,
                "prior expects " + std::to_string(net_->channels()) + " channels, got " +
                    std::to_string(x.channels()));
  }
  if (tape != nullptr) tape->inputs.clear();
  Image h = x;
  for (int l = 0; l < net_->layer_count(); ++l) {
    const auto& layer = net_->layer(l);
    Image next = conv2d(h, effective_[l], layer.bias);
    if (layer.activation) next.values() = next.values().cwiseMax(0.0);
    if (tape != nullptr) tape->inputs.push_back(std::move(h));
    h = std::move(next);
  }
  return h;
}

Image ArOperator::residual_network(const Image& x) const { return run(x, nullptr); }

Image ArOperator::apply(const Image& x) const {
  Image f = run(x, nullptr);
  Image out = x;
  out.values() -= net_->alpha() * f.values();
  return out;
}

Image ArOperator::apply(const Image& x, Tape& tape) const {
  Image f = run(x, &tape);
  Image out = x;
  out.values() -= net_->alpha() * f.values();
  return out;
}

Image ArOperator::backward(const Tape& tape, const Image& grad_output, PriorGradients* grads) const {
  const int layers = net_->layer_count();
  if (static_cast<int>(tape.inputs.size()) != layers) {
    throw Error(ErrorCode::kInvalidArgument, "tape does not belong to this operator");
  }
  Image g = grad_output * (-net_->alpha());
  for (int l = layers - 1; l >= 0; --l) {
    const auto& layer = net_->layer(l);
    if (layer.activation) {
      // The stored input of layer l+1 is this layer's post-ReLU output.
      const Image& post = tape.inputs[l + 1];
      g.values() = (post.values().array() > 0.0).select(g.values(), 0.0);
    }
    Image grad_in;
    conv2d_backward(tape.inputs[l], effective_[l], g, &grad_in,
                    grads ? &grads->weight[l] : nullptr, grads ? &grads->bias[l] : nullptr);
    g = std::move(grad_in);
  }
  g += grad_output;
  return g;
}

Image ar_apply(const Image& x, const PriorNetwork& net, const ModulationSet* modulation) {
  return ArOperator(net, modulation).apply(x);
}

std::map<int, LayerFactors> modulation_gradients(const PriorNetwork& net,
                                                 const ModulationSet& modulation,
                                                 const PriorGradients& grads) {
  std::map<int, LayerFactors> out;
  for (const auto& [l, f] : modulation.layers) {
    out.emplace(l, factor_gradients(f, net.layer(l).normalized_weight(), grads.weight[l]));
  }
  return out;
}

std::vector<RowMatrix> backbone_weight_gradients(const PriorNetwork& net,
                                                 const PriorGradients& grads) {
  std::vector<RowMatrix> out;
  for (int l = 0; l < net.layer_count(); ++l) {
    const auto& layer = net.layer(l);
    const RowMatrix& g = grads.weight[l];
    if (!layer.spectral_norm) {
      out.push_back(g);
      continue;
    }
    const RowMatrix& w = layer.weight.matrix();
    const Real sigma = layer.spectral.sigma(w);
    if (sigma <= kSigmaFloor) {
      out.push_back(g / kSigmaFloor);
      continue;
    }
    const Real coupling = g.cwiseProduct(w).sum() / sigma;  // <G, W_hat>
    RowMatrix gw = g;
    gw.noalias() -= coupling * layer.spectral.u * layer.spectral.v.transpose();
    out.push_back(gw / sigma);
  }
  return out;
}

}  // namespace fpnp
