#include "fpnp/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

#include "fpnp/metrics.hpp"

namespace fpnp {

void TrainingConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::kInvalidArgument, "training.epochs must be >= 1");
  if (!(lr_base >= 0.0) || !(lr_modulation >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "learning rates must be non-negative");
  }
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "training.batch_size must be >= 1");
  if (!(lr_decay_factor > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "training.lr_decay_factor must be positive");
  }
}

Real TrainingConfig::modulation_lr_at(int epoch) const {
  return epoch > lr_decay_epoch ? lr_modulation * lr_decay_factor : lr_modulation;
}

Measurements simulate_measurements(const MeasurementOperator& op, const Image& x,
                                   const NoiseSpec& noise, std::uint64_t sample_seed) {
  Measurements y = op.forward(x);
  if (!noise.target_snr_db) return y;
  return add_noise(y, NoiseSpec{noise.target_snr_db, sample_seed});
}

DomainData DomainData::simulate(std::string domain_id, MeasurementOperator op, NoiseSpec noise,
                                SolverConfig solver, const std::vector<Image>& train,
                                const std::vector<Image>& val, const std::vector<Image>& test) {
  DomainData d{std::move(domain_id), std::move(op), noise, solver, {}, {}, {}};
  auto fill = [&](const std::vector<Image>& images, std::vector<DomainSample>& out,
                  std::uint64_t split) {
    for (std::size_t i = 0; i < images.size(); ++i) {
      const std::uint64_t seed = noise.seed * 1000003ULL + split * 100003ULL + i;
      out.push_back({images[i], simulate_measurements(d.op, images[i], noise, seed)});
    }
  };
  fill(train, d.train, 1);
  fill(val, d.val, 2);
  fill(test, d.test, 3);
  return d;
}

nlohmann::json TrainingReport::to_json() const {
  nlohmann::json j;
  j["method"] = method;
  j["domain_id"] = domain_id;
  j["trainable_parameters"] = trainable_parameters;
  j["best_epoch"] = best_epoch;
  j["best_val_psnr"] = best_val_psnr;
  j["notes"] = notes;
  auto& e = j["epochs"] = nlohmann::json::array();
  for (const auto& r : epochs) {
    e.push_back({{"epoch", r.epoch},
                 {"train_loss", r.train_loss},
                 {"val_psnr", r.val_psnr},
                 {"val_ssim", r.val_ssim},
                 {"lr", r.lr},
                 {"steps", r.steps}});
  }
  j["step_losses"] = step_losses;
  return j;
}

namespace {

struct ParamBlock {
  Real* data;
  Eigen::Index size;
};

struct LoopHooks {
  std::function<std::vector<ParamBlock>()> params;
  std::function<void()> begin_step;
  // Mean loss over the batch; writes one gradient vector per parameter block.
  std::function<double(const std::vector<const DomainSample*>&, std::vector<Vector>&)> loss_and_grads;
  std::function<void()> save_best;
  std::function<Real(int)> lr;
  std::function<void()> end_epoch;
};

std::pair<double, double> validation_metrics(const DomainData& domain, const PriorNetwork& net,
                                             const ModulationSet* modulation) {
  if (domain.val.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "domain '" + domain.domain_id + "' has no validation split");
  }
  const ArOperator prior(net, modulation);
  const UnrolledSolver solver(domain.op, prior, domain.solver);
  double p = 0.0;
  double s = 0.0;
  for (const auto& sample : domain.val) {
    const Image x = solver.reconstruct(sample.measurements);
    p += psnr(sample.image, x);
    s += ssim(sample.image, x);
  }
  const double n = static_cast<double>(domain.val.size());
  return {p / n, s / n};
}

void adam_update(AdamState& state, const TrainingConfig& cfg, std::vector<ParamBlock>& params,
                 const std::vector<Vector>& grads, Real lr) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : params) {
      state.m.push_back(Vector::Zero(p.size));
      state.v.push_back(Vector::Zero(p.size));
    }
  }
  ++state.t;
  const Real c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<Real>(state.t));
  const Real c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<Real>(state.t));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.m[b];
    auto& v = state.v[b];
    const auto& g = grads[b];
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g.cwiseAbs2();
    Eigen::Map<Vector> p(params[b].data, params[b].size);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_epsilon);
  }
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// Runs epochs report.epochs.size()+1 .. config.epochs.
void run_loop(const DomainData& domain, const TrainingConfig& config, LoopHooks& hooks,
              const std::function<std::pair<double, double>()>& validate, AdamState& adam,
              TrainingReport& report) {
  if (domain.train.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "domain '" + domain.domain_id + "' has no training split");
  }
  const int first_epoch = static_cast<int>(report.epochs.size()) + 1;
  std::int64_t steps = report.epochs.empty() ? 0 : report.epochs.back().steps;
  for (int epoch = first_epoch; epoch <= config.epochs; ++epoch) {
    const auto order = epoch_order(domain.train.size(), config.seed, epoch);
    const Real lr = hooks.lr(epoch);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::vector<const DomainSample*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
        batch.push_back(&domain.train[order[i]]);
      }
      if (hooks.begin_step) hooks.begin_step();
      auto params = hooks.params();
      std::vector<Vector> grads;
      const double batch_loss = hooks.loss_and_grads(batch, grads);
      double grad_norm2 = 0.0;
      for (const auto& g : grads) grad_norm2 += g.squaredNorm();
      const double grad_norm = std::sqrt(grad_norm2);
      if (!std::isfinite(batch_loss) || !std::isfinite(grad_norm)) {
        std::ostringstream ss;
        ss << "non-finite loss in '" << domain.domain_id << "' at epoch " << epoch << ", batch "
           << batches << " (loss " << batch_loss << ", gradient norm " << grad_norm << ")";
        throw Error(ErrorCode::kNumerical, ss.str());
      }
      if (config.grad_clip_norm > 0.0 && grad_norm > config.grad_clip_norm) {
        for (auto& g : grads) g *= config.grad_clip_norm / grad_norm;
      }
      adam_update(adam, config, params, grads, lr);
      report.step_losses.push_back(batch_loss);
      epoch_loss += batch_loss;
      ++batches;
      ++steps;
    }
    const auto [val_psnr, val_ssim] = validate();
    report.epochs.push_back({epoch, epoch_loss / batches, val_psnr, val_ssim, lr, steps});
    if (report.best_epoch == 0 || val_psnr > report.best_val_psnr) {
      report.best_epoch = epoch;
      report.best_val_psnr = val_psnr;
      hooks.save_best();
    }
    if (hooks.end_epoch) hooks.end_epoch();
  }
}

// Mean loss over a batch for a fixed operator; accumulates effective-weight
// gradients (divided by the batch size).
double batch_loss_and_prior_gradients(const DomainData& domain, const ArOperator& prior,
                                      const std::vector<const DomainSample*>& batch,
                                      PriorGradients& grads) {
  const UnrolledSolver solver(domain.op, prior, domain.solver);
  grads.set_zero();
  double total = 0.0;
  for (const auto* sample : batch) {
    UnrolledSolver::Tape tape;
    const Image x = solver.reconstruct(sample->measurements, tape);
    total += loss(x, sample->image);
    solver.backward(tape, loss_gradient(x, sample->image), grads);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& w : grads.weight) w *= inv;
  for (auto& b : grads.bias) b *= inv;
  return total * inv;
}

void check_domain_matches(const DomainData& domain, const PriorNetwork& net) {
  if (domain.op.input_shape().channels != net.channels()) {
    throw Error(ErrorCode::kShapeMismatch, "domain '" + domain.domain_id + "' has " +
                                               std::to_string(domain.op.input_shape().channels) +
                                               " signal channels; backbone expects " +
                                               std::to_string(net.channels()));
  }
}

BackboneResult train_backbone(const DomainData& domain, PriorNetwork net,
                              const TrainingConfig& config, std::optional<BackboneTrainingState> resume,
                              const std::string& method, const BackboneObserver& on_epoch) {
  check_domain_matches(domain, net);
  BackboneTrainingState state{net, net, {}, {}};
  if (resume) {
    state = std::move(*resume);
  } else {
    state.report.method = method;
    state.report.domain_id = domain.domain_id;
    state.report.trainable_parameters = net.parameter_count();
  }
  PriorNetwork& current = state.network;
  LoopHooks hooks;
  hooks.params = [&] {
    std::vector<ParamBlock> blocks;
    for (auto& layer : current.layers()) {
      blocks.push_back({layer.weight.matrix().data(), layer.weight.size()});
      blocks.push_back({layer.bias.data(), layer.bias.size()});
    }
    return blocks;
  };
  hooks.begin_step = [&] { current.update_spectral_state(1); };
  hooks.loss_and_grads = [&](const std::vector<const DomainSample*>& batch,
                             std::vector<Vector>& grads) {
    const ArOperator prior(current, nullptr);
    PriorGradients pg(current);
    const double l = batch_loss_and_prior_gradients(domain, prior, batch, pg);
    const auto wg = backbone_weight_gradients(current, pg);
    grads.clear();
    for (int i = 0; i < current.layer_count(); ++i) {
      grads.push_back(Eigen::Map<const Vector>(wg[i].data(), wg[i].size()));
      grads.push_back(pg.bias[i]);
    }
    return l;
  };
  hooks.save_best = [&] { state.best = current; };
  hooks.lr = [&](int) { return config.lr_base; };
  if (on_epoch) hooks.end_epoch = [&] { on_epoch(state); };
  run_loop(domain, config, hooks, [&] { return validation_metrics(domain, current, nullptr); },
           state.adam, state.report);
  BackboneResult result{state.best, state, state.report};
  return result;
}

enum class FactorSelection { kAll, kInputChannels };

AdaptationResult adapt_factors(const DomainData& domain, const PriorNetwork& net,
                               ModulationSet modulation, FactorSelection selection,
                               std::int64_t expected_parameters, const TrainingConfig& config,
                               const std::string& method, const EpochObserver& on_epoch) {
  config.validate();
  check_domain_matches(domain, net);
  const std::string fingerprint_before = net.fingerprint();
  TrainingReport report;
  report.method = method;
  report.domain_id = domain.domain_id;

  LoopHooks hooks;
  hooks.params = [&] {
    std::vector<ParamBlock> blocks;
    for (auto& [l, f] : modulation.layers) {
      if (selection == FactorSelection::kAll) {
        blocks.push_back({f.kernel_rows.data(), f.kernel_rows.size()});
        blocks.push_back({f.kernel_cols.data(), f.kernel_cols.size()});
      }
      blocks.push_back({f.in_channels.data(), f.in_channels.size()});
      if (selection == FactorSelection::kAll) {
        blocks.push_back({f.out_channels.data(), f.out_channels.size()});
      }
    }
    return blocks;
  };
  std::int64_t registered = 0;
  for (const auto& b : hooks.params()) registered += b.size;
  if (registered != expected_parameters) {
    throw Error(ErrorCode::kInvalidArgument,
                "optimizer registered " + std::to_string(registered) +
                    " parameters, expected " + std::to_string(expected_parameters));
  }
  report.trainable_parameters = registered;

  hooks.loss_and_grads = [&](const std::vector<const DomainSample*>& batch,
                             std::vector<Vector>& grads) {
    const ArOperator prior(net, &modulation);
    PriorGradients pg(net);
    const double l = batch_loss_and_prior_gradients(domain, prior, batch, pg);
    const auto fg = modulation_gradients(net, modulation, pg);
    grads.clear();
    for (const auto& [layer, g] : fg) {
      if (selection == FactorSelection::kAll) {
        grads.push_back(g.kernel_rows);
        grads.push_back(g.kernel_cols);
      }
      grads.push_back(g.in_channels);
      if (selection == FactorSelection::kAll) grads.push_back(g.out_channels);
    }
    return l;
  };
  ModulationSet best = modulation;
  hooks.save_best = [&] { best = modulation; };
  hooks.lr = [&](int epoch) { return config.modulation_lr_at(epoch); };
  if (on_epoch) hooks.end_epoch = [&] { on_epoch(report.epochs.back()); };
  AdamState adam;
  run_loop(domain, config, hooks, [&] { return validation_metrics(domain, net, &modulation); }, adam,
           report);

  if (net.fingerprint() != fingerprint_before) {
    throw Error(ErrorCode::kBackboneMutated, "backbone parameters changed during adaptation");
  }
  best.metadata["method"] = method;
  best.metadata["epochs"] = config.epochs;
  best.metadata["best_epoch"] = report.best_epoch;
  best.metadata["best_val_psnr"] = report.best_val_psnr;
  best.metadata["trainable_parameters"] = report.trainable_parameters;
  return {std::move(best), std::move(report)};
}

}  // namespace

BackboneResult train_base(const DomainData& domain, PriorNetwork net, const TrainingConfig& config,
                          std::optional<BackboneTrainingState> resume,
                          const BackboneObserver& on_epoch) {
  config.validate();
  return train_backbone(domain, std::move(net), config, std::move(resume), "base", on_epoch);
}

BackboneResult full_tune(const DomainData& domain, const PriorNetwork& net,
                         const TrainingConfig& config, const BackboneObserver& on_epoch) {
  if (config.epochs == 0) {
    BackboneTrainingState state{net, net, {}, {}};
    state.report.method = "full_tune";
    state.report.domain_id = domain.domain_id;
    state.report.trainable_parameters = net.parameter_count();
    state.report.notes["initialization"] = "base checkpoint";
    return {net, state, state.report};
  }
  config.validate();
  auto result = train_backbone(domain, net, config, std::nullopt, "full_tune", on_epoch);
  result.report.notes["initialization"] = "base checkpoint";
  result.report.notes["source_fingerprint"] = net.fingerprint();
  return result;
}

AdaptationResult adapt_domain(const DomainData& domain, const PriorNetwork& net,
                              const TrainingConfig& config, const EpochObserver& on_epoch) {
  auto modulation = init_modulation(net, domain.domain_id, config.seed);
  return adapt_factors(domain, net, std::move(modulation), FactorSelection::kAll,
                       count_modulation_params(net), config, "rank_one", on_epoch);
}

AdaptationResult adapt_partial(const DomainData& domain, const PriorNetwork& net,
                               const std::vector<int>& layers, const TrainingConfig& config,
                               const EpochObserver& on_epoch) {
  if (layers.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "partial modulation needs a non-empty layer subset");
  }
  auto modulation = init_modulation(net, domain.domain_id, config.seed, layers);
  const auto expected = count_modulation_params(net, modulation.layer_indices());
  auto result = adapt_factors(domain, net, std::move(modulation), FactorSelection::kAll, expected,
                              config, "partial", on_epoch);
  result.modulation.metadata["layers"] = result.modulation.layer_indices();
  return result;
}

std::int64_t count_channel_only_params(const PriorNetwork& net) {
  std::int64_t n = 0;
  for (const auto& layer : net.layers()) n += layer.weight.in_channels();
  return n;
}

AdaptationResult adapt_channel_only(const DomainData& domain, const PriorNetwork& net,
                                    const TrainingConfig& config,
                                    const EpochObserver& on_epoch) {
  auto modulation = init_modulation(net, domain.domain_id, config.seed);
  for (auto& [l, f] : modulation.layers) {
    f.kernel_rows.setOnes();
    f.kernel_cols.setOnes();
    f.out_channels.setOnes();
  }
  return adapt_factors(domain, net, std::move(modulation), FactorSelection::kInputChannels,
                       count_channel_only_params(net), config, "channel_only", on_epoch);
}

double modulation_loss_and_gradients(const DomainData& domain,
                                     const std::vector<DomainSample>& samples,
                                     const PriorNetwork& net, const ModulationSet& modulation,
                                     std::map<int, LayerFactors>* gradients) {
  std::vector<const DomainSample*> batch;
  for (const auto& s : samples) batch.push_back(&s);
  const ArOperator prior(net, &modulation);
  PriorGradients pg(net);
  const double l = batch_loss_and_prior_gradients(domain, prior, batch, pg);
  if (gradients != nullptr) *gradients = modulation_gradients(net, modulation, pg);
  return l;
}

double mean_loss(const DomainData& domain, const std::vector<DomainSample>& samples,
                 const PriorNetwork& net, const ModulationSet* modulation) {
  const ArOperator prior(net, modulation);
  const UnrolledSolver solver(domain.op, prior, domain.solver);
  double total = 0.0;
  for (const auto& s : samples) total += loss(solver.reconstruct(s.measurements), s.image);
  return total / static_cast<double>(samples.size());
}

std::vector<LayerSubset> partial_modulation_subsets(int layer_count) {
  auto range = [](int from, int count) {
    std::vector<int> v(count);
    std::iota(v.begin(), v.end(), from);
    return v;
  };
  const int five = std::min(5, layer_count);
  const int half = (layer_count + 1) / 2;
  return {
      {"first_5", range(0, five)},
      {"middle_5", range((layer_count - five) / 2, five)},
      {"last_5", range(layer_count - five, five)},
      {"first_half", range(0, half)},
      {"last_half", range(layer_count - half, half)},
      {"all", range(0, layer_count)},
  };
}

// ---------------------------------------------------------------------------

namespace {

void append_adam(TensorArchive& archive, const AdamState& adam) {
  archive.meta["adam_t"] = adam.t;
  archive.meta["adam_blocks"] = adam.m.size();
  for (std::size_t b = 0; b < adam.m.size(); ++b) {
    const auto& m = adam.m[b];
    const auto& v = adam.v[b];
    archive.tensors.push_back({"adam.m" + std::to_string(b), {m.size()},
                               std::vector<double>(m.data(), m.data() + m.size())});
    archive.tensors.push_back({"adam.v" + std::to_string(b), {v.size()},
                               std::vector<double>(v.data(), v.data() + v.size())});
  }
}

}  // namespace

void BackboneTrainingState::save(const std::filesystem::path& path) const {
  TensorArchive archive;
  archive.kind = "backbone_training_state";
  auto current = network.to_archive();
  auto best_archive = best.to_archive();
  archive.meta["network"] = current.meta;
  archive.meta["best_network"] = best_archive.meta;
  archive.meta["report"] = report.to_json();
  for (auto& t : current.tensors) archive.tensors.push_back({"current." + t.name, t.shape, t.values});
  for (auto& t : best_archive.tensors) archive.tensors.push_back({"best." + t.name, t.shape, t.values});
  append_adam(archive, adam);
  save_archive(archive, path);
}

BackboneTrainingState BackboneTrainingState::load(const std::filesystem::path& path) {
  const auto archive = load_archive(path);
  if (archive.kind != "backbone_training_state") {
    throw Error(ErrorCode::kIo, path.string() + " is not a training state file");
  }
  auto extract = [&](const std::string& prefix, const char* meta) {
    TensorArchive net;
    net.kind = "prior_network";
    net.meta = archive.meta.at(meta);
    for (const auto& t : archive.tensors) {
      if (t.name.rfind(prefix, 0) == 0) net.tensors.push_back({t.name.substr(prefix.size()), t.shape, t.values});
    }
    return PriorNetwork::from_archive(net);
  };
  BackboneTrainingState state{extract("current.", "network"), extract("best.", "best_network"), {}, {}};
  state.adam.t = archive.meta.at("adam_t").get<std::int64_t>();
  const auto blocks = archive.meta.at("adam_blocks").get<std::size_t>();
  for (std::size_t b = 0; b < blocks; ++b) {
    const auto& m = archive.get("adam.m" + std::to_string(b)).values;
    const auto& v = archive.get("adam.v" + std::to_string(b)).values;
    state.adam.m.push_back(Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size())));
    state.adam.v.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  const auto& r = archive.meta.at("report");
  auto& rep = state.report;
  rep.method = r.at("method").get<std::string>();
  rep.domain_id = r.at("domain_id").get<std::string>();
  rep.trainable_parameters = r.at("trainable_parameters").get<std::int64_t>();
  rep.best_epoch = r.at("best_epoch").get<int>();
  rep.best_val_psnr = r.at("best_val_psnr").get<double>();
  rep.notes = r.at("notes");
  rep.step_losses = r.at("step_losses").get<std::vector<double>>();
  for (const auto& e : r.at("epochs")) {
    rep.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                          e.at("val_psnr").get<double>(), e.at("val_ssim").get<double>(),
                          e.at("lr").get<double>(), e.at("steps").get<std::int64_t>()});
  }
  return state;
}

}  // namespace fpnp
