#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpnp/modulation.hpp"
#include "fpnp/operators.hpp"
#include "fpnp/prior.hpp"
#include "fpnp/solver.hpp"

namespace fpnp {

struct TrainingConfig {
  int epochs = 100;
  Real lr_base = 1e-4;
  Real lr_modulation = 1e-2;
  /// The modulation learning rate is multiplied by lr_decay_factor for every
  /// epoch after lr_decay_epoch (1-based epochs).
  int lr_decay_epoch = 50;
  Real lr_decay_factor = 0.5;
  int batch_size = 1;
  std::uint64_t seed = 0;
  /// Global gradient-norm clip; <= 0 disables clipping.
  Real grad_clip_norm = 1.0;
  Real adam_beta1 = 0.9;
  Real adam_beta2 = 0.999;
  Real adam_epsilon = 1e-8;

  void validate() const;
  Real modulation_lr_at(int epoch) const;
};

struct DomainSample {
  Image image;
  Measurements measurements;
};

/// A concrete domain: forward model, noise level, step size and data splits
/// with their simulated measurements.
struct DomainData {
  std::string domain_id;
  MeasurementOperator op;
  NoiseSpec noise;
  SolverConfig solver;
  std::vector<DomainSample> train;
  std::vector<DomainSample> val;
  std::vector<DomainSample> test;

  /// Simulates y = A x (+ noise) for every image; the noise seed of each
  /// sample is derived from noise.seed, the split and the sample index.
  static DomainData simulate(std::string domain_id, MeasurementOperator op, NoiseSpec noise,
                             SolverConfig solver, const std::vector<Image>& train,
                             const std::vector<Image>& val, const std::vector<Image>& test);
};

Measurements simulate_measurements(const MeasurementOperator& op, const Image& x,
                                   const NoiseSpec& noise, std::uint64_t sample_seed);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
  double lr = 0.0;
  std::int64_t steps = 0;
};

struct TrainingReport {
  std::string method;
  std::string domain_id;
  std::int64_t trainable_parameters = 0;
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
  int best_epoch = 0;
  double best_val_psnr = 0.0;
  nlohmann::json notes = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// Adam moments for a flat list of parameter blocks.
struct AdamState {
  std::vector<Vector> m;
  std::vector<Vector> v;
  std::int64_t t = 0;
};

/// Everything needed to continue a backbone training run exactly.
struct BackboneTrainingState {
  PriorNetwork network;
  PriorNetwork best;
  AdamState adam;
  TrainingReport report;

  void save(const std::filesystem::path& path) const;
  static BackboneTrainingState load(const std::filesystem::path& path);
};

/// Called after every completed epoch; the newest record is report.epochs.back().
using BackboneObserver = std::function<void(const BackboneTrainingState&)>;
using EpochObserver = std::function<void(const EpochRecord&)>;

struct BackboneResult {
  PriorNetwork best;          // best-on-validation parameters
  BackboneTrainingState state;  // last-step state, resumable
  TrainingReport report;
};

/// Trains every backbone parameter through the unrolled solver with the MSE
/// loss. Spectral-norm vectors advance one power iteration per step.
/// `resume` continues a previous run until `config.epochs` total epochs.
BackboneResult train_base(const DomainData& domain, PriorNetwork net, const TrainingConfig& config,
                          std::optional<BackboneTrainingState> resume = std::nullopt,
                          const BackboneObserver& on_epoch = {});

/// Clones the backbone and retrains all of it at lr_base on the domain.
BackboneResult full_tune(const DomainData& domain, const PriorNetwork& net,
                         const TrainingConfig& config, const BackboneObserver& on_epoch = {});

struct AdaptationResult {
  ModulationSet modulation;  // best on validation
  TrainingReport report;
};

/// Learns rank-one factors on every layer with the backbone frozen.
AdaptationResult adapt_domain(const DomainData& domain, const PriorNetwork& net,
                              const TrainingConfig& config, const EpochObserver& on_epoch = {});

/// Learns factors only for `layers`; the rest stay unmodulated.
AdaptationResult adapt_partial(const DomainData& domain, const PriorNetwork& net,
                               const std::vector<int>& layers, const TrainingConfig& config,
                               const EpochObserver& on_epoch = {});

/// Baseline that trains only the input-channel vector of each layer, with the
/// other three factors fixed to ones, so each layer reduces to a per-input-
/// channel scaling of W.
AdaptationResult adapt_channel_only(const DomainData& domain, const PriorNetwork& net,
                                    const TrainingConfig& config,
                                    const EpochObserver& on_epoch = {});

/// Sum of C_in over all layers.
std::int64_t count_channel_only_params(const PriorNetwork& net);

/// Mean loss and gradients of the factors of `modulation` over `samples`.
double modulation_loss_and_gradients(const DomainData& domain,
                                     const std::vector<DomainSample>& samples,
                                     const PriorNetwork& net, const ModulationSet& modulation,
                                     std::map<int, LayerFactors>* gradients);

/// Mean loss over samples without gradients.
double mean_loss(const DomainData& domain, const std::vector<DomainSample>& samples,
                 const PriorNetwork& net, const ModulationSet* modulation);

/// Layer subsets for the partial-modulation sweep.
struct LayerSubset {
  std::string name;
  std::vector<int> layers;
};
std::vector<LayerSubset> partial_modulation_subsets(int layer_count);

}  // namespace fpnp
