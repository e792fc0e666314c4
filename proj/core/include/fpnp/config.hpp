#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fpnp/dataset.hpp"
#include "fpnp/operators.hpp"
#include "fpnp/prior.hpp"
#include "fpnp/solver.hpp"
#include "fpnp/training.hpp"

namespace fpnp {

struct OperatorConfig {
  std::string type = "fourier";  // fourier | gaussian
  MaskPattern pattern = MaskPattern::kRadial;
  double acceleration = 4.0;
  SignalField field = SignalField::kReal;
  std::uint64_t seed = 0;
};

struct NoiseConfig {
  std::optional<double> snr_db;  // none: noiseless
  std::uint64_t seed = 0;
};

struct PriorConfig {
  int blocks = 12;
  int features = 64;
  int kernel = 3;
  double alpha = 0.2;
  std::uint64_t seed = 0;
  int spectral_warmup = 50;
};

struct AdaptationConfig {
  std::string method = "rank_one";  // rank_one | channel_only | partial
  std::vector<int> layers;          // partial only
};

struct OutputConfig {
  std::string dir = "runs/default";
};

/// A named evaluation domain: the run's own settings with dotted overrides.
struct EvalDomainConfig {
  std::string id;
  std::vector<std::pair<std::string, std::string>> overrides;
};

struct EvaluationConfig {
  int workers = 1;
  double residual_gain = 20.0;
  std::vector<EvalDomainConfig> domains;
};

struct RunConfig {
  std::string domain_id = "source";
  DatasetSpec dataset;
  OperatorConfig op;
  NoiseConfig noise;
  SolverConfig solver;
  PriorConfig prior;
  TrainingConfig training;
  AdaptationConfig adaptation;
  OutputConfig output;
  EvaluationConfig evaluation;

  /// Commented YAML. parse(to_yaml()) reproduces the config and the text.
  std::string to_yaml() const;
  static RunConfig from_yaml(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// "block.key=value"; also "evaluation.domains.<id>.<block.key>=value".
  void apply_override(std::string_view assignment);
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  /// Throws kConfig naming the first offending key.
  void validate() const;

  /// Every scalar key, in emission order.
  static std::vector<std::string> keys();

  /// This config with the named evaluation domain's overrides applied and
  /// its own domain list dropped.
  RunConfig domain(const std::string& id) const;

  /// Image shape seen by the operator and prior (2 channels for a complex field).
  Shape signal_shape() const;
};

/// Output directory, placed under $FPNP_OUTPUT_ROOT when set and relative.
std::filesystem::path output_dir(const RunConfig& config);
/// $FPNP_WORKERS when set, else evaluation.workers.
int worker_count(const RunConfig& config);

MeasurementOperator build_operator(const RunConfig& config);
PriorNetwork build_prior(const RunConfig& config);
NoiseSpec noise_spec(const RunConfig& config);

/// Ingests the dataset and simulates measurements for every split.
DomainData build_domain(const RunConfig& config);
DomainData build_domain(const RunConfig& config, const Dataset& dataset);

/// Converts single-channel images to (real, imaginary = 0) pairs when the
/// operator expects a complex field.
Image to_signal(const Image& image, const Shape& signal_shape);

}  // namespace fpnp
