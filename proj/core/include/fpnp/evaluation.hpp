#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpnp/prior.hpp"
#include "fpnp/registry.hpp"
#include "fpnp/training.hpp"

namespace fpnp {

/// A column of an evaluation matrix: one backbone plus a rule for picking its
/// modulation on each row.
struct Reconstructor {
  enum class Modulation {
    kNone,      // bare backbone
    kByDomain,  // registry entry for the row's domain (source domain -> none)
    kFixed,     // the same modulation on every row
  };

  std::string name;
  const PriorNetwork* network = nullptr;
  Modulation modulation = Modulation::kNone;
  const DomainRegistry* registry = nullptr;
  const ModulationSet* fixed = nullptr;
};

struct EvalCell {
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::vector<double> psnr;
  std::vector<double> ssim;
  std::string modulation;  // domain id of the modulation used, empty if none
};

struct EvalMatrix {
  std::vector<std::string> rows;     // test domains
  std::vector<std::string> columns;  // reconstructors
  std::vector<std::vector<EvalCell>> cells;  // [row][column]
  std::vector<std::size_t> row_samples;

  const EvalCell& at(const std::string& row, const std::string& column) const;
  /// Column-wise arithmetic mean over rows.
  std::vector<double> average_psnr() const;
  std::vector<double> average_ssim() const;

  nlohmann::json to_json() const;
  static EvalMatrix from_json(const nlohmann::json& j);
  std::string to_table() const;
};

/// Evaluates every reconstructor on every domain's test split. Cells may be
/// computed by up to `workers` threads; results do not depend on the count.
EvalMatrix eval_matrix(const std::vector<const DomainData*>& domains,
                       const std::vector<Reconstructor>& reconstructors, int workers = 1);

/// Per-sample metrics of one reconstructor configuration on a split.
EvalCell evaluate_samples(const DomainData& domain, const std::vector<DomainSample>& samples,
                          const PriorNetwork& net, const ModulationSet* modulation);

struct NormProfile {
  std::string domain_id;
  std::vector<double> ratio;       // ||M_l||_2 / ||W_l||_2
  std::vector<double> normalized;  // min-max scaled to [0, 1]
};

/// Ratio of Frobenius norms of the additive term M (not 1 + M) to the
/// normalized backbone weight, per layer; unmodulated layers read 0. A
/// profile with all ratios equal normalizes to all zeros.
NormProfile norm_profile(const ModulationSet& modulation, const PriorNetwork& net);

/// clip(gain * |x - x_hat|, 0, 1).
Image residual_figure(const Image& x, const Image& x_hat, double gain = 20.0);

struct Figure {
  std::string name;
  Image image;
};

/// Writes report.json (matrix, per-sample metrics, profiles, `context`),
/// table.txt, profiles.csv and one PGM per figure. Output bytes depend only on
/// the inputs.
void emit_report(const EvalMatrix& matrix, const std::vector<NormProfile>& profiles,
                 const std::vector<Figure>& figures, const std::filesystem::path& out_dir,
                 const nlohmann::json& context = nlohmann::json::object());

EvalMatrix parse_report(const std::filesystem::path& report_json);

}  // namespace fpnp
