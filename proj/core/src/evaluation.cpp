#include "fpnp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <sstream>

#include "fpnp/io.hpp"
#include "fpnp/metrics.hpp"

namespace fpnp {

const EvalCell& EvalMatrix::at(const std::string& row, const std::string& column) const {
  const auto r = std::find(rows.begin(), rows.end(), row);
  const auto c = std::find(columns.begin(), columns.end(), column);
  if (r == rows.end() || c == columns.end()) {
    throw Error(ErrorCode::kInvalidArgument, "no evaluation cell (" + row + ", " + column + ")");
  }
  return cells[r - rows.begin()][c - columns.begin()];
}

std::vector<double> EvalMatrix::average_psnr() const {
  std::vector<double> avg(columns.size(), 0.0);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (std::size_t r = 0; r < rows.size(); ++r) avg[c] += cells[r][c].mean_psnr;
    avg[c] /= static_cast<double>(rows.size());
  }
  return avg;
}

std::vector<double> EvalMatrix::average_ssim() const {
  std::vector<double> avg(columns.size(), 0.0);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (std::size_t r = 0; r < rows.size(); ++r) avg[c] += cells[r][c].mean_ssim;
    avg[c] /= static_cast<double>(rows.size());
  }
  return avg;
}

nlohmann::json EvalMatrix::to_json() const {
  nlohmann::json j;
  j["rows"] = rows;
  j["columns"] = columns;
  j["row_samples"] = row_samples;
  auto& cj = j["cells"] = nlohmann::json::array();
  for (const auto& row : cells) {
    auto rj = nlohmann::json::array();
    for (const auto& cell : row) {
      rj.push_back({{"mean_psnr", cell.mean_psnr},
                    {"mean_ssim", cell.mean_ssim},
                    {"psnr", cell.psnr},
                    {"ssim", cell.ssim},
                    {"modulation", cell.modulation}});
    }
    cj.push_back(std::move(rj));
  }
  j["average_psnr"] = average_psnr();
  j["average_ssim"] = average_ssim();
  return j;
}

EvalMatrix EvalMatrix::from_json(const nlohmann::json& j) {
  EvalMatrix m;
  m.rows = j.at("rows").get<std::vector<std::string>>();
  m.columns = j.at("columns").get<std::vector<std::string>>();
  m.row_samples = j.at("row_samples").get<std::vector<std::size_t>>();
  for (const auto& rj : j.at("cells")) {
    std::vector<EvalCell> row;
    for (const auto& cj : rj) {
      row.push_back({cj.at("mean_psnr").get<double>(), cj.at("mean_ssim").get<double>(),
                     cj.at("psnr").get<std::vector<double>>(),
                     cj.at("ssim").get<std::vector<double>>(),
                     cj.at("modulation").get<std::string>()});
    }
    m.cells.push_back(std::move(row));
  }
  return m;
}

std::string EvalMatrix::to_table() const {
  std::size_t first = 6;
  for (const auto& r : rows) first = std::max(first, r.size());
  std::vector<std::size_t> width;
  for (const auto& c : columns) width.push_back(std::max<std::size_t>(c.size(), 14));
  std::ostringstream out;
  auto pad = [&](const std::string& s, std::size_t w) {
    out << s << std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  pad("domain", first);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out << "  ";
    pad(columns[c], width[c]);
  }
  out << "\n";
  auto format = [](double p, double s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f / %.3f", p, s);
    return std::string(buf);
  };
  for (std::size_t r = 0; r < rows.size(); ++r) {
    pad(rows[r], first);
    for (std::size_t c = 0; c < columns.size(); ++c) {
      out << "  ";
      pad(format(cells[r][c].mean_psnr, cells[r][c].mean_ssim), width[c]);
    }
    out << "\n";
  }
  const auto ap = average_psnr();
  const auto as = average_ssim();
  pad("avg", first);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out << "  ";
    pad(format(ap[c], as[c]), width[c]);
  }
  out << "\n";
  return out.str();
}

EvalCell evaluate_samples(const DomainData& domain, const std::vector<DomainSample>& samples,
                          const PriorNetwork& net, const ModulationSet* modulation) {
  if (samples.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "no samples to evaluate for '" + domain.domain_id + "'");
  }
  const ArOperator prior(net, modulation);
  const UnrolledSolver solver(domain.op, prior, domain.solver);
  EvalCell cell;
  for (const auto& s : samples) {
    const Image x = solver.reconstruct(s.measurements);
    cell.psnr.push_back(psnr(s.image, x));
    cell.ssim.push_back(ssim(s.image, x));
  }
  double p = 0.0;
  double q = 0.0;
  for (std::size_t i = 0; i < cell.psnr.size(); ++i) {
    p += cell.psnr[i];
    q += cell.ssim[i];
  }
  cell.mean_psnr = p / static_cast<double>(cell.psnr.size());
  cell.mean_ssim = q / static_cast<double>(cell.ssim.size());
  if (modulation != nullptr) cell.modulation = modulation->domain_id;
  return cell;
}

EvalMatrix eval_matrix(const std::vector<const DomainData*>& domains,
                       const std::vector<Reconstructor>& reconstructors, int workers) {
  EvalMatrix m;
  for (const auto* d : domains) {
    m.rows.push_back(d->domain_id);
    m.row_samples.push_back(d->test.size());
  }
  for (const auto& r : reconstructors) m.columns.push_back(r.name);

  // Resolve every modulation up front so missing entries fail before any work.
  struct Job {
    std::size_t row;
    std::size_t col;
    std::optional<ModulationSet> modulation;
  };
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < domains.size(); ++r) {
    for (std::size_t c = 0; c < reconstructors.size(); ++c) {
      const auto& rec = reconstructors[c];
      if (rec.network == nullptr) {
        throw Error(ErrorCode::kInvalidArgument, "reconstructor '" + rec.name + "' has no network");
      }
      Job job{r, c, std::nullopt};
      if (rec.modulation == Reconstructor::Modulation::kFixed) {
        if (rec.fixed == nullptr) {
          throw Error(ErrorCode::kMissingModulation, "reconstructor '" + rec.name + "' has no modulation");
        }
        job.modulation = *rec.fixed;
      } else if (rec.modulation == Reconstructor::Modulation::kByDomain) {
        if (rec.registry == nullptr) {
          throw Error(ErrorCode::kMissingModulation, "reconstructor '" + rec.name + "' has no registry");
        }
        rec.registry->require_backbone(rec.network->fingerprint());
        const auto& id = domains[r]->domain_id;
        try {
          job.modulation = rec.registry->resolve(id);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kUnknownDomain) throw;
          throw Error(ErrorCode::kMissingModulation,
                      "no modulation for domain '" + id + "' (column '" + rec.name + "')");
        }
      }
      jobs.push_back(std::move(job));
    }
  }
  m.cells.assign(domains.size(), std::vector<EvalCell>(reconstructors.size()));
  auto run = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < jobs.size(); i += step) {
      const auto& job = jobs[i];
      const auto* mod = job.modulation ? &*job.modulation : nullptr;
      m.cells[job.row][job.col] = evaluate_samples(*domains[job.row], domains[job.row]->test,
                                                   *reconstructors[job.col].network, mod);
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, workers));
  if (n == 1) {
    run(0, 1);
  } else {
    std::vector<std::future<void>> futures;
    for (std::size_t t = 0; t < n; ++t) futures.push_back(std::async(std::launch::async, run, t, n));
    for (auto& f : futures) f.get();
  }
  return m;
}

NormProfile norm_profile(const ModulationSet& modulation, const PriorNetwork& net) {
  check_modulation(net, modulation);
  NormProfile p;
  p.domain_id = modulation.domain_id;
  p.ratio.assign(net.layer_count(), 0.0);
  for (const auto& [l, f] : modulation.layers) {
    const double wn = net.layer(l).normalized_weight().matrix().norm();
    const double mn = combine_factors(f).matrix().norm();
    p.ratio[l] = wn > 0.0 ? mn / wn : 0.0;
  }
  const auto [lo, hi] = std::minmax_element(p.ratio.begin(), p.ratio.end());
  p.normalized.assign(p.ratio.size(), 0.0);
  if (*hi > *lo) {
    for (std::size_t l = 0; l < p.ratio.size(); ++l) p.normalized[l] = (p.ratio[l] - *lo) / (*hi - *lo);
  }
  return p;
}

Image residual_figure(const Image& x, const Image& x_hat, double gain) {
  require_same_shape(x, x_hat, "residual figure");
  Image out(x.shape());
  out.values() = ((x.values() - x_hat.values()).cwiseAbs() * gain).cwiseMin(1.0).cwiseMax(0.0);
  return out;
}

void emit_report(const EvalMatrix& matrix, const std::vector<NormProfile>& profiles,
                 const std::vector<Figure>& figures, const std::filesystem::path& out_dir,
                 const nlohmann::json& context) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw Error(ErrorCode::kIo, "cannot create report directory " + out_dir.string());
  }
  nlohmann::json report;
  report["matrix"] = matrix.to_json();
  auto& pj = report["profiles"] = nlohmann::json::array();
  for (const auto& p : profiles) {
    pj.push_back({{"domain_id", p.domain_id}, {"ratio", p.ratio}, {"normalized", p.normalized}});
  }
  report["context"] = context;
  auto& fj = report["figures"] = nlohmann::json::array();
  for (const auto& f : figures) fj.push_back(f.name + ".pgm");
  atomic_write_file(out_dir / "report.json", report.dump(2) + "\n");
  atomic_write_file(out_dir / "table.txt", matrix.to_table());
  if (!profiles.empty()) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "domain_id,layer,ratio,normalized\n";
    for (const auto& p : profiles) {
      for (std::size_t l = 0; l < p.ratio.size(); ++l) {
        csv << p.domain_id << "," << l << "," << p.ratio[l] << "," << p.normalized[l] << "\n";
      }
    }
    atomic_write_file(out_dir / "profiles.csv", csv.str());
  }
  for (const auto& f : figures) write_pgm(f.image, out_dir / (f.name + ".pgm"));
}

EvalMatrix parse_report(const std::filesystem::path& report_json) {
  try {
    return EvalMatrix::from_json(nlohmann::json::parse(read_file(report_json)).at("matrix"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, "malformed report " + report_json.string() + ": " + e.what());
  }
}

}  // namespace fpnp
