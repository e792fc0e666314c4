#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fpnp/config.hpp"
#include "fpnp/dataset.hpp"
#include "fpnp/error.hpp"
#include "fpnp/evaluation.hpp"
#include "fpnp/io.hpp"
#include "fpnp/metrics.hpp"
#include "fpnp/registry.hpp"
#include "fpnp/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fpnp {
namespace {

// Output directory layout.
struct RunPaths {
  fs::path root;

  fs::path config() const { return root / "config.yaml"; }
  fs::path backbone() const { return root / "backbone.ckpt"; }
  fs::path train_state() const { return root / "train_state.bin"; }
  fs::path registry(const std::string& method = "rank_one") const {
    return method == "rank_one" ? root / "registry" : root / ("registry_" + method);
  }
  fs::path full_tune(const std::string& domain) const { return root / "full_tune" / (domain + ".ckpt"); }
  fs::path manifest(const std::string& domain) const { return root / "manifests" / (domain + ".tsv"); }
  fs::path log(const std::string& name) const { return root / "logs" / (name + ".tsv"); }
  fs::path report(const std::string& name) const { return root / "reports" / (name + ".json"); }
};

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

RunConfig load_config(const CommonOptions& opts) {
  RunConfig cfg = opts.config_path.empty() ? RunConfig{} : RunConfig::load(opts.config_path);
  for (const auto& o : opts.overrides) cfg.apply_override(o);
  cfg.validate();
  return cfg;
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create directory " + dir.string());
}

void write_json(const fs::path& path, const json& j) {
  make_dirs(path.parent_path());
  atomic_write_file(path, j.dump(2) + "\n");
}

void write_log(const fs::path& path, const std::vector<EpochRecord>& epochs) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch\tstep\ttrain_loss\tval_psnr\tval_ssim\tlr\n";
  for (const auto& e : epochs) {
    out << e.epoch << '\t' << e.steps << '\t' << e.train_loss << '\t' << e.val_psnr << '\t' << e.val_ssim
        << '\t' << e.lr << '\n';
  }
  make_dirs(path.parent_path());
  atomic_write_file(path, out.str());
}

void print_epoch(const std::string& tag, const EpochRecord& e, int total) {
  std::printf("%s epoch %d/%d  loss %.6g  val %.3f dB / %.4f  lr %.3g\n", tag.c_str(), e.epoch, total,
              e.train_loss, e.val_psnr, e.val_ssim, e.lr);
  std::fflush(stdout);
}

// Ingests a domain's dataset and checks it against the manifest recorded by
// an earlier command, writing the manifest on first use.
Dataset ingest_checked(const RunConfig& cfg, const RunPaths& paths) {
  Dataset ds = ingest(cfg.dataset);
  if (ds.skipped > 0) {
    std::fprintf(stderr, "warning: skipped %zu undecodable file(s) in %s\n", ds.skipped,
                 cfg.dataset.source.c_str());
  }
  const auto path = paths.manifest(cfg.domain_id);
  if (fs::exists(path)) {
    const auto recorded = read_manifest(path);
    if (manifest_text(recorded) != manifest_text(ds.manifest)) {
      std::string detail;
      for (std::size_t i = 0; i < recorded.size(); ++i) {
        if (i >= ds.manifest.size() || recorded[i].sha256 != ds.manifest[i].sha256 ||
            recorded[i].path != ds.manifest[i].path || recorded[i].split != ds.manifest[i].split) {
          detail = " (first difference: " + recorded[i].path + ")";
          break;
        }
      }
      if (detail.empty()) detail = " (entry count changed)";
      throw Error(ErrorCode::kManifestMismatch,
                  "dataset for domain '" + cfg.domain_id + "' no longer matches " + path.string() + detail);
    }
  } else {
    make_dirs(path.parent_path());
    write_manifest(ds.manifest, path);
  }
  return ds;
}

DomainData load_domain(const RunConfig& cfg, const RunPaths& paths) {
  return build_domain(cfg, ingest_checked(cfg, paths));
}

// The run's own settings when `id` is the source domain, else the named
// evaluation domain.
RunConfig domain_config(const RunConfig& cfg, const std::string& id) {
  if (id.empty() || id == cfg.domain_id) return cfg;
  return cfg.domain(id);
}

PriorNetwork load_backbone(const std::string& override_path, const RunPaths& paths) {
  const fs::path p = override_path.empty() ? paths.backbone() : fs::path(override_path);
  if (!fs::exists(p)) {
    throw Error(ErrorCode::kIo, "no backbone checkpoint at " + p.string() + " (run train-base first)");
  }
  return PriorNetwork::load(p);
}

bool same_architecture(const PriorArchitecture& a, const PriorArchitecture& b) {
  return a.channels == b.channels && a.blocks == b.blocks && a.features == b.features && a.kernel == b.kernel;
}

// ---------------------------------------------------------------------------

int cmd_make_config(const CommonOptions& opts, const std::string& output) {
  const RunConfig cfg = load_config(opts);
  if (output.empty() || output == "-") {
    std::cout << cfg.to_yaml();
  } else {
    cfg.save(output);
    std::printf("wrote %s\n", output.c_str());
  }
  return 0;
}

int cmd_train_base(const CommonOptions& opts, bool resume, bool force) {
  const RunConfig cfg = load_config(opts);
  const RunPaths paths{output_dir(cfg)};
  make_dirs(paths.root);

  std::optional<BackboneTrainingState> state;
  if (resume && fs::exists(paths.train_state())) {
    state = BackboneTrainingState::load(paths.train_state());
    if (!same_architecture(state->network.architecture(), build_prior(cfg).architecture())) {
      throw Error(ErrorCode::kConfig, "invalid value for key 'prior': saved training state has a different architecture");
    }
    std::printf("resuming after epoch %zu\n", state->report.epochs.size());
  } else if (fs::exists(paths.backbone()) && !force) {
    throw Error(ErrorCode::kInvalidArgument,
                paths.root.string() + " already holds a backbone; pass --resume, --force or a new output.dir");
  } else if (force) {
    std::error_code ec;
    for (const auto& p : {paths.registry(), paths.registry("channel_only"), paths.registry("partial"),
                          paths.root / "full_tune", paths.root / "manifests", paths.train_state()}) {
      fs::remove_all(p, ec);
    }
  }
  cfg.save(paths.config());

  const DomainData domain = load_domain(cfg, paths);
  std::printf("domain '%s': %zu train / %zu val / %zu test images\n", cfg.domain_id.c_str(),
              domain.train.size(), domain.val.size(), domain.test.size());
  const auto log_path = paths.log("train_base");
  auto on_epoch = [&](const BackboneTrainingState& s) {
    s.save(paths.train_state());
    write_log(log_path, s.report.epochs);
    print_epoch("base", s.report.epochs.back(), cfg.training.epochs);
  };
  auto result = train_base(domain, build_prior(cfg), cfg.training, std::move(state), on_epoch);
  result.best.save(paths.backbone());
  result.state.save(paths.train_state());

  const std::string fp = result.best.fingerprint();
  if (fs::exists(paths.registry() / "index.json")) {
    const auto existing = DomainRegistry::open(paths.registry());
    if (existing.backbone_fingerprint() != fp) {
      if (!existing.list().empty()) {
        throw Error(ErrorCode::kFingerprintMismatch,
                    "the new backbone would orphan the modulations in " + paths.registry().string() +
                        "; retrain with --force to discard them");
      }
      fs::remove_all(paths.registry());
    }
  }
  DomainRegistry::create(paths.registry(), fp, cfg.domain_id);
  json report = result.report.to_json();
  report["backbone_fingerprint"] = fp;
  report["backbone_parameters"] = result.best.parameter_count();
  report["modulation_parameters"] = count_modulation_params(result.best);
  write_json(paths.report("train_base"), report);
  std::printf("best epoch %d, val %.3f dB; backbone %s\n", result.report.best_epoch,
              result.report.best_val_psnr, paths.backbone().c_str());
  return 0;
}

int cmd_adapt(const CommonOptions& opts, const std::string& domain_id, const std::string& backbone_path) {
  const RunConfig base_cfg = load_config(opts);
  const RunConfig cfg = domain_config(base_cfg, domain_id);
  const RunPaths paths{output_dir(base_cfg)};
  const PriorNetwork net = load_backbone(backbone_path, paths);
  const std::string fp = net.fingerprint();
  const std::string& method = cfg.adaptation.method;
  const std::string tag = method + "_" + cfg.domain_id;

  // Refuse before training if the stores belong to another backbone.
  std::optional<DomainRegistry> registry;
  if (method != "full_tune") {
    const auto dir = paths.registry(method);
    registry = fs::exists(dir / "index.json") ? DomainRegistry::open(dir)
                                              : DomainRegistry::create(dir, fp, base_cfg.domain_id);
    registry->require_backbone(fp);
    if (cfg.domain_id == registry->source_domain()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "'" + cfg.domain_id + "' is the source domain; it uses the bare backbone");
    }
  }

  const DomainData domain = load_domain(cfg, paths);
  std::printf("adapting to '%s' with %s: %zu train / %zu val images\n", cfg.domain_id.c_str(),
              method.c_str(), domain.train.size(), domain.val.size());
  auto on_epoch = [&](const EpochRecord& e) { print_epoch(method, e, cfg.training.epochs); };

  TrainingReport report;
  if (method == "full_tune") {
    std::vector<EpochRecord> epochs;
    auto result = full_tune(domain, net, cfg.training, [&](const BackboneTrainingState& s) {
      write_log(paths.log("adapt_" + tag), s.report.epochs);
      on_epoch(s.report.epochs.back());
    });
    make_dirs(paths.full_tune(cfg.domain_id).parent_path());
    result.best.save(paths.full_tune(cfg.domain_id));
    report = result.report;
  } else {
    AdaptationResult result;
    if (method == "rank_one") {
      result = adapt_domain(domain, net, cfg.training, on_epoch);
    } else if (method == "channel_only") {
      result = adapt_channel_only(domain, net, cfg.training, on_epoch);
    } else {
      result = adapt_partial(domain, net, cfg.adaptation.layers, cfg.training, on_epoch);
    }
    if (net.fingerprint() != fp) {
      throw Error(ErrorCode::kBackboneMutated, "backbone changed during adaptation");
    }
    registry->put(result.modulation);
    report = result.report;
  }
  write_log(paths.log("adapt_" + tag), report.epochs);
  json j = report.to_json();
  j["backbone_fingerprint"] = fp;
  write_json(paths.report("adapt_" + tag), j);
  std::printf("%s '%s': %lld trainable parameters, best epoch %d, val %.3f dB\n", method.c_str(),
              cfg.domain_id.c_str(), static_cast<long long>(report.trainable_parameters),
              report.best_epoch, report.best_val_psnr);
  return 0;
}

Image magnitude(const Image& x) {
  if (x.channels() != 2) return x;
  Image out(1, x.rows(), x.cols());
  const Eigen::Index n = x.shape().pixels();
  out.values() = (x.values().head(n).cwiseAbs2() + x.values().tail(n).cwiseAbs2()).cwiseSqrt();
  return out;
}

TensorArchive measurements_archive(const Measurements& y, const MeasurementOperator& op) {
  TensorArchive a;
  a.kind = "measurements";
  a.meta["is_complex"] = y.is_complex;
  a.meta["operator"] = op.describe();
  std::vector<double> re(y.values.size()), im(y.values.size());
  for (Eigen::Index i = 0; i < y.values.size(); ++i) {
    re[i] = y.values[i].real();
    im[i] = y.values[i].imag();
  }
  a.tensors.push_back({"real", {static_cast<std::int64_t>(re.size())}, std::move(re)});
  a.tensors.push_back({"imag", {static_cast<std::int64_t>(im.size())}, std::move(im)});
  return a;
}

Measurements measurements_from(const TensorArchive& a) {
  if (a.kind != "measurements") throw Error(ErrorCode::kIo, "not a measurements file");
  const auto& re = a.get("real").values;
  const auto& im = a.get("imag").values;
  Measurements y;
  y.is_complex = a.meta.value("is_complex", true);
  y.values.resize(static_cast<Eigen::Index>(re.size()));
  for (std::size_t i = 0; i < re.size(); ++i) y.values[i] = {re[i], im.at(i)};
  return y;
}

int cmd_reconstruct(const CommonOptions& opts, const std::string& domain_id, const std::string& image_path,
                    const std::string& measurements_path, const std::string& out_dir,
                    const std::string& backbone_path, const std::string& save_measurements) {
  if (image_path.empty() == measurements_path.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "pass exactly one of --image or --measurements");
  }
  const RunConfig base_cfg = load_config(opts);
  const RunPaths paths{output_dir(base_cfg)};
  const PriorNetwork net = load_backbone(backbone_path, paths);

  std::optional<ModulationSet> modulation;
  if (!domain_id.empty()) {
    const auto registry = DomainRegistry::open(paths.registry());
    registry.require_backbone(net.fingerprint());
    modulation = registry.resolve(domain_id);
  }
  // Unknown ids are allowed here only if the registry knows them.
  RunConfig cfg = base_cfg;
  if (!domain_id.empty()) {
    const bool configured = std::any_of(base_cfg.evaluation.domains.begin(), base_cfg.evaluation.domains.end(),
                                        [&](const auto& d) { return d.id == domain_id; });
    cfg = configured ? base_cfg.domain(domain_id) : base_cfg;
    cfg.domain_id = domain_id;
  }
  const auto op = build_operator(cfg);

  std::optional<Image> truth;
  Measurements y;
  if (!image_path.empty()) {
    truth = to_signal(fit_image(read_netpbm(image_path), cfg.dataset.size, cfg.dataset.channels),
                      cfg.signal_shape());
    y = simulate_measurements(op, *truth, noise_spec(cfg), cfg.noise.seed);
  } else {
    y = measurements_from(load_archive(measurements_path));
    if (y.size() != op.output_size()) {
      throw Error(ErrorCode::kShapeMismatch, "measurements have " + std::to_string(y.size()) +
                                                 " entries; the operator produces " +
                                                 std::to_string(op.output_size()));
    }
  }
  if (!save_measurements.empty()) save_archive(measurements_archive(y, op), save_measurements);

  const Image xh = unrolled_reconstruct(y, op, net, modulation ? &*modulation : nullptr, cfg.solver);
  const fs::path dir = out_dir.empty() ? paths.root / "reconstruct" : fs::path(out_dir);
  make_dirs(dir);
  write_pgm(magnitude(xh), dir / "reconstruction.pgm");
  TensorArchive raw;
  raw.kind = "image";
  raw.meta = {{"channels", xh.channels()}, {"rows", xh.rows()}, {"cols", xh.cols()}};
  raw.tensors.push_back({"x", {xh.channels(), xh.rows(), xh.cols()},
                         std::vector<double>(xh.data(), xh.data() + xh.size())});
  save_archive(raw, dir / "reconstruction.bin");

  json report = {{"domain_id", domain_id.empty() ? cfg.domain_id : domain_id},
                 {"modulation", modulation ? modulation->domain_id : std::string("unmodulated")},
                 {"backbone_fingerprint", net.fingerprint()},
                 {"reconstruction_sha256", image_checksum(xh)},
                 {"input", image_path.empty() ? measurements_path : image_path}};
  if (!modulation) {
    report["note"] = domain_id.empty() ? "unmodulated: no domain_id given, bare backbone used"
                                       : "unmodulated: source domain uses the bare backbone";
  }
  if (truth) {
    report["psnr"] = psnr(*truth, xh);
    report["ssim"] = ssim(*truth, xh);
    write_pgm(residual_figure(magnitude(*truth), magnitude(xh), cfg.evaluation.residual_gain),
              dir / "residual.pgm");
  }
  write_json(dir / "reconstruct.json", report);
  std::printf("%s\n", report.dump().c_str());
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_evaluate(const CommonOptions& opts, const std::string& domain_list, const std::string& backbone_path) {
  const RunConfig cfg = load_config(opts);
  const RunPaths paths{output_dir(cfg)};
  const PriorNetwork net = load_backbone(backbone_path, paths);
  const std::string fp = net.fingerprint();

  std::vector<std::string> ids{cfg.domain_id};
  for (const auto& d : cfg.evaluation.domains) ids.push_back(d.id);
  if (!domain_list.empty()) ids = split_list(domain_list);

  std::vector<DomainData> domains;
  domains.reserve(ids.size());
  for (const auto& id : ids) domains.push_back(load_domain(domain_config(cfg, id), paths));
  std::vector<const DomainData*> rows;
  for (const auto& d : domains) rows.push_back(&d);

  json notes = json::array();
  std::vector<DomainRegistry> registries;
  std::vector<std::string> methods;
  for (const std::string method : {"rank_one", "channel_only", "partial"}) {
    if (!fs::exists(paths.registry(method) / "index.json")) continue;
    auto reg = DomainRegistry::open(paths.registry(method));
    reg.require_backbone(fp);
    std::vector<std::string> missing;
    for (const auto& id : ids) {
      if (id != reg.source_domain() && !reg.contains(id)) missing.push_back(id);
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      notes.push_back(method + " column skipped: no modulation for " + list);
      continue;
    }
    registries.push_back(std::move(reg));
    methods.push_back(method);
  }
  std::vector<Reconstructor> recs{{"base", &net}};
  for (std::size_t i = 0; i < registries.size(); ++i) {
    recs.push_back({methods[i] == "rank_one" ? "modulated" : methods[i], &net,
                    Reconstructor::Modulation::kByDomain, &registries[i]});
  }
  const int workers = worker_count(cfg);
  EvalMatrix matrix = eval_matrix(rows, recs, workers);

  // Full-tuned networks differ per row, so they are evaluated cell by cell.
  bool all_tuned = true;
  for (const auto& id : ids) all_tuned = all_tuned && (id == cfg.domain_id || fs::exists(paths.full_tune(id)));
  if (all_tuned && ids.size() > 1) {
    matrix.columns.push_back("full_tune");
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const PriorNetwork tuned = ids[r] == cfg.domain_id ? net : PriorNetwork::load(paths.full_tune(ids[r]));
      matrix.cells[r].push_back(evaluate_samples(domains[r], domains[r].test, tuned, nullptr));
    }
  } else if (ids.size() > 1) {
    notes.push_back("full_tune column skipped: missing checkpoints");
  }

  std::vector<NormProfile> profiles;
  if (!registries.empty() && methods[0] == "rank_one") {
    for (const auto& entry : registries[0].list()) profiles.push_back(norm_profile(registries[0].get(entry.domain_id), net));
  }
  std::vector<Figure> figures;
  for (std::size_t r = 0; r < domains.size(); ++r) {
    const auto& d = domains[r];
    if (d.test.empty()) continue;
    const auto& s = d.test.front();
    const Image truth = magnitude(s.image);
    for (const auto& rec : recs) {
      const ModulationSet* mod = nullptr;
      std::optional<ModulationSet> held;
      if (rec.modulation == Reconstructor::Modulation::kByDomain) {
        held = rec.registry->resolve(d.domain_id);
        if (held) mod = &*held;
      }
      const Image xh = unrolled_reconstruct(s.measurements, d.op, net, mod, d.solver);
      figures.push_back({"residual_" + d.domain_id + "_" + rec.name,
                         residual_figure(truth, magnitude(xh), cfg.evaluation.residual_gain)});
    }
  }
  const json context = {{"backbone_fingerprint", fp}, {"config", cfg.to_yaml()}, {"notes", notes}};
  emit_report(matrix, profiles, figures, paths.root / "eval", context);
  std::cout << matrix.to_table();
  for (const auto& n : notes) std::printf("note: %s\n", n.get<std::string>().c_str());
  std::printf("report: %s\n", (paths.root / "eval" / "report.json").c_str());
  return 0;
}

double third_mean(const std::vector<double>& v, bool last) {
  const std::size_t n = std::max<std::size_t>(1, v.size() / 3);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += last ? v[v.size() - 1 - i] : v[i];
  return s / static_cast<double>(n);
}

int cmd_analyze(const CommonOptions& opts, const std::string& domain_id, const std::string& subsets,
                bool sweep, const std::string& backbone_path) {
  const RunConfig base_cfg = load_config(opts);
  const RunPaths paths{output_dir(base_cfg)};
  const PriorNetwork net = load_backbone(backbone_path, paths);
  const auto registry = DomainRegistry::open(paths.registry());
  registry.require_backbone(net.fingerprint());

  json out = json::object();
  out["backbone_fingerprint"] = net.fingerprint();
  std::vector<NormProfile> profiles;
  for (const auto& entry : registry.list()) {
    if (!domain_id.empty() && entry.domain_id != domain_id) continue;
    profiles.push_back(norm_profile(registry.get(entry.domain_id), net));
  }
  if (!domain_id.empty() && profiles.empty()) {
    if (!registry.contains(domain_id)) registry.get(domain_id);  // lists known domains
  }
  for (const auto& p : profiles) {
    out["profiles"][p.domain_id] = {{"ratio", p.ratio},
                                    {"normalized", p.normalized},
                                    {"first_third_mean", third_mean(p.normalized, false)},
                                    {"last_third_mean", third_mean(p.normalized, true)}};
    std::printf("%-16s first third %.3f  last third %.3f\n", p.domain_id.c_str(),
                third_mean(p.normalized, false), third_mean(p.normalized, true));
  }

  if (sweep) {
    if (domain_id.empty()) throw Error(ErrorCode::kInvalidArgument, "the partial-modulation sweep needs --domain");
    const RunConfig cfg = domain_config(base_cfg, domain_id);
    const DomainData domain = load_domain(cfg, paths);
    const ModulationSet full = registry.get(domain_id);
    const double frozen = evaluate_samples(domain, domain.test, net, nullptr).mean_psnr;
    const double modulated = evaluate_samples(domain, domain.test, net, &full).mean_psnr;
    const auto wanted = split_list(subsets);
    json rows = json::array();
    std::printf("frozen %.3f dB, full modulation %.3f dB\n", frozen, modulated);
    for (const auto& subset : partial_modulation_subsets(net.layer_count())) {
      if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), subset.name) == wanted.end()) continue;
      const auto result = adapt_partial(domain, net, subset.layers, cfg.training);
      const double p = evaluate_samples(domain, domain.test, net, &result.modulation).mean_psnr;
      const double retained = modulated != frozen ? (p - frozen) / (modulated - frozen) : 0.0;
      rows.push_back({{"subset", subset.name},
                      {"layers", subset.layers},
                      {"parameters", result.report.trainable_parameters},
                      {"psnr", p},
                      {"retained_gain", retained}});
      std::printf("%-12s %8.3f dB  retained %.3f\n", subset.name.c_str(), p, retained);
    }
    out["sweep"] = {{"domain_id", domain_id}, {"frozen_psnr", frozen}, {"full_psnr", modulated}, {"subsets", rows}};
  }
  const fs::path dir = paths.root / "analysis";
  std::ostringstream csv;
  csv.precision(10);
  csv << "domain,layer,ratio,normalized\n";
  for (const auto& p : profiles) {
    for (std::size_t l = 0; l < p.ratio.size(); ++l) {
      csv << p.domain_id << ',' << l << ',' << p.ratio[l] << ',' << p.normalized[l] << '\n';
    }
  }
  make_dirs(dir);
  atomic_write_file(dir / (domain_id.empty() ? std::string("profiles.csv") : "profiles_" + domain_id + ".csv"),
                    csv.str());
  write_json(dir / (domain_id.empty() ? std::string("analysis.json") : "analysis_" + domain_id + ".json"), out);
  return 0;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return 2;
    case ErrorCode::kUnknownDomain: return 3;
    case ErrorCode::kFingerprintMismatch: return 4;
    case ErrorCode::kManifestMismatch: return 5;
    case ErrorCode::kMissingModulation: return 6;
    default: return 1;
  }
}

void print_error(std::string_view category, std::string message) {
  std::replace(message.begin(), message.end(), '\n', ' ');
  std::fprintf(stderr, "error: %.*s: %s\n", static_cast<int>(category.size()), category.data(), message.c_str());
}

// "--block.key=value" and "--block.key value" become dotted overrides.
std::vector<std::string> extract_overrides(std::vector<std::string>& args) {
  const auto keys = RunConfig::keys();
  auto is_key = [&](const std::string& k) {
    return std::find(keys.begin(), keys.end(), k) != keys.end() || k.rfind("evaluation.domains.", 0) == 0;
  };
  std::vector<std::string> overrides;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto& a = args[i];
    if (a.rfind("--", 0) == 0 && a.find('.') != std::string::npos) {
      const auto eq = a.find('=');
      const std::string key = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
      if (is_key(key) || key.find('.') != std::string::npos) {
        if (eq != std::string::npos) {
          overrides.push_back(a.substr(2));
        } else if (i + 1 < args.size()) {
          overrides.push_back(key + "=" + args[++i]);
        } else {
          throw Error(ErrorCode::kConfig, "missing value for key '" + key + "'");
        }
        continue;
      }
    }
    rest.push_back(a);
  }
  args = std::move(rest);
  return overrides;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  CommonOptions common;
  common.overrides = extract_overrides(args);

  CLI::App app{"Unrolled PnP-FISTA reconstruction with per-domain rank-one modulation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fpnp 0.1.0");
  std::vector<std::string> positional;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config,-c", common.config_path, "YAML run configuration")->check(CLI::ExistingFile);
    sub->add_option("overrides", positional, "dotted overrides, e.g. operator.pattern=cartesian");
  };

  bool resume = false;
  bool force = false;
  std::string domain;
  std::string backbone;
  std::string image;
  std::string measurements;
  std::string out;
  std::string save_y;
  std::string output;
  std::string domain_list;
  std::string subsets;
  bool no_sweep = false;

  auto* make_config = app.add_subcommand("make-config", "write a commented default configuration");
  add_common(make_config);
  make_config->add_option("--output,-o", output, "destination file (stdout if omitted)");

  auto* train = app.add_subcommand("train-base", "train the backbone on the source domain");
  add_common(train);
  train->add_flag("--resume", resume, "continue from the last completed epoch");
  train->add_flag("--force", force, "discard an existing backbone and its modulation stores");

  auto* adapt = app.add_subcommand("adapt", "learn a modulation (or baseline) for one domain");
  add_common(adapt);
  adapt->add_option("--domain,-d", domain, "evaluation domain id (default: domain_id)");
  adapt->add_option("--backbone", backbone, "backbone checkpoint (default: <output.dir>/backbone.ckpt)");

  auto* recon = app.add_subcommand("reconstruct", "reconstruct one image or measurement file");
  add_common(recon);
  recon->add_option("--domain,-d", domain, "domain id whose modulation to apply");
  recon->add_option("--image", image, "ground-truth image; measurements are simulated from it");
  recon->add_option("--measurements", measurements, "measurement file written by --save-measurements");
  recon->add_option("--out", out, "output directory (default: <output.dir>/reconstruct)");
  recon->add_option("--save-measurements", save_y, "also write the measurements used");
  recon->add_option("--backbone", backbone, "backbone checkpoint");

  auto* evaluate = app.add_subcommand("evaluate", "evaluation matrix over the configured domains");
  add_common(evaluate);
  evaluate->add_option("--domains", domain_list, "comma-separated subset of domain ids");
  evaluate->add_option("--backbone", backbone, "backbone checkpoint");

  auto* analyze = app.add_subcommand("analyze", "norm profiles and partial-modulation sweep");
  add_common(analyze);
  analyze->add_option("--domain,-d", domain, "domain to analyze");
  analyze->add_option("--subsets", subsets, "comma-separated subset names (default: all)");
  analyze->add_flag("--no-sweep", no_sweep, "norm profiles only");
  analyze->add_option("--backbone", backbone, "backbone checkpoint");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 64;
  }
  for (const auto& p : positional) {
    if (p.find('=') == std::string::npos) {
      print_error("usage", "unexpected argument '" + p + "' (overrides look like key=value)");
      return 64;
    }
    common.overrides.push_back(p);
  }

  if (*make_config) return cmd_make_config(common, output);
  if (*train) return cmd_train_base(common, resume, force);
  if (*adapt) return cmd_adapt(common, domain, backbone);
  if (*recon) return cmd_reconstruct(common, domain, image, measurements, out, backbone, save_y);
  if (*evaluate) return cmd_evaluate(common, domain_list, backbone);
  if (*analyze) return cmd_analyze(common, domain, subsets, !no_sweep, backbone);
  return 64;
}

}  // namespace
}  // namespace fpnp

int main(int argc, char** argv) {
  try {
    return fpnp::run(argc, argv);
  } catch (const fpnp::Error& e) {
    fpnp::print_error(fpnp::to_string(e.code()), e.what());
    return fpnp::exit_code(e.code());
  } catch (const std::exception& e) {
    fpnp::print_error("internal", e.what());
    return 1;
  }
}
