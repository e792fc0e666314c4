#include "fpnp/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "fpnp/io.hpp"

namespace fpnp {

namespace {

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view why) {
  throw Error(ErrorCode::kConfig,
              "invalid value '" + std::string(value) + "' for key '" + std::string(key) + "': " +
                  std::string(why));
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_integer(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) bad_value(key, text, "expected an integer");
  return out;
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string v = trim(text);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty() || !std::isfinite(out)) {
    bad_value(key, text, "expected a finite number");
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, ptr);
  // Keep a decimal marker so the value reads as a float.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string format_layers(const std::vector<int>& layers) {
  std::string out = "[";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(layers[i]);
  }
  return out + "]";
}

std::vector<int> parse_layers(std::string_view key, std::string_view text) {
  std::string v = trim(text);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') bad_value(key, text, "unterminated list");
    v = v.substr(1, v.size() - 2);
  }
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_integer<int>(key, item));
  }
  return out;
}

template <typename F>
auto parse_enum(std::string_view key, std::string_view text, F&& parse) {
  try {
    return parse(trim(text));
  } catch (const Error& e) {
    bad_value(key, text, e.what());
  }
}

SignalField parse_field(std::string_view name) {
  if (name == "real") return SignalField::kReal;
  if (name == "complex") return SignalField::kComplex;
  throw Error(ErrorCode::kInvalidArgument, "expected real or complex");
}

std::string_view field_name(SignalField f) { return f == SignalField::kReal ? "real" : "complex"; }

struct Key {
  const char* name;
  const char* comment;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
};

#define FPNP_INT_KEY(NAME, COMMENT, FIELD, TYPE)                                   \
  Key {                                                                            \
    NAME, COMMENT, [](const RunConfig& c) { return std::to_string(c.FIELD); },     \
        [](RunConfig& c, std::string_view k, std::string_view v) {                 \
          c.FIELD = parse_integer<TYPE>(k, v);                                     \
        }                                                                          \
  }
#define FPNP_REAL_KEY(NAME, COMMENT, FIELD)                                                        \
  Key {                                                                                            \
    NAME, COMMENT, [](const RunConfig& c) { return format_double(c.FIELD); },                      \
        [](RunConfig& c, std::string_view k, std::string_view v) { c.FIELD = parse_double(k, v); } \
  }
#define FPNP_STRING_KEY(NAME, COMMENT, FIELD)                                                 \
  Key {                                                                                       \
    NAME, COMMENT, [](const RunConfig& c) { return c.FIELD; },                                \
        [](RunConfig& c, std::string_view, std::string_view v) { c.FIELD = std::string(v); } \
  }

const std::vector<Key>& key_table() {
  static const std::vector<Key> table = {
      FPNP_STRING_KEY("domain_id", "name of the domain this run trains or adapts to", domain_id),

      FPNP_STRING_KEY("dataset.name", "", dataset.name),
      FPNP_STRING_KEY("dataset.source",
                      "synthetic:{shepp_logan,texture_faces,ct_like} or a directory of PGM/PPM files",
                      dataset.source),
      FPNP_INT_KEY("dataset.count", "number of images for synthetic sources", dataset.count, int),
      FPNP_INT_KEY("dataset.size", "images are center-cropped and resized to size x size",
                   dataset.size, int),
      FPNP_INT_KEY("dataset.channels", "1 = grayscale, 3 = RGB", dataset.channels, int),
      FPNP_REAL_KEY("dataset.split.train", "", dataset.split.train),
      FPNP_REAL_KEY("dataset.split.val", "", dataset.split.val),
      FPNP_REAL_KEY("dataset.split.test", "", dataset.split.test),
      FPNP_INT_KEY("dataset.seed", "split shuffle and synthetic generator seed", dataset.seed,
                   std::uint64_t),

      FPNP_STRING_KEY("operator.type", "fourier | gaussian", op.type),
      Key{"operator.pattern", "radial | cartesian | gaussian_density | spiral | full",
          [](const RunConfig& c) { return std::string(to_string(c.op.pattern)); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            c.op.pattern = parse_enum(k, v, [](const std::string& s) { return parse_mask_pattern(s); });
          }},
      FPNP_REAL_KEY("operator.acceleration", "R: sampled fraction (or m/n) is 1/R",
                    op.acceleration),
      Key{"operator.field", "real | complex (complex uses 2 channels: real, imaginary)",
          [](const RunConfig& c) { return std::string(field_name(c.op.field)); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            c.op.field = parse_enum(k, v, [](const std::string& s) { return parse_field(s); });
          }},
      FPNP_INT_KEY("operator.seed", "", op.seed, std::uint64_t),

      Key{"noise.snr_db", "measurement SNR in dB, or none",
          [](const RunConfig& c) {
            return c.noise.snr_db ? format_double(*c.noise.snr_db) : std::string("none");
          },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            const std::string t = trim(v);
            if (t == "none" || t.empty() || t == "~" || t == "null") {
              c.noise.snr_db.reset();
            } else {
              c.noise.snr_db = parse_double(k, t);
            }
          }},
      FPNP_INT_KEY("noise.seed", "", noise.seed, std::uint64_t),

      FPNP_INT_KEY("solver.iterations", "unrolled iterations K", solver.iterations, int),
      FPNP_REAL_KEY("solver.gamma", "data-consistency step size", solver.gamma),
      Key{"solver.momentum", "fixed_q1 (q_k = 1, no extrapolation) | fista",
          [](const RunConfig& c) { return std::string(to_string(c.solver.momentum)); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            c.solver.momentum =
                parse_enum(k, v, [](const std::string& s) { return parse_momentum_mode(s); });
          }},

      FPNP_INT_KEY("prior.blocks", "conv+ReLU blocks before the output conv", prior.blocks, int),
      FPNP_INT_KEY("prior.features", "", prior.features, int),
      FPNP_INT_KEY("prior.kernel", "", prior.kernel, int),
      FPNP_REAL_KEY("prior.alpha", "averaging: D(x) = x - alpha * f(x)", prior.alpha),
      FPNP_INT_KEY("prior.seed", "", prior.seed, std::uint64_t),
      FPNP_INT_KEY("prior.spectral_warmup", "power iterations run at initialization",
                   prior.spectral_warmup, int),

      FPNP_INT_KEY("training.epochs", "", training.epochs, int),
      FPNP_REAL_KEY("training.lr_base", "backbone and full-tuning learning rate", training.lr_base),
      FPNP_REAL_KEY("training.lr_modulation", "", training.lr_modulation),
      FPNP_INT_KEY("training.lr_decay_epoch", "modulation lr is scaled after this epoch",
                   training.lr_decay_epoch, int),
      FPNP_REAL_KEY("training.lr_decay_factor", "", training.lr_decay_factor),
      FPNP_INT_KEY("training.batch_size", "", training.batch_size, int),
      FPNP_INT_KEY("training.seed", "", training.seed, std::uint64_t),
      FPNP_REAL_KEY("training.grad_clip_norm", "global gradient norm clip, 0 disables",
                    training.grad_clip_norm),
      FPNP_REAL_KEY("training.adam_beta1", "", training.adam_beta1),
      FPNP_REAL_KEY("training.adam_beta2", "", training.adam_beta2),
      FPNP_REAL_KEY("training.adam_epsilon", "", training.adam_epsilon),

      FPNP_STRING_KEY("adaptation.method", "rank_one | channel_only | partial | full_tune (baseline)",
                      adaptation.method),
      Key{"adaptation.layers", "layer indices for partial modulation",
          [](const RunConfig& c) { return format_layers(c.adaptation.layers); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            c.adaptation.layers = parse_layers(k, v);
          }},

      FPNP_STRING_KEY("output.dir", "relative paths resolve under $FPNP_OUTPUT_ROOT if set",
                      output.dir),

      FPNP_INT_KEY("evaluation.workers", "overridden by $FPNP_WORKERS", evaluation.workers, int),
      FPNP_REAL_KEY("evaluation.residual_gain", "amplification of residual images",
                    evaluation.residual_gain),
  };
  return table;
}

#undef FPNP_INT_KEY
#undef FPNP_REAL_KEY
#undef FPNP_STRING_KEY

const Key* find_key(std::string_view name) {
  for (const auto& k : key_table()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

constexpr std::string_view kDomainsKey = "evaluation.domains";

bool plain_scalar(const std::string& s) {
  if (s.empty()) return false;
  static const std::string_view allowed =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_./:+-";
  if (s.find_first_not_of(allowed) != std::string::npos) return false;
  if (s.front() == '-' && s.size() > 1 && !std::isdigit(static_cast<unsigned char>(s[1]))) return false;
  if (s.back() == ':') return false;
  static const char* reserved[] = {"true", "false", "yes", "no", "on", "off", "null", "~", "-"};
  for (const char* r : reserved) {
    if (s == r) return false;
  }
  return true;
}

std::string quote(const std::string& s) {
  // JSON string escapes are valid YAML double-quoted scalars.
  return plain_scalar(s) ? s : nlohmann::json(s).dump();
}

std::vector<std::string> split_key(std::string_view key) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    out.emplace_back(key.substr(start, dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return out;
}

const char* block_comment(const std::string& block) {
  if (block == "dataset") return "images and their train/val/test split";
  if (block == "operator") return "forward model y = A x + noise";
  if (block == "solver") return "unrolled PnP-FISTA";
  if (block == "prior") return "DnCNN-style artifact-removal network";
  if (block == "training") return "Adam on the MSE loss through the unrolled solver";
  if (block == "adaptation") return "modulation training with the backbone frozen";
  if (block == "evaluation") return "domains: id -> dotted overrides of the settings above";
  return nullptr;
}

void flatten(const YAML::Node& node, const std::string& prefix, RunConfig& config);

void read_domains(const YAML::Node& node, RunConfig& config) {
  config.evaluation.domains.clear();
  if (node.IsNull()) return;
  if (!node.IsMap()) throw Error(ErrorCode::kConfig, "key 'evaluation.domains' must be a mapping");
  for (const auto& entry : node) {
    EvalDomainConfig domain;
    domain.id = entry.first.as<std::string>();
    const YAML::Node& body = entry.second;
    if (!body.IsNull() && !body.IsMap()) {
      throw Error(ErrorCode::kConfig,
                  "key 'evaluation.domains." + domain.id + "' must be a mapping of overrides");
    }
    if (body.IsMap()) {
      for (const auto& kv : body) {
        const auto key = kv.first.as<std::string>();
        if (!kv.second.IsScalar()) {
          throw Error(ErrorCode::kConfig,
                      "key 'evaluation.domains." + domain.id + "." + key + "' must be a scalar");
        }
        domain.overrides.emplace_back(key, kv.second.Scalar());
      }
    }
    config.evaluation.domains.push_back(std::move(domain));
  }
  // Validate every override against a scratch copy so errors name the key.
  for (const auto& d : config.evaluation.domains) (void)config.domain(d.id);
}

void flatten(const YAML::Node& node, const std::string& prefix, RunConfig& config) {
  for (const auto& entry : node) {
    const std::string name = entry.first.as<std::string>();
    const std::string key = prefix.empty() ? name : prefix + "." + name;
    const YAML::Node& value = entry.second;
    if (key == kDomainsKey) {
      read_domains(value, config);
    } else if (value.IsMap()) {
      flatten(value, key, config);
    } else if (value.IsSequence()) {
      std::string joined = "[";
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (!value[i].IsScalar()) throw Error(ErrorCode::kConfig, "key '" + key + "' must be a flat list");
        if (i) joined += ", ";
        joined += value[i].Scalar();
      }
      config.set(key, joined + "]");
    } else {
      config.set(key, value.IsNull() ? std::string() : value.Scalar());
    }
  }
}

}  // namespace

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.emplace_back(k.name);
  return out;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const Key* k = find_key(key);
  if (!k) throw Error(ErrorCode::kConfig, "unknown config key '" + std::string(key) + "'");
  k->set(*this, key, value);
}

std::string RunConfig::get(std::string_view key) const {
  const Key* k = find_key(key);
  if (!k) throw Error(ErrorCode::kConfig, "unknown config key '" + std::string(key) + "'");
  return k->get(*this);
}

void RunConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw Error(ErrorCode::kConfig, "override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const std::string prefix = std::string(kDomainsKey) + ".";
  if (key.rfind(prefix, 0) == 0) {
    const std::string rest = key.substr(prefix.size());
    const auto dot = rest.find('.');
    if (dot == std::string::npos || dot == 0) {
      throw Error(ErrorCode::kConfig, "override key '" + key + "' must be " + prefix + "<id>.<key>");
    }
    const std::string id = rest.substr(0, dot);
    const std::string inner = rest.substr(dot + 1);
    if (!find_key(inner)) throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
    auto it = std::find_if(evaluation.domains.begin(), evaluation.domains.end(),
                           [&](const EvalDomainConfig& d) { return d.id == id; });
    if (it == evaluation.domains.end()) {
      evaluation.domains.push_back({id, {}});
      it = std::prev(evaluation.domains.end());
    }
    auto kv = std::find_if(it->overrides.begin(), it->overrides.end(),
                           [&](const auto& p) { return p.first == inner; });
    if (kv == it->overrides.end()) {
      it->overrides.emplace_back(inner, value);
    } else {
      kv->second = value;
    }
    (void)domain(id);
    return;
  }
  set(key, value);
}

RunConfig RunConfig::domain(const std::string& id) const {
  if (id == domain_id) return *this;
  const auto it = std::find_if(evaluation.domains.begin(), evaluation.domains.end(),
                               [&](const EvalDomainConfig& d) { return d.id == id; });
  if (it == evaluation.domains.end()) {
    std::string known = domain_id;
    for (const auto& d : evaluation.domains) known += ", " + d.id;
    throw Error(ErrorCode::kUnknownDomain, "unknown domain '" + id + "' (known: " + known + ")");
  }
  RunConfig out = *this;
  out.domain_id = id;
  out.evaluation.domains.clear();
  for (const auto& [key, value] : it->overrides) {
    if (key == "domain_id" || key.rfind("evaluation.", 0) == 0) {
      throw Error(ErrorCode::kConfig, "key 'evaluation.domains." + id + "." + key +
                                          "' cannot be overridden per domain");
    }
    const Key* k = find_key(key);
    if (!k) throw Error(ErrorCode::kConfig, "unknown config key 'evaluation.domains." + id + "." + key + "'");
    k->set(out, "evaluation.domains." + id + "." + key, value);
  }
  return out;
}

void RunConfig::validate() const {
  auto fail = [](const char* key, const std::string& why) {
    throw Error(ErrorCode::kConfig, "invalid value for key '" + std::string(key) + "': " + why);
  };
  if (domain_id.empty()) fail("domain_id", "must not be empty");
  if (dataset.count < 1) fail("dataset.count", "must be >= 1");
  if (dataset.size < 16) fail("dataset.size", "must be >= 16");
  if (dataset.channels < 1 || dataset.channels > 3) fail("dataset.channels", "must be 1, 2 or 3");
  for (auto [key, v] : {std::pair{"dataset.split.train", dataset.split.train},
                        std::pair{"dataset.split.val", dataset.split.val},
                        std::pair{"dataset.split.test", dataset.split.test}}) {
    if (v < 0.0 || v > 1.0) fail(key, "must lie in [0, 1]");
  }
  if (std::abs(dataset.split.train + dataset.split.val + dataset.split.test - 1.0) > 1e-9) {
    fail("dataset.split", "fractions must sum to 1");
  }
  if (op.type != "fourier" && op.type != "gaussian") fail("operator.type", "expected fourier or gaussian");
  if (!(op.acceleration >= 1.0)) fail("operator.acceleration", "must be >= 1");
  if (op.type == "gaussian" && op.field == SignalField::kComplex) {
    fail("operator.field", "gaussian operators act on real signals");
  }
  if (op.field == SignalField::kComplex && dataset.channels != 1 && dataset.channels != 2) {
    fail("operator.field", "a complex field needs 1- or 2-channel data");
  }
  if (noise.snr_db && (*noise.snr_db < 0.0 || *noise.snr_db > 60.0)) fail("noise.snr_db", "must lie in [0, 60]");
  if (solver.iterations < 0) fail("solver.iterations", "must be >= 0");
  if (!(solver.gamma > 0.0)) fail("solver.gamma", "must be > 0");
  if (prior.blocks < 1) fail("prior.blocks", "must be >= 1");
  if (prior.features < 1) fail("prior.features", "must be >= 1");
  if (prior.kernel < 1 || prior.kernel % 2 == 0) fail("prior.kernel", "must be a positive odd number");
  if (!(prior.alpha >= 0.0 && prior.alpha <= 1.0)) fail("prior.alpha", "must lie in [0, 1]");
  if (prior.spectral_warmup < 0) fail("prior.spectral_warmup", "must be >= 0");
  if (training.epochs < 1) fail("training.epochs", "must be >= 1");
  if (!(training.lr_base >= 0.0)) fail("training.lr_base", "must be >= 0");
  if (!(training.lr_modulation >= 0.0)) fail("training.lr_modulation", "must be >= 0");
  if (training.lr_decay_epoch < 0) fail("training.lr_decay_epoch", "must be >= 0");
  if (!(training.lr_decay_factor > 0.0)) fail("training.lr_decay_factor", "must be > 0");
  if (training.batch_size < 1) fail("training.batch_size", "must be >= 1");
  if (!(training.adam_beta1 >= 0.0 && training.adam_beta1 < 1.0)) fail("training.adam_beta1", "must lie in [0, 1)");
  if (!(training.adam_beta2 >= 0.0 && training.adam_beta2 < 1.0)) fail("training.adam_beta2", "must lie in [0, 1)");
  if (!(training.adam_epsilon > 0.0)) fail("training.adam_epsilon", "must be > 0");
  const auto& m = adaptation.method;
  if (m != "rank_one" && m != "channel_only" && m != "partial" && m != "full_tune") {
    fail("adaptation.method", "expected rank_one, channel_only, partial or full_tune");
  }
  if (m == "partial") {
    if (adaptation.layers.empty()) fail("adaptation.layers", "partial modulation needs a non-empty subset");
    for (int l : adaptation.layers) {
      if (l < 0 || l > prior.blocks) fail("adaptation.layers", "layer " + std::to_string(l) + " out of range");
    }
  }
  if (output.dir.empty()) fail("output.dir", "must not be empty");
  if (evaluation.workers < 1) fail("evaluation.workers", "must be >= 1");
  if (!(evaluation.residual_gain > 0.0)) fail("evaluation.residual_gain", "must be > 0");
  for (const auto& d : evaluation.domains) {
    if (d.id == domain_id) fail("evaluation.domains", "domain '" + d.id + "' repeats domain_id");
    const auto n = std::count_if(evaluation.domains.begin(), evaluation.domains.end(),
                                 [&](const EvalDomainConfig& o) { return o.id == d.id; });
    if (n > 1) fail("evaluation.domains", "duplicate domain '" + d.id + "'");
  }
}

std::string RunConfig::to_yaml() const {
  std::ostringstream out;
  out << "# fpnp run configuration\n";
  std::vector<std::string> open;  // currently open map path
  for (const auto& k : key_table()) {
    const auto path = split_key(k.name);
    std::size_t common = 0;
    while (common < open.size() && common + 1 < path.size() && open[common] == path[common]) ++common;
    open.resize(common);
    for (std::size_t d = common; d + 1 < path.size(); ++d) {
      if (d == 0) {
        out << "\n";
        if (const char* c = block_comment(path[d])) out << "# " << c << "\n";
      }
      out << std::string(2 * d, ' ') << path[d] << ":\n";
      open.push_back(path[d]);
    }
    out << std::string(2 * (path.size() - 1), ' ') << path.back() << ": " << quote(k.get(*this));
    if (*k.comment) out << "  # " << k.comment;
    out << "\n";
  }
  // evaluation.domains closes the evaluation block, which is emitted last.
  if (evaluation.domains.empty()) {
    out << "  domains: {}\n";
  } else {
    out << "  domains:\n";
    for (const auto& d : evaluation.domains) {
      out << "    " << quote(d.id) << ":";
      if (d.overrides.empty()) {
        out << " {}\n";
        continue;
      }
      out << "\n";
      for (const auto& [key, value] : d.overrides) {
        out << "      " << quote(key) << ": " << quote(value) << "\n";
      }
    }
  }
  return out.str();
}

RunConfig RunConfig::from_yaml(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::kConfig, std::string("malformed config: ") + e.what());
  }
  RunConfig config;
  if (root.IsNull()) return config;
  if (!root.IsMap()) throw Error(ErrorCode::kConfig, "config root must be a mapping");
  flatten(root, "", config);
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  return from_yaml(read_file(path));
}

void RunConfig::save(const std::filesystem::path& path) const { atomic_write_file(path, to_yaml()); }

Shape RunConfig::signal_shape() const {
  const int channels = op.field == SignalField::kComplex ? 2 : dataset.channels;
  return Shape{channels, dataset.size, dataset.size};
}

std::filesystem::path output_dir(const RunConfig& config) {
  std::filesystem::path dir = config.output.dir;
  if (const char* root = std::getenv("FPNP_OUTPUT_ROOT"); root && *root && dir.is_relative()) {
    dir = std::filesystem::path(root) / dir;
  }
  return dir;
}

int worker_count(const RunConfig& config) {
  if (const char* env = std::getenv("FPNP_WORKERS"); env && *env) {
    const int n = parse_integer<int>("FPNP_WORKERS", env);
    if (n < 1) throw Error(ErrorCode::kConfig, "FPNP_WORKERS must be >= 1");
    return n;
  }
  return config.evaluation.workers;
}

MeasurementOperator build_operator(const RunConfig& config) {
  const Shape shape = config.signal_shape();
  if (config.op.type == "gaussian") {
    const auto m = static_cast<int>(std::llround(static_cast<double>(shape.size()) / config.op.acceleration));
    if (m < 1) throw Error(ErrorCode::kConfig, "invalid value for key 'operator.acceleration': no measurements left");
    return MeasurementOperator::gaussian_matrix(m, shape, config.op.seed);
  }
  if (config.op.type != "fourier") {
    throw Error(ErrorCode::kConfig, "invalid value for key 'operator.type': expected fourier or gaussian");
  }
  auto mask = make_mask(config.op.pattern, shape.rows, shape.cols, config.op.acceleration, config.op.seed);
  return MeasurementOperator::masked_fourier(std::move(mask), config.op.field, shape.channels);
}

PriorNetwork build_prior(const RunConfig& config) {
  const PriorArchitecture arch{config.signal_shape().channels, config.prior.blocks, config.prior.features,
                               config.prior.kernel};
  return PriorNetwork::build(arch, config.prior.seed, config.prior.alpha, config.prior.spectral_warmup);
}

NoiseSpec noise_spec(const RunConfig& config) { return NoiseSpec{config.noise.snr_db, config.noise.seed}; }

Image to_signal(const Image& image, const Shape& signal_shape) {
  if (image.shape() == signal_shape) return image;
  if (image.channels() == 1 && signal_shape.channels == 2 && image.rows() == signal_shape.rows &&
      image.cols() == signal_shape.cols) {
    Image out(signal_shape);
    out.values().head(image.size()) = image.values();
    return out;
  }
  throw Error(ErrorCode::kShapeMismatch, "image shape does not match the operator input");
}

DomainData build_domain(const RunConfig& config, const Dataset& dataset) {
  config.validate();
  const Shape shape = config.signal_shape();
  auto convert = [&](const std::vector<Image>& images) {
    std::vector<Image> out;
    out.reserve(images.size());
    for (const auto& im : images) out.push_back(to_signal(im, shape));
    return out;
  };
  return DomainData::simulate(config.domain_id, build_operator(config), noise_spec(config), config.solver,
                              convert(dataset.train), convert(dataset.val), convert(dataset.test));
}

DomainData build_domain(const RunConfig& config) {
  config.validate();
  return build_domain(config, ingest(config.dataset));
}

}  // namespace fpnp
