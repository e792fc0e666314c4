#include "fpnp/registry.hpp"

#include <algorithm>

#include "fpnp/io.hpp"

namespace fpnp {

namespace {

constexpr const char* kIndexFile = "index.json";

std::string known_list(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) out += (out.empty() ? "" : ", ") + id;
  return out.empty() ? "(none)" : out;
}

}  // namespace

DomainRegistry DomainRegistry::create(const std::filesystem::path& dir,
                                      const std::string& fingerprint,
                                      const std::string& source_domain) {
  if (std::filesystem::exists(dir / kIndexFile)) {
    auto existing = open(dir);
    existing.require_backbone(fingerprint);
    return existing;
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create registry directory " + dir.string());
  DomainRegistry reg;
  reg.dir_ = dir;
  reg.fingerprint_ = fingerprint;
  reg.source_domain_ = source_domain;
  reg.write_index();
  return reg;
}

DomainRegistry DomainRegistry::open(const std::filesystem::path& dir) {
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(read_file(dir / kIndexFile));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, "corrupt registry index in " + dir.string() + ": " + e.what());
  }
  DomainRegistry reg;
  reg.dir_ = dir;
  reg.fingerprint_ = index.at("backbone_fingerprint").get<std::string>();
  reg.source_domain_ = index.value("source_domain", "");
  for (const auto& e : index.at("entries")) {
    reg.entries_.push_back({e.at("domain_id").get<std::string>(), e.at("file").get<std::string>(),
                            e.at("sha256").get<std::string>(),
                            e.at("parameter_count").get<std::int64_t>(),
                            e.at("sequence").get<std::int64_t>(), e.at("metadata")});
  }
  return reg;
}

void DomainRegistry::require_backbone(const std::string& fingerprint) const {
  if (fingerprint != fingerprint_) {
    throw Error(ErrorCode::kFingerprintMismatch,
                "backbone fingerprint " + fingerprint.substr(0, 12) +
                    " does not match registry backbone " + fingerprint_.substr(0, 12));
  }
}

void DomainRegistry::write_index() const {
  nlohmann::json index;
  index["backbone_fingerprint"] = fingerprint_;
  index["source_domain"] = source_domain_;
  auto& list = index["entries"] = nlohmann::json::array();
  for (const auto& e : entries_) {
    list.push_back({{"domain_id", e.domain_id},
                    {"file", e.file},
                    {"sha256", e.sha256},
                    {"parameter_count", e.parameter_count},
                    {"sequence", e.sequence},
                    {"metadata", e.metadata}});
  }
  atomic_write_file(dir_ / kIndexFile, index.dump(2) + "\n");
}

void DomainRegistry::put(const ModulationSet& modulation) {
  if (modulation.backbone_fingerprint != fingerprint_) {
    throw Error(ErrorCode::kFingerprintMismatch,
                "modulation '" + modulation.domain_id + "' was trained for backbone " +
                    modulation.backbone_fingerprint.substr(0, 12) + ", registry holds " +
                    fingerprint_.substr(0, 12));
  }
  if (!source_domain_.empty() && modulation.domain_id == source_domain_) {
    throw Error(ErrorCode::kInvalidArgument,
                "domain '" + source_domain_ + "' is the backbone's source domain");
  }
  const std::string bytes = serialize_modulation(modulation);
  const std::string file = modulation.domain_id + ".mod";
  atomic_write_file(dir_ / file, bytes);
  std::int64_t sequence = 0;
  for (const auto& e : entries_) sequence = std::max(sequence, e.sequence + 1);
  RegistryEntry entry{modulation.domain_id, file, sha256_hex(bytes), modulation.parameter_count(),
                      sequence, modulation.metadata};
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const RegistryEntry& e) { return e.domain_id == modulation.domain_id; });
  if (it != entries_.end()) {
    *it = std::move(entry);
  } else {
    entries_.push_back(std::move(entry));
  }
  write_index();
}

ModulationSet DomainRegistry::get(const std::string& domain_id) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const RegistryEntry& e) { return e.domain_id == domain_id; });
  if (it == entries_.end()) {
    throw Error(ErrorCode::kUnknownDomain, "unknown domain '" + domain_id +
                                               "'; known domains: " + known_list(known_domains()));
  }
  const std::string bytes = read_file(dir_ / it->file);
  if (sha256_hex(bytes) != it->sha256) {
    throw Error(ErrorCode::kManifestMismatch, "modulation file for '" + domain_id +
                                                  "' does not match its registry checksum");
  }
  auto m = parse_modulation(bytes);
  if (m.backbone_fingerprint != fingerprint_) {
    throw Error(ErrorCode::kFingerprintMismatch,
                "stored modulation '" + domain_id + "' is bound to a different backbone");
  }
  return m;
}

std::optional<ModulationSet> DomainRegistry::resolve(const std::string& domain_id) const {
  if (!source_domain_.empty() && domain_id == source_domain_) return std::nullopt;
  return get(domain_id);
}

bool DomainRegistry::contains(const std::string& domain_id) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const RegistryEntry& e) { return e.domain_id == domain_id; });
}

void DomainRegistry::remove(const std::string& domain_id) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const RegistryEntry& e) { return e.domain_id == domain_id; });
  if (it == entries_.end()) {
    throw Error(ErrorCode::kUnknownDomain, "unknown domain '" + domain_id + "'");
  }
  const auto file = dir_ / it->file;
  entries_.erase(it);
  write_index();
  std::error_code ec;
  std::filesystem::remove(file, ec);
}

std::vector<RegistryEntry> DomainRegistry::list() const { return entries_; }

std::vector<std::string> DomainRegistry::known_domains() const {
  std::vector<std::string> out;
  if (!source_domain_.empty()) out.push_back(source_domain_);
  for (const auto& e : entries_) out.push_back(e.domain_id);
  return out;
}

}  // namespace fpnp
