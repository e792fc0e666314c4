#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpnp/modulation.hpp"

namespace fpnp {

struct RegistryEntry {
  std::string domain_id;
  std::string file;
  std::string sha256;
  std::int64_t parameter_count = 0;
  std::int64_t sequence = 0;
  nlohmann::json metadata;
};

/// On-disk store of per-domain modulations bound to one backbone fingerprint.
/// Layout: `index.json` plus one `<domain_id>.mod` file per entry. Writes go
/// through temp-file-and-rename so concurrent readers never see partial files.
class DomainRegistry {
 public:
  /// Creates (or reopens, if the fingerprint matches) a registry directory.
  /// `source_domain`, when given, names the domain the backbone was trained on;
  /// it resolves to "no modulation".
  static DomainRegistry create(const std::filesystem::path& dir, const std::string& fingerprint,
                               const std::string& source_domain = {});
  static DomainRegistry open(const std::filesystem::path& dir);

  const std::filesystem::path& directory() const noexcept { return dir_; }
  const std::string& backbone_fingerprint() const noexcept { return fingerprint_; }
  const std::string& source_domain() const noexcept { return source_domain_; }

  void put(const ModulationSet& modulation);
  ModulationSet get(const std::string& domain_id) const;
  /// Like get(), but returns nullopt for the source domain.
  std::optional<ModulationSet> resolve(const std::string& domain_id) const;
  bool contains(const std::string& domain_id) const;
  void remove(const std::string& domain_id);
  std::vector<RegistryEntry> list() const;
  std::vector<std::string> known_domains() const;

  /// Throws kFingerprintMismatch unless `fingerprint` matches the registry.
  void require_backbone(const std::string& fingerprint) const;

 private:
  void write_index() const;

  std::filesystem::path dir_;
  std::string fingerprint_;
  std::string source_domain_;
  std::vector<RegistryEntry> entries_;
};

}  // namespace fpnp
