#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fpnp {

/// Coarse failure categories. The CLI prints the category name verbatim so
/// that callers can branch on it.
enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kNumerical,
  kFingerprintMismatch,
  kUnknownDomain,
  kMissingModulation,
  kBackboneMutated,
  kConfig,
  kIo,
  kManifestMismatch,
  kEmptyDataset,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fpnp
