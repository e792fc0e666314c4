#include "fpnp/image.hpp"

#include <string>

namespace fpnp {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kNumerical: return "numerical";
    case ErrorCode::kFingerprintMismatch: return "fingerprint_mismatch";
    case ErrorCode::kUnknownDomain: return "unknown_domain";
    case ErrorCode::kMissingModulation: return "missing_modulation";
    case ErrorCode::kBackboneMutated: return "backbone_mutated";
    case ErrorCode::kConfig: return "invalid_config";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kManifestMismatch: return "manifest_mismatch";
    case ErrorCode::kEmptyDataset: return "empty_dataset";
  }
  return "unknown";
}

Image::Image(Shape shape, Real fill) : shape_(shape) {
  if (shape.channels < 1 || shape.rows < 1 || shape.cols < 1) {
    throw Error(ErrorCode::kInvalidArgument, "image dimensions must be positive");
  }
  values_ = Vector::Constant(shape.size(), fill);
}

Eigen::Map<RowMatrix> Image::plane(int c) {
  return {values_.data() + c * shape_.pixels(), shape_.rows, shape_.cols};
}

Eigen::Map<const RowMatrix> Image::plane(int c) const {
  return {values_.data() + c * shape_.pixels(), shape_.rows, shape_.cols};
}

Eigen::Map<RowMatrix> Image::as_matrix() {
  return {values_.data(), shape_.channels, shape_.pixels()};
}

Eigen::Map<const RowMatrix> Image::as_matrix() const {
  return {values_.data(), shape_.channels, shape_.pixels()};
}

Image& Image::operator+=(const Image& other) {
  require_same_shape(*this, other, "image addition");
  values_ += other.values_;
  return *this;
}

Image& Image::operator-=(const Image& other) {
  require_same_shape(*this, other, "image subtraction");
  values_ -= other.values_;
  return *this;
}

Image& Image::operator*=(Real s) {
  values_ *= s;
  return *this;
}

Real Image::dot(const Image& other) const {
  require_same_shape(*this, other, "image inner product");
  return values_.dot(other.values_);
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(what) + ": shapes differ (" + std::to_string(a.channels()) + "x" +
                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                    std::to_string(b.channels()) + "x" + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()) + ")");
  }
}

}  // namespace fpnp
