#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "fpnp/image.hpp"

namespace fpnp {

enum class MaskPattern { kRadial, kCartesian, kGaussianDensity, kSpiral, kFull };

MaskPattern parse_mask_pattern(std::string_view name);
std::string_view to_string(MaskPattern pattern) noexcept;

/// Boolean k-space sampling grid in centered coordinates: entry (rows/2,
/// cols/2) is the DC coefficient.
class SamplingMask {
 public:
  SamplingMask(MaskPattern pattern, int rows, int cols, double acceleration, std::uint64_t seed,
               std::vector<std::uint8_t> entries);

  MaskPattern pattern() const noexcept { return pattern_; }
  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  double acceleration() const noexcept { return acceleration_; }
  std::uint64_t seed() const noexcept { return seed_; }

  bool operator()(int r, int c) const { return entries_[std::size_t(r) * cols_ + c] != 0; }
  const std::vector<std::uint8_t>& entries() const noexcept { return entries_; }

  std::int64_t sampled_count() const;
  double sampled_fraction() const;

  friend bool operator==(const SamplingMask&, const SamplingMask&) = default;

 private:
  MaskPattern pattern_;
  int rows_;
  int cols_;
  double acceleration_;
  std::uint64_t seed_;
  std::vector<std::uint8_t> entries_;
};

/// Generates a mask whose sampled fraction lies within 0.03 of 1/acceleration.
/// Deterministic in all arguments. Throws kInvalidArgument when the pattern
/// cannot reach the requested fraction on this grid.
SamplingMask make_mask(MaskPattern pattern, int rows, int cols, double acceleration,
                       std::uint64_t seed);

void save_mask(const SamplingMask& mask, const std::filesystem::path& path);
SamplingMask load_mask(const std::filesystem::path& path);

enum class SignalField { kReal, kComplex };

/// Measurement vector. Gaussian-matrix operators produce real measurements
/// (imaginary parts zero); masked Fourier operators produce complex ones.
struct Measurements {
  Eigen::VectorXcd values;
  bool is_complex = true;

  Eigen::Index size() const noexcept { return values.size(); }
  double squared_norm() const { return values.squaredNorm(); }
};

/// Linear forward model A. Immutable after construction; copies share the
/// underlying FFT plans or matrix.
class MeasurementOperator {
 public:
  enum class Kind { kMaskedFourier, kGaussianMatrix };

  /// Unitary 2D DFT restricted to the sampled coefficients. A complex field
  /// uses a 2-channel (real, imaginary) image; a real field uses one channel
  /// per independent image plane.
  static MeasurementOperator masked_fourier(SamplingMask mask, SignalField field,
                                            int channels = 1);

  /// Dense m x n matrix with i.i.d. N(0, 1/m) entries, n = input_shape.size().
  static MeasurementOperator gaussian_matrix(int m, Shape input_shape, std::uint64_t seed);

  Kind kind() const noexcept { return kind_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  Eigen::Index output_size() const noexcept { return output_size_; }
  SignalField field() const noexcept { return field_; }
  bool complex_measurements() const noexcept { return kind_ == Kind::kMaskedFourier; }
  const SamplingMask* mask() const noexcept { return mask_ ? mask_.get() : nullptr; }
  const RowMatrix* matrix() const noexcept { return matrix_ ? matrix_.get() : nullptr; }

  Measurements forward(const Image& x) const;
  Image adjoint(const Measurements& y) const;
  /// A^H A x.
  Image normal(const Image& x) const;

  /// Largest eigenvalue of A^H A by power iteration (exactly 1 for a
  /// non-empty Fourier mask).
  double lipschitz_constant(int iterations = 200) const;

  nlohmann::json describe() const;

 private:
  struct FourierPlan;

  MeasurementOperator() = default;

  Kind kind_ = Kind::kMaskedFourier;
  Shape input_shape_;
  Eigen::Index output_size_ = 0;
  SignalField field_ = SignalField::kReal;
  std::shared_ptr<const SamplingMask> mask_;
  std::shared_ptr<const FourierPlan> plan_;
  std::vector<std::int64_t> sample_index_;  // unshifted flat DFT index per measurement
  std::shared_ptr<const RowMatrix> matrix_;
  std::uint64_t seed_ = 0;
};

Measurements apply_forward(const MeasurementOperator& op, const Image& x);
Image apply_adjoint(const MeasurementOperator& op, const Measurements& y);

/// Gradient of 0.5 * ||y - A x||^2, i.e. A^H (A x - y).
Image grad_data_fidelity(const MeasurementOperator& op, const Image& x, const Measurements& y);

/// 0.5 * ||y - A x||^2.
double data_fidelity(const MeasurementOperator& op, const Image& x, const Measurements& y);

struct NoiseSpec {
  std::optional<double> target_snr_db;
  std::uint64_t seed = 0;
};

/// Adds Gaussian noise scaled so that 10 log10(||y||^2 / ||eta||^2) equals the
/// target exactly for the drawn realization. Complex measurements receive
/// circularly symmetric noise.
Measurements add_noise(const Measurements& y, const NoiseSpec& spec);

/// 10 log10(||clean||^2 / ||noisy - clean||^2).
double realized_snr_db(const Measurements& clean, const Measurements& noisy);

}  // namespace fpnp
