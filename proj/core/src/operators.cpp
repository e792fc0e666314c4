#include "fpnp/operators.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "fpnp/io.hpp"

namespace fpnp {

namespace {

constexpr double kFractionTolerance = 0.03;

// FFTW planning is not thread-safe; plan execution on new arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::string format_fraction(double f) {
  std::ostringstream ss;
  ss.precision(4);
  ss << f;
  return ss.str();
}

}  // namespace

MaskPattern parse_mask_pattern(std::string_view name) {
  if (name == "radial") return MaskPattern::kRadial;
  if (name == "cartesian") return MaskPattern::kCartesian;
  if (name == "gaussian_density" || name == "gaussian") return MaskPattern::kGaussianDensity;
  if (name == "spiral") return MaskPattern::kSpiral;
  if (name == "full") return MaskPattern::kFull;
  throw Error(ErrorCode::kInvalidArgument, "unknown mask pattern '" + std::string(name) + "'");
}

std::string_view to_string(MaskPattern pattern) noexcept {
  switch (pattern) {
    case MaskPattern::kRadial: return "radial";
    case MaskPattern::kCartesian: return "cartesian";
    case MaskPattern::kGaussianDensity: return "gaussian_density";
    case MaskPattern::kSpiral: return "spiral";
    case MaskPattern::kFull: return "full";
  }
  return "unknown";
}

SamplingMask::SamplingMask(MaskPattern pattern, int rows, int cols, double acceleration,
                           std::uint64_t seed, std::vector<std::uint8_t> entries)
    : pattern_(pattern),
      rows_(rows),
      cols_(cols),
      acceleration_(acceleration),
      seed_(seed),
      entries_(std::move(entries)) {
  if (entries_.size() != std::size_t(rows) * cols) {
    throw Error(ErrorCode::kShapeMismatch, "mask entries do not match grid shape");
  }
  for (auto& e : entries_) {
    if (e > 1) throw Error(ErrorCode::kInvalidArgument, "mask entries must be 0 or 1");
  }
}

std::int64_t SamplingMask::sampled_count() const {
  return std::count(entries_.begin(), entries_.end(), std::uint8_t{1});
}

double SamplingMask::sampled_fraction() const {
  return static_cast<double>(sampled_count()) / static_cast<double>(entries_.size());
}

namespace {

using Grid = std::vector<std::uint8_t>;

struct Rasterizer {
  int rows;
  int cols;
  Grid grid;

  Rasterizer(int r, int c) : rows(r), cols(c), grid(std::size_t(r) * c, 0) {}

  void mark(double r, double c) {
    const long ir = std::lround(r);
    const long ic = std::lround(c);
    if (ir >= 0 && ir < rows && ic >= 0 && ic < cols) grid[std::size_t(ir) * cols + ic] = 1;
  }

  std::int64_t count() const { return std::count(grid.begin(), grid.end(), std::uint8_t{1}); }
};

Grid radial_grid(int rows, int cols, int spokes, double offset_unit) {
  Rasterizer ras(rows, cols);
  const double cr = rows / 2;
  const double cc = cols / 2;
  const double reach = std::hypot(rows, cols) / 2.0 + 1.0;
  const double spacing = std::numbers::pi / spokes;
  for (int s = 0; s < spokes; ++s) {
    const double theta = offset_unit * spacing + s * spacing;
    const double sn = std::sin(theta);
    const double cs = std::cos(theta);
    for (double t = -reach; t <= reach; t += 0.5) ras.mark(cr + t * sn, cc + t * cs);
  }
  return std::move(ras.grid);
}

Grid spiral_grid(int rows, int cols, double pitch, double phase) {
  Rasterizer ras(rows, cols);
  const double cr = rows / 2;
  const double cc = cols / 2;
  const double reach = std::hypot(rows, cols) / 2.0 + 1.0;
  double theta = 0.0;
  while (true) {
    const double radius = pitch * theta;
    if (radius > reach) break;
    ras.mark(cr + radius * std::sin(theta + phase), cc + radius * std::cos(theta + phase));
    theta += 0.5 / std::sqrt(radius * radius + pitch * pitch);
  }
  return std::move(ras.grid);
}

double grid_fraction(const Grid& g) {
  return static_cast<double>(std::count(g.begin(), g.end(), std::uint8_t{1})) /
         static_cast<double>(g.size());
}

[[noreturn]] void unreachable_fraction(MaskPattern pattern, double target, double achieved) {
  throw Error(ErrorCode::kInvalidArgument,
              std::string(to_string(pattern)) + " mask cannot reach sampled fraction " +
                  format_fraction(target) + " within 0.03 on this grid; achievable fraction is " +
                  format_fraction(achieved));
}

Grid make_radial(int rows, int cols, double target, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double offset = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  // The covered fraction grows with the spoke count; find the first count
  // reaching the target, then keep whichever neighbour is closer.
  int lo = 1;
  int hi = 4 * std::max(rows, cols);
  if (grid_fraction(radial_grid(rows, cols, hi, offset)) < target) {
    auto g = radial_grid(rows, cols, hi, offset);
    unreachable_fraction(MaskPattern::kRadial, target, grid_fraction(g));
  }
  while (lo < hi) {
    const int mid = lo + (hi - lo) / 2;
    if (grid_fraction(radial_grid(rows, cols, mid, offset)) >= target) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  Grid best = radial_grid(rows, cols, lo, offset);
  if (lo > 1) {
    Grid below = radial_grid(rows, cols, lo - 1, offset);
    if (std::abs(grid_fraction(below) - target) < std::abs(grid_fraction(best) - target)) {
      best = std::move(below);
    }
  }
  return best;
}

Grid make_cartesian(int rows, int cols, double target, std::uint64_t seed) {
  const int lines = std::max(1, static_cast<int>(std::lround(target * cols)));
  const int band = std::min(lines, std::max(1, static_cast<int>(std::lround(0.08 * cols))));
  std::vector<std::uint8_t> selected(cols, 0);
  const int start = cols / 2 - band / 2;
  for (int c = start; c < start + band; ++c) selected[c] = 1;
  std::vector<int> rest;
  for (int c = 0; c < cols; ++c) {
    if (!selected[c]) rest.push_back(c);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(rest.begin(), rest.end(), rng);
  for (int i = 0; i < lines - band && i < static_cast<int>(rest.size()); ++i) selected[rest[i]] = 1;
  Grid g(std::size_t(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) g[std::size_t(r) * cols + c] = selected[c];
  }
  return g;
}

Grid make_gaussian_density(int rows, int cols, double target, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> draws(std::size_t(rows) * cols);
  for (auto& u : draws) u = unif(rng);
  const double cr = rows / 2;
  const double cc = cols / 2;
  const std::size_t dc = std::size_t(rows / 2) * cols + cols / 2;
  auto build = [&](double width) {
    Grid g(draws.size(), 0);
    const double denom = 2.0 * width * width;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
        const std::size_t i = std::size_t(r) * cols + c;
        g[i] = draws[i] < std::exp(-d2 / denom) ? 1 : 0;
      }
    }
    g[dc] = 1;
    return g;
  };
  double lo = 1e-3;
  double hi = 10.0 * std::max(rows, cols);
  for (int it = 0; it < 200 && hi - lo > 1e-9 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (grid_fraction(build(mid)) >= target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  Grid a = build(lo);
  Grid b = build(hi);
  return std::abs(grid_fraction(a) - target) < std::abs(grid_fraction(b) - target) ? a : b;
}

Grid make_spiral(int rows, int cols, double target, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  // Coverage shrinks as the pitch grows.
  double lo = 0.02;
  double hi = std::hypot(rows, cols);
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (grid_fraction(spiral_grid(rows, cols, mid, phase)) >= target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  Grid a = spiral_grid(rows, cols, lo, phase);
  Grid b = spiral_grid(rows, cols, hi, phase);
  return std::abs(grid_fraction(a) - target) < std::abs(grid_fraction(b) - target) ? a : b;
}

}  // namespace

SamplingMask make_mask(MaskPattern pattern, int rows, int cols, double acceleration,
                       std::uint64_t seed) {
  if (!(acceleration >= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "acceleration must be >= 1");
  }
  if (rows < 16 || cols < 16) {
    throw Error(ErrorCode::kInvalidArgument, "mask grid dimensions must be >= 16");
  }
  const double target = 1.0 / acceleration;
  Grid g;
  switch (pattern) {
    case MaskPattern::kFull: g.assign(std::size_t(rows) * cols, 1); break;
    case MaskPattern::kRadial: g = make_radial(rows, cols, target, seed); break;
    case MaskPattern::kCartesian: g = make_cartesian(rows, cols, target, seed); break;
    case MaskPattern::kGaussianDensity: g = make_gaussian_density(rows, cols, target, seed); break;
    case MaskPattern::kSpiral: g = make_spiral(rows, cols, target, seed); break;
  }
  const double achieved = grid_fraction(g);
  if (pattern == MaskPattern::kFull) {
    if (acceleration != 1.0) unreachable_fraction(pattern, target, achieved);
  } else if (std::abs(achieved - target) > kFractionTolerance) {
    unreachable_fraction(pattern, target, achieved);
  }
  return SamplingMask(pattern, rows, cols, acceleration, seed, std::move(g));
}

void save_mask(const SamplingMask& mask, const std::filesystem::path& path) {
  TensorArchive archive;
  archive.kind = "sampling_mask";
  archive.meta = {{"pattern", std::string(to_string(mask.pattern()))},
                  {"rows", mask.rows()},
                  {"cols", mask.cols()},
                  {"acceleration", mask.acceleration()},
                  {"seed", mask.seed()}};
  NamedTensor t{"entries", {mask.rows(), mask.cols()}, {}};
  t.values.assign(mask.entries().begin(), mask.entries().end());
  archive.tensors.push_back(std::move(t));
  save_archive(archive, path);
}

SamplingMask load_mask(const std::filesystem::path& path) {
  const auto archive = load_archive(path);
  if (archive.kind != "sampling_mask") {
    throw Error(ErrorCode::kIo, path.string() + " is not a mask file");
  }
  const auto& t = archive.get("entries");
  std::vector<std::uint8_t> entries(t.values.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double v = t.values[i];
    if (v != 0.0 && v != 1.0) throw Error(ErrorCode::kIo, "mask file has non-boolean entries");
    entries[i] = static_cast<std::uint8_t>(v);
  }
  return SamplingMask(parse_mask_pattern(archive.meta.at("pattern").get<std::string>()),
                      archive.meta.at("rows").get<int>(), archive.meta.at("cols").get<int>(),
                      archive.meta.at("acceleration").get<double>(),
                      archive.meta.at("seed").get<std::uint64_t>(), std::move(entries));
}

// ---------------------------------------------------------------------------

struct MeasurementOperator::FourierPlan {
  int rows;
  int cols;
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;

  FourierPlan(int r, int c) : rows(r), cols(c) {
    std::lock_guard lock(planner_mutex());
    auto* buf = fftw_alloc_complex(std::size_t(r) * c);
    forward = fftw_plan_dft_2d(r, c, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    backward = fftw_plan_dft_2d(r, c, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    fftw_free(buf);
  }
  ~FourierPlan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }
  FourierPlan(const FourierPlan&) = delete;
  FourierPlan& operator=(const FourierPlan&) = delete;
};

namespace {

struct FftBuffer {
  fftw_complex* data;
  std::size_t n;
  explicit FftBuffer(std::size_t size) : data(fftw_alloc_complex(size)), n(size) {}
  ~FftBuffer() { fftw_free(data); }
  FftBuffer(const FftBuffer&) = delete;
  FftBuffer& operator=(const FftBuffer&) = delete;
  std::complex<double>* get() { return reinterpret_cast<std::complex<double>*>(data); }
};

}  // namespace

MeasurementOperator MeasurementOperator::masked_fourier(SamplingMask mask, SignalField field,
                                                        int channels) {
  MeasurementOperator op;
  op.kind_ = Kind::kMaskedFourier;
  op.field_ = field;
  if (field == SignalField::kComplex) {
    if (channels != 2 && channels != 1) {
      throw Error(ErrorCode::kInvalidArgument, "complex signals use exactly 2 channels");
    }
    channels = 2;
  } else if (channels < 1) {
    throw Error(ErrorCode::kInvalidArgument, "channel count must be positive");
  }
  op.input_shape_ = Shape{channels, mask.rows(), mask.cols()};
  const int rows = mask.rows();
  const int cols = mask.cols();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!mask(r, c)) continue;
      const int fr = (r - rows / 2 + rows) % rows;
      const int fc = (c - cols / 2 + cols) % cols;
      op.sample_index_.push_back(std::int64_t{fr} * cols + fc);
    }
  }
  const int planes = field == SignalField::kComplex ? 1 : channels;
  op.output_size_ = static_cast<Eigen::Index>(op.sample_index_.size()) * planes;
  op.plan_ = std::make_shared<const FourierPlan>(rows, cols);
  op.mask_ = std::make_shared<const SamplingMask>(std::move(mask));
  return op;
}

MeasurementOperator MeasurementOperator::gaussian_matrix(int m, Shape input_shape,
                                                         std::uint64_t seed) {
  if (m < 1 || input_shape.size() < 1) {
    throw Error(ErrorCode::kInvalidArgument, "gaussian matrix dimensions must be positive");
  }
  MeasurementOperator op;
  op.kind_ = Kind::kGaussianMatrix;
  op.field_ = SignalField::kReal;
  op.input_shape_ = input_shape;
  op.output_size_ = m;
  op.seed_ = seed;
  auto mat = std::make_shared<RowMatrix>(m, input_shape.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
  for (Eigen::Index i = 0; i < mat->size(); ++i) mat->data()[i] = normal(rng);
  op.matrix_ = std::move(mat);
  return op;
}

Measurements MeasurementOperator::forward(const Image& x) const {
  if (!(x.shape() == input_shape_)) {
    throw Error(ErrorCode::kShapeMismatch, "forward operator input shape mismatch");
  }
  Measurements y;
  if (kind_ == Kind::kGaussianMatrix) {
    y.is_complex = false;
    y.values = ((*matrix_) * x.values()).cast<std::complex<double>>();
    return y;
  }
  y.is_complex = true;
  y.values.resize(output_size_);
  const auto pixels = static_cast<std::size_t>(input_shape_.pixels());
  const double scale = 1.0 / std::sqrt(static_cast<double>(pixels));
  FftBuffer buf(pixels);
  const int planes = field_ == SignalField::kComplex ? 1 : input_shape_.channels;
  const auto per_plane = static_cast<Eigen::Index>(sample_index_.size());
  for (int p = 0; p < planes; ++p) {
    auto* z = buf.get();
    if (field_ == SignalField::kComplex) {
      const Real* re = x.data();
      const Real* im = x.data() + pixels;
      for (std::size_t i = 0; i < pixels; ++i) z[i] = {re[i], im[i]};
    } else {
      const Real* re = x.data() + p * pixels;
      for (std::size_t i = 0; i < pixels; ++i) z[i] = {re[i], 0.0};
    }
    fftw_execute_dft(plan_->forward, buf.data, buf.data);
    for (Eigen::Index k = 0; k < per_plane; ++k) {
      y.values[p * per_plane + k] = z[sample_index_[k]] * scale;
    }
  }
  return y;
}

Image MeasurementOperator::adjoint(const Measurements& y) const {
  if (y.size() != output_size_) {
    throw Error(ErrorCode::kShapeMismatch, "adjoint expects " + std::to_string(output_size_) +
                                               " measurements, got " + std::to_string(y.size()));
  }
  Image x(input_shape_);
  if (kind_ == Kind::kGaussianMatrix) {
    x.values().noalias() = matrix_->transpose() * y.values.real();
    return x;
  }
  const auto pixels = static_cast<std::size_t>(input_shape_.pixels());
  const double scale = 1.0 / std::sqrt(static_cast<double>(pixels));
  FftBuffer buf(pixels);
  const int planes = field_ == SignalField::kComplex ? 1 : input_shape_.channels;
  const auto per_plane = static_cast<Eigen::Index>(sample_index_.size());
  for (int p = 0; p < planes; ++p) {
    auto* z = buf.get();
    std::fill(z, z + pixels, std::complex<double>{});
    for (Eigen::Index k = 0; k < per_plane; ++k) z[sample_index_[k]] = y.values[p * per_plane + k];
    fftw_execute_dft(plan_->backward, buf.data, buf.data);
    if (field_ == SignalField::kComplex) {
      Real* re = x.data();
      Real* im = x.data() + pixels;
      for (std::size_t i = 0; i < pixels; ++i) {
        re[i] = z[i].real() * scale;
        im[i] = z[i].imag() * scale;
      }
    } else {
      Real* re = x.data() + p * pixels;
      for (std::size_t i = 0; i < pixels; ++i) re[i] = z[i].real() * scale;
    }
  }
  return x;
}

Image MeasurementOperator::normal(const Image& x) const { return adjoint(forward(x)); }

double MeasurementOperator::lipschitz_constant(int iterations) const {
  if (kind_ == Kind::kMaskedFourier) return sample_index_.empty() ? 0.0 : 1.0;
  Image v(input_shape_);
  std::mt19937_64 rng(seed_ ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss;
  for (Eigen::Index i = 0; i < v.size(); ++i) v.values()[i] = gauss(rng);
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    v *= 1.0 / std::sqrt(v.squared_norm());
    Image w = this->normal(v);
    lambda = v.dot(w);
    v = std::move(w);
  }
  return lambda;
}

nlohmann::json MeasurementOperator::describe() const {
  nlohmann::json j;
  j["input_shape"] = {input_shape_.channels, input_shape_.rows, input_shape_.cols};
  j["output_size"] = output_size_;
  if (kind_ == Kind::kMaskedFourier) {
    j["kind"] = "masked_fourier";
    j["field"] = field_ == SignalField::kComplex ? "complex" : "real";
    j["pattern"] = std::string(to_string(mask_->pattern()));
    j["acceleration"] = mask_->acceleration();
    j["mask_seed"] = mask_->seed();
    j["sampled_fraction"] = mask_->sampled_fraction();
  } else {
    j["kind"] = "gaussian_matrix";
    j["seed"] = seed_;
  }
  return j;
}

Measurements apply_forward(const MeasurementOperator& op, const Image& x) { return op.forward(x); }

Image apply_adjoint(const MeasurementOperator& op, const Measurements& y) { return op.adjoint(y); }

Image grad_data_fidelity(const MeasurementOperator& op, const Image& x, const Measurements& y) {
  Measurements r = op.forward(x);
  if (r.size() != y.size()) {
    throw Error(ErrorCode::kShapeMismatch, "measurement length mismatch in data fidelity");
  }
  r.values -= y.values;
  return op.adjoint(r);
}

double data_fidelity(const MeasurementOperator& op, const Image& x, const Measurements& y) {
  Measurements r = op.forward(x);
  if (r.size() != y.size()) {
    throw Error(ErrorCode::kShapeMismatch, "measurement length mismatch in data fidelity");
  }
  return 0.5 * (r.values - y.values).squaredNorm();
}

Measurements add_noise(const Measurements& y, const NoiseSpec& spec) {
  if (y.size() == 0) throw Error(ErrorCode::kInvalidArgument, "cannot add noise to empty measurements");
  if (!spec.target_snr_db) return y;
  const double snr = *spec.target_snr_db;
  if (!(snr >= 0.0 && snr <= 60.0)) {
    throw Error(ErrorCode::kInvalidArgument, "target SNR must lie in [0, 60] dB");
  }
  const double signal = y.squared_norm();
  if (signal == 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "cannot calibrate SNR for all-zero measurements");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXcd eta(y.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    if (y.is_complex) {
      const double re = normal(rng);
      const double im = normal(rng);
      eta[i] = {re, im};
    } else {
      eta[i] = {normal(rng), 0.0};
    }
  }
  const double target_norm = std::sqrt(signal) / std::pow(10.0, snr / 20.0);
  eta *= target_norm / eta.norm();
  Measurements out = y;
  out.values += eta;
  return out;
}

double realized_snr_db(const Measurements& clean, const Measurements& noisy) {
  const double noise = (noisy.values - clean.values).squaredNorm();
  return 10.0 * std::log10(clean.squared_norm() / noise);
}

}  // namespace fpnp
