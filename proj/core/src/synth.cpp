#include "fpnp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace fpnp {

SynthKind parse_synth_kind(std::string_view name) {
  if (name == "shepp_logan" || name == "shepp_logan_variants") return SynthKind::kSheppLogan;
  if (name == "texture_faces") return SynthKind::kTextureFaces;
  if (name == "ct_like") return SynthKind::kCtLike;
  throw Error(ErrorCode::kInvalidArgument, "unknown synthetic family '" + std::string(name) + "'");
}

std::string_view to_string(SynthKind kind) noexcept {
  switch (kind) {
    case SynthKind::kSheppLogan: return "shepp_logan";
    case SynthKind::kTextureFaces: return "texture_faces";
    case SynthKind::kCtLike: return "ct_like";
  }
  return "unknown";
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct Ellipse {
  double value;
  double a;  // semi-axes in normalized [-1, 1] coordinates
  double b;
  double x0;
  double y0;
  double phi_deg;
};

// Adds `value` inside the ellipse; coordinates span [-1, 1] with y up.
void add_ellipse(Image& img, const Ellipse& e) {
  const int n = img.rows();
  const double phi = e.phi_deg * std::numbers::pi / 180.0;
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  for (int r = 0; r < n; ++r) {
    const double y = 1.0 - (2.0 * r + 1.0) / n;
    for (int col = 0; col < img.cols(); ++col) {
      const double x = (2.0 * col + 1.0) / img.cols() - 1.0;
      const double dx = x - e.x0;
      const double dy = y - e.y0;
      const double u = (dx * c + dy * s) / e.a;
      const double v = (-dx * s + dy * c) / e.b;
      if (u * u + v * v <= 1.0) img(0, r, col) += e.value;
    }
  }
}

void set_ellipse(Image& img, const Ellipse& e) {
  Image mask(1, img.rows(), img.cols());
  add_ellipse(mask, {1.0, e.a, e.b, e.x0, e.y0, e.phi_deg});
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    if (mask.values()[i] > 0.0) img.values()[i] = e.value;
  }
}

void clamp01(Image& img) { img.values() = img.values().cwiseMax(0.0).cwiseMin(1.0); }

Image shepp_logan(int size, Rng& rng) {
  // Modified Shepp-Logan table (value, a, b, x0, y0, phi).
  static const Ellipse kBase[] = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},        {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
      {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},    {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
      {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},       {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
      {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},     {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
      {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},   {0.1, 0.023, 0.046, 0.06, -0.605, 0.0},
  };
  Image img(1, size, size);
  const double scale = uniform(rng, 0.85, 1.05);
  const double aspect = uniform(rng, 0.9, 1.1);
  const double rot = uniform(rng, -10.0, 10.0);
  for (std::size_t i = 0; i < std::size(kBase); ++i) {
    Ellipse e = kBase[i];
    e.a *= scale * aspect;
    e.b *= scale / aspect;
    e.x0 *= scale;
    e.y0 *= scale;
    if (i >= 2) {
      e.a *= uniform(rng, 0.8, 1.25);
      e.b *= uniform(rng, 0.8, 1.25);
      e.x0 += uniform(rng, -0.04, 0.04);
      e.y0 += uniform(rng, -0.04, 0.04);
      e.phi_deg += uniform(rng, -15.0, 15.0);
      e.value *= uniform(rng, 0.6, 1.8);
    }
    const double t = rot * std::numbers::pi / 180.0;
    const double x0 = e.x0 * std::cos(t) - e.y0 * std::sin(t);
    const double y0 = e.x0 * std::sin(t) + e.y0 * std::cos(t);
    e.x0 = x0;
    e.y0 = y0;
    e.phi_deg += rot;
    add_ellipse(img, e);
  }
  // A few random lesions inside the brain region.
  const int extra = std::uniform_int_distribution<int>(1, 3)(rng);
  for (int i = 0; i < extra; ++i) {
    const double radius = uniform(rng, 0.03, 0.08);
    add_ellipse(img, {uniform(rng, -0.15, 0.25), radius, radius * uniform(rng, 0.6, 1.4),
                      uniform(rng, -0.35, 0.35), uniform(rng, -0.5, 0.5), uniform(rng, 0.0, 180.0)});
  }
  clamp01(img);
  return img;
}

Image texture_face(int size, Rng& rng) {
  Image img(1, size, size);
  // Smooth background gradient.
  const double gx = uniform(rng, -0.1, 0.1);
  const double gy = uniform(rng, -0.1, 0.1);
  const double base = uniform(rng, 0.15, 0.3);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double x = (2.0 * c + 1.0) / size - 1.0;
      const double y = 1.0 - (2.0 * r + 1.0) / size;
      img(0, r, c) = base + gx * x + gy * y;
    }
  }
  const double fx = uniform(rng, -0.08, 0.08);
  const double fy = uniform(rng, -0.05, 0.05);
  const double fa = uniform(rng, 0.5, 0.62);
  const double fb = uniform(rng, 0.68, 0.8);
  set_ellipse(img, {uniform(rng, 0.55, 0.7), fa, fb, fx, fy, uniform(rng, -8.0, 8.0)});
  // Soft shading blobs inside the face.
  auto blob = [&](double cx, double cy, double sigma, double amp) {
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const double x = (2.0 * c + 1.0) / size - 1.0;
        const double y = 1.0 - (2.0 * r + 1.0) / size;
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        img(0, r, c) += amp * std::exp(-d2 / (2.0 * sigma * sigma));
      }
    }
  };
  const double eye_y = fy + uniform(rng, 0.15, 0.25);
  const double eye_dx = uniform(rng, 0.18, 0.26);
  blob(fx - eye_dx, eye_y, uniform(rng, 0.05, 0.07), -uniform(rng, 0.25, 0.4));
  blob(fx + eye_dx, eye_y, uniform(rng, 0.05, 0.07), -uniform(rng, 0.25, 0.4));
  blob(fx, fy - uniform(rng, 0.3, 0.4), uniform(rng, 0.06, 0.09), -uniform(rng, 0.2, 0.3));
  blob(fx, fy, uniform(rng, 0.06, 0.1), uniform(rng, 0.05, 0.15));
  for (int i = 0; i < 4; ++i) {
    blob(uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8), uniform(rng, 0.2, 0.45),
         uniform(rng, -0.12, 0.12));
  }
  clamp01(img);
  return img;
}

void draw_line(Image& img, double x0, double y0, double x1, double y1, double value) {
  const int n = img.rows();
  const double len = std::hypot(x1 - x0, y1 - y0) * n;
  const int steps = std::max(2, static_cast<int>(2.0 * len));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const double x = x0 + t * (x1 - x0);
    const double y = y0 + t * (y1 - y0);
    const long c = std::lround((x + 1.0) * n / 2.0 - 0.5);
    const long r = std::lround((1.0 - y) * n / 2.0 - 0.5);
    if (r >= 0 && r < n && c >= 0 && c < n) img(0, static_cast<int>(r), static_cast<int>(c)) = value;
  }
}

Image ct_like(int size, Rng& rng) {
  Image img(1, size, size);
  const double bw = uniform(rng, 0.8, 0.92);
  const double bh = uniform(rng, 0.6, 0.75);
  set_ellipse(img, {uniform(rng, 0.3, 0.4), bw, bh, 0.0, uniform(rng, -0.05, 0.05), 0.0});
  // Lungs.
  const double lx = uniform(rng, 0.35, 0.45);
  set_ellipse(img, {uniform(rng, 0.02, 0.08), uniform(rng, 0.22, 0.3), uniform(rng, 0.35, 0.45),
                    -lx, 0.05, uniform(rng, -10.0, 10.0)});
  set_ellipse(img, {uniform(rng, 0.02, 0.08), uniform(rng, 0.22, 0.3), uniform(rng, 0.35, 0.45),
                    lx, 0.05, uniform(rng, -10.0, 10.0)});
  // Organs.
  const int organs = std::uniform_int_distribution<int>(2, 4)(rng);
  for (int i = 0; i < organs; ++i) {
    set_ellipse(img, {uniform(rng, 0.45, 0.65), uniform(rng, 0.06, 0.15), uniform(rng, 0.06, 0.15),
                      uniform(rng, -0.2, 0.2), uniform(rng, -0.45, 0.3), uniform(rng, 0.0, 180.0)});
  }
  // Spine and ribs.
  set_ellipse(img, {1.0, uniform(rng, 0.06, 0.09), uniform(rng, 0.06, 0.09), 0.0,
                    -bh + uniform(rng, 0.12, 0.18), 0.0});
  const int ribs = std::uniform_int_distribution<int>(4, 8)(rng);
  for (int i = 0; i < ribs; ++i) {
    const double t = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double x = 0.93 * bw * std::cos(t);
    const double y = 0.93 * bh * std::sin(t);
    set_ellipse(img, {uniform(rng, 0.85, 1.0), 0.035, 0.02, x, y, t * 180.0 / std::numbers::pi});
  }
  // Thin vessels inside the lungs.
  const int vessels = std::uniform_int_distribution<int>(6, 12)(rng);
  for (int i = 0; i < vessels; ++i) {
    const double side = i % 2 == 0 ? -lx : lx;
    const double x0 = side + uniform(rng, -0.1, 0.1);
    const double y0 = uniform(rng, -0.2, 0.3);
    const double ang = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double len = uniform(rng, 0.08, 0.25);
    draw_line(img, x0, y0, x0 + len * std::cos(ang), y0 + len * std::sin(ang),
              uniform(rng, 0.6, 0.9));
  }
  clamp01(img);
  return img;
}

}  // namespace

std::vector<Image> synth_dataset(SynthKind kind, int n, int size, std::uint64_t seed) {
  if (n < 0) throw Error(ErrorCode::kInvalidArgument, "synthetic dataset size must be >= 0");
  if (size < 8) throw Error(ErrorCode::kInvalidArgument, "synthetic image size must be >= 8");
  std::vector<Image> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(kind), static_cast<std::uint32_t>(i)};
    Rng rng(seq);
    switch (kind) {
      case SynthKind::kSheppLogan: out.push_back(shepp_logan(size, rng)); break;
      case SynthKind::kTextureFaces: out.push_back(texture_face(size, rng)); break;
      case SynthKind::kCtLike: out.push_back(ct_like(size, rng)); break;
    }
  }
  return out;
}

double mean_gradient_magnitude(const Image& image) {
  double total = 0.0;
  std::int64_t count = 0;
  for (int r = 0; r + 1 < image.rows(); ++r) {
    for (int c = 0; c + 1 < image.cols(); ++c) {
      const double dx = image(0, r, c + 1) - image(0, r, c);
      const double dy = image(0, r + 1, c) - image(0, r, c);
      total += std::sqrt(dx * dx + dy * dy);
      ++count;
    }
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

}  // namespace fpnp
