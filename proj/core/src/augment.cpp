#include "ileumnet/augment.hpp"

#include <cmath>
#include <numbers>

#include "ileumnet/kernels.hpp"

namespace ileumnet {
namespace {

double reflect(double c, std::size_t n) {
  if (n == 1) return 0.0;
  const double last = static_cast<double>(n - 1);
  const double period = 2.0 * last;
  c = std::fmod(std::abs(c), period);
  return c > last ? period - c : c;
}

}  // namespace

float sample_trilinear(const Volume& v, double z, double y, double x) {
  const auto& e = v.extents();
  z = reflect(z, e.d);
  y = reflect(y, e.h);
  x = reflect(x, e.w);
  const auto z0 = static_cast<std::size_t>(std::floor(z));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t z1 = std::min(z0 + 1, e.d - 1), y1 = std::min(y0 + 1, e.h - 1), x1 = std::min(x0 + 1, e.w - 1);
  const double fz = z - static_cast<double>(z0), fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  const double c00 = lerp(v.at(z0, y0, x0), v.at(z0, y0, x1), fx);
  const double c01 = lerp(v.at(z0, y1, x0), v.at(z0, y1, x1), fx);
  const double c10 = lerp(v.at(z1, y0, x0), v.at(z1, y0, x1), fx);
  const double c11 = lerp(v.at(z1, y1, x0), v.at(z1, y1, x1), fx);
  return static_cast<float>(lerp(lerp(c00, c01, fy), lerp(c10, c11, fy), fz));
}

Volume rotate_axial(const Volume& v, double angle_deg) {
  if (angle_deg == 0.0) return v;
  const auto& e = v.extents();
  Volume out(e);
  out.set_spacing(v.spacing());
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double cy = 0.5 * static_cast<double>(e.h - 1), cx = 0.5 * static_cast<double>(e.w - 1);
  for (std::size_t z = 0; z < e.d; ++z) {
    for (std::size_t y = 0; y < e.h; ++y) {
      for (std::size_t x = 0; x < e.w; ++x) {
        // Inverse map: output position rotated by -theta gives the source.
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        const double sy = cy + c * dy + s * dx;
        const double sx = cx - s * dy + c * dx;
        out.at(z, y, x) = sample_trilinear(v, static_cast<double>(z), sy, sx);
      }
    }
  }
  return out;
}

Volume flip_horizontal(const Volume& v) {
  const auto& e = v.extents();
  Volume out(e);
  out.set_spacing(v.spacing());
  for (std::size_t z = 0; z < e.d; ++z) {
    for (std::size_t y = 0; y < e.h; ++y) {
      for (std::size_t x = 0; x < e.w; ++x) out.at(z, y, e.w - 1 - x) = v.at(z, y, x);
    }
  }
  return out;
}

Volume crop_recenter(const Volume& v, const Box3& box) {
  const Volume crop = v.crop(box);
  const auto& e = v.extents();
  std::array<std::vector<std::size_t>, 3> source;
  for (std::size_t a = 0; a < 3; ++a) {
    const std::size_t n = e[a], c = box.size[a];
    const std::size_t left = (n - c) / 2;
    require(c == n || (left < c && n - c - left < c), ErrorCode::kMirrorTooWide, "crop too small to mirror-fill");
    source[a].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      source[a][i] = static_cast<std::size_t>(
          kernels::padded_source(static_cast<std::ptrdiff_t>(i), c, left, PaddingMode::kMirror));
    }
  }
  Volume out(e);
  out.set_spacing(v.spacing());
  for (std::size_t z = 0; z < e.d; ++z) {
    for (std::size_t y = 0; y < e.h; ++y) {
      for (std::size_t x = 0; x < e.w; ++x) out.at(z, y, x) = crop.at(source[0][z], source[1][y], source[2][x]);
    }
  }
  return out;
}

Volume augment(const Volume& v, Rng& rng, const AugmentConfig& config) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Every draw happens unconditionally so the stream layout is fixed.
  const double angle = (2.0 * unit(rng) - 1.0) * config.max_rotation_deg;
  const bool rotate = unit(rng) < config.rotation_prob;
  const bool flip = unit(rng) < config.flip_prob;
  const bool crop = unit(rng) < config.crop_prob;
  std::array<double, 3> offsets{unit(rng), unit(rng), unit(rng)};

  Volume out = rotate ? rotate_axial(v, angle) : v;
  if (flip) out = flip_horizontal(out);
  if (crop && config.crop_fraction < 1.0) {
    const auto& e = out.extents();
    Box3 box;
    for (std::size_t a = 0; a < 3; ++a) {
      std::size_t c = static_cast<std::size_t>(std::lround(config.crop_fraction * static_cast<double>(e[a])));
      c = std::clamp<std::size_t>(c, 1, e[a]);
      if (2 * c <= e[a] + 1) c = e[a];
      box.size[a] = c;
      box.lo[a] = static_cast<std::size_t>(std::floor(offsets[a] * static_cast<double>(e[a] - c + 1)));
      box.lo[a] = std::min(box.lo[a], e[a] - c);
    }
    out = crop_recenter(out, box);
  }
  return out;
}

}  // namespace ileumnet
