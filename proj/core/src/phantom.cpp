#include "ileumnet/phantom.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

namespace ileumnet {
namespace {

struct Tube {
  std::vector<Vec3> centreline;
  double lumen_radius = 1.5;
  double wall_thickness = 1.0;
  float wall_intensity = 0.35f;
};

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Lesion strength ranges per severity; neighbouring classes overlap slightly.
double draw_strength(int severity, Rng& rng) {
  switch (severity) {
    case 0: return uniform(rng, 0.0, 0.1);
    case 1: return uniform(rng, 0.2, 0.5);
    case 2: return uniform(rng, 0.45, 0.75);
    default: return uniform(rng, 0.75, 1.0);
  }
}

double wall_thickness_for(double strength) { return 1.0 + 2.5 * strength; }
float wall_intensity_for(float body, double strength) { return body + static_cast<float>(0.45 * strength); }

Vec3 draw_location(const PopulationDistribution& dist, Rng& rng) {
  Eigen::Matrix3d sigma;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) sigma(i, j) = dist.sigma[i][j];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(sigma);
  const Eigen::Matrix3d factor =
      solver.eigenvectors() * solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::normal_distribution<double> normal;
  const Eigen::Vector3d z(normal(rng), normal(rng), normal(rng));
  const Eigen::Vector3d p = factor * z;
  return {dist.mu[0] + p(0), dist.mu[1] + p(1), dist.mu[2] + p(2)};
}

// Curved tube whose centreline has `centre` as its mean point. The main
// direction lies in the axial (H, W) plane.
std::vector<Vec3> centreline(const Vec3& centre, double half_length, Rng& rng) {
  const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double bend = uniform(rng, -0.5, 0.5);
  const double wobble = uniform(rng, -1.5, 1.5);
  const double dy = std::sin(phi), dx = std::cos(phi);
  constexpr int kPoints = 41;
  std::vector<Vec3> out;
  out.reserve(kPoints);
  for (int i = 0; i < kPoints; ++i) {
    const double t = -1.0 + 2.0 * i / (kPoints - 1);
    const double along = t * half_length;
    // t^2 - 1/3 and sin(pi t) both average to zero over t in [-1, 1].
    const double across = bend * half_length * (t * t - 1.0 / 3.0);
    out.push_back({centre[0] + wobble * std::sin(std::numbers::pi * t), centre[1] + along * dy - across * dx,
                   centre[2] + along * dx + across * dy});
  }
  return out;
}

// True when no point within the tube's outer radius enters the box of
// `window` extents centred on `centre`.
bool clear_of(const Tube& tube, const Vec3& centre, const Extents3& window) {
  const double reach = tube.lumen_radius + tube.wall_thickness + 1.0;
  for (const auto& p : tube.centreline) {
    bool inside = true;
    for (std::size_t a = 0; a < 3; ++a) {
      if (std::abs(p[a] - centre[a]) >= 0.5 * static_cast<double>(window[a]) + reach) inside = false;
    }
    if (inside) return false;
  }
  return true;
}

void render_tube(Volume& v, const Tube& tube, float lumen_intensity) {
  const auto& e = v.extents();
  const double outer = tube.lumen_radius + tube.wall_thickness;
  std::array<double, 3> lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
  for (const auto& p : tube.centreline) {
    for (std::size_t a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a] - outer - 1.0);
      hi[a] = std::max(hi[a], p[a] + outer + 1.0);
    }
  }
  auto span = [](double l, double h, std::size_t n) {
    const auto a = static_cast<std::size_t>(std::clamp(std::floor(l), 0.0, static_cast<double>(n)));
    const auto b = static_cast<std::size_t>(std::clamp(std::ceil(h), 0.0, static_cast<double>(n)));
    return std::pair{a, b};
  };
  const auto [z0, z1] = span(lo[0], hi[0], e.d);
  const auto [y0, y1] = span(lo[1], hi[1], e.h);
  const auto [x0, x1] = span(lo[2], hi[2], e.w);
  for (std::size_t z = z0; z < z1; ++z) {
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) {
        const double pz = static_cast<double>(z) + 0.5, py = static_cast<double>(y) + 0.5,
                     px = static_cast<double>(x) + 0.5;
        double best = 1e30;
        for (const auto& c : tube.centreline) {
          const double d2 = (pz - c[0]) * (pz - c[0]) + (py - c[1]) * (py - c[1]) + (px - c[2]) * (px - c[2]);
          best = std::min(best, d2);
        }
        const double d = std::sqrt(best);
        if (d <= tube.lumen_radius) {
          v.at(z, y, x) = lumen_intensity;
        } else if (d <= outer) {
          v.at(z, y, x) = tube.wall_intensity;
        }
      }
    }
  }
}

}  // namespace

Phantom generate_phantom(const std::string& id, int severity, const PopulationDistribution& dist,
                         const PhantomConfig& config, Rng& rng) {
  require(severity >= 0 && severity <= 3, ErrorCode::kInvalidArgument, "severity must be 0..3");
  const auto& e = config.extents;
  require(e.d >= 8 && e.h >= 16 && e.w >= 16, ErrorCode::kInvalidArgument, "phantom extents too small");

  Phantom ph{Volume(e), {}, {}};
  Volume& v = ph.volume;
  v.set_spacing(Vec3{3.0, 1.25, 1.25});

  // Body: elliptical cylinder along D.
  const double cy = 0.5 * static_cast<double>(e.h), cx = 0.5 * static_cast<double>(e.w);
  const double ay = static_cast<double>(e.h) * uniform(rng, 0.36, 0.46);
  const double ax = static_cast<double>(e.w) * uniform(rng, 0.38, 0.47);
  const auto zlo = static_cast<std::size_t>(std::floor(static_cast<double>(e.d) * uniform(rng, 0.02, 0.08)));
  const auto zhi = e.d - static_cast<std::size_t>(std::floor(static_cast<double>(e.d) * uniform(rng, 0.02, 0.08)));
  for (std::size_t z = zlo; z < zhi; ++z) {
    for (std::size_t y = 0; y < e.h; ++y) {
      for (std::size_t x = 0; x < e.w; ++x) {
        const double ny = (static_cast<double>(y) + 0.5 - cy) / ay, nx = (static_cast<double>(x) + 0.5 - cx) / ax;
        if (ny * ny + nx * nx <= 1.0) v.at(z, y, x) = config.body_intensity;
      }
    }
  }
  const Box3 body = region_grow_extent(v, {e.d / 2, e.h / 2, e.w / 2}, config.body_threshold);

  PatientRecord& rec = ph.record;
  rec.id = id;
  rec.severity = severity;
  rec.patient_origin = body.lo;
  rec.patient_dims = body.size;

  Vec3 p = draw_location(dist, rng);
  for (auto& c : p) c = std::clamp(c, -0.85, 0.85);
  const Vec3 centre = voxel_location(p, body.lo, body.size);
  rec.ileum_centroid = centre;
  ph.truth.proportional_location = p;

  const double strength = draw_strength(severity, rng);
  ph.truth.lesion_strength = strength;
  ph.truth.wall_thickness = wall_thickness_for(strength);
  ph.truth.wall_intensity = wall_intensity_for(config.body_intensity, strength);
  if (severity > 0) {
    std::normal_distribution<double> jitter(0.0, 2.0);
    rec.difficulty = std::clamp(60.0 - 40.0 * strength + jitter(rng), 1.0, 100.0);
  }

  // Distractor loops cluster around the population location (neighbouring
  // bowel) but stay outside the clear window around the ileum. A loop with no
  // valid placement after the attempt budget is skipped.
  for (std::size_t i = 0; i < config.distractors; ++i) {
    const double s = uniform(rng, 0.0, config.distractor_max_strength);
    const double half = uniform(rng, config.distractor_min_half_length, config.distractor_max_half_length);
    Tube t{{}, uniform(rng, 1.2, 2.0), wall_thickness_for(s), wall_intensity_for(config.body_intensity, s)};
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      Vec3 q = draw_location(dist, rng);
      for (std::size_t a = 0; a < 3; ++a) q[a] = dist.mu[a] + config.distractor_spread * (q[a] - dist.mu[a]);
      for (auto& c : q) c = std::clamp(c, -0.9, 0.9);
      t.centreline = centreline(voxel_location(q, body.lo, body.size), half, rng);
      placed = clear_of(t, centre, config.clear_window);
    }
    if (placed) render_tube(v, t, config.lumen_intensity);
  }

  Tube ileum{centreline(centre, config.tube_half_length, rng), uniform(rng, 1.5, 2.0), ph.truth.wall_thickness,
             static_cast<float>(ph.truth.wall_intensity)};
  render_tube(v, ileum, config.lumen_intensity);

  std::normal_distribution<float> body_noise(0.0f, config.noise_sigma);
  std::normal_distribution<float> bg_noise(0.0f, config.background_sigma);
  for (auto& value : v.data()) value += value > 0.0f ? body_noise(rng) : bg_noise(rng);
  return ph;
}

}  // namespace ileumnet
