#include "ileumnet/localization.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <deque>

namespace ileumnet {

Box3 region_grow_extent(const Volume& volume, const Index3& seed, float threshold) {
  const auto& e = volume.extents();
  require(seed[0] < e.d && seed[1] < e.h && seed[2] < e.w, ErrorCode::kInvalidArgument, "seed outside volume");
  require(volume.at(seed[0], seed[1], seed[2]) >= threshold, ErrorCode::kSeedBelowThreshold,
          "seed voxel value below threshold");

  std::vector<std::uint8_t> visited(e.voxels(), 0);
  auto flat = [&](std::size_t z, std::size_t y, std::size_t x) { return (z * e.h + y) * e.w + x; };
  Index3 lo = seed, hi = seed;
  std::deque<Index3> queue{seed};
  visited[flat(seed[0], seed[1], seed[2])] = 1;
  constexpr std::array<std::array<int, 3>, 6> kNeighbours{
      {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}}};
  const std::array<std::size_t, 3> limits{e.d, e.h, e.w};
  while (!queue.empty()) {
    const Index3 p = queue.front();
    queue.pop_front();
    for (std::size_t a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
    for (const auto& d : kNeighbours) {
      Index3 q = p;
      bool inside = true;
      for (std::size_t a = 0; a < 3; ++a) {
        if ((d[a] < 0 && p[a] == 0) || (d[a] > 0 && p[a] + 1 >= limits[a])) inside = false;
        q[a] = p[a] + d[a];
      }
      if (!inside) continue;
      const std::size_t idx = flat(q[0], q[1], q[2]);
      if (visited[idx] || volume.at(q[0], q[1], q[2]) < threshold) continue;
      visited[idx] = 1;
      queue.push_back(q);
    }
  }
  return Box3{lo, {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1}};
}

Vec3 proportional_location(const Vec3& centroid, const Extents3& dims) {
  Vec3 p{};
  for (std::size_t a = 0; a < 3; ++a) {
    const double d = static_cast<double>(dims[a]);
    require(d > 0.0, ErrorCode::kInvalidArgument, "patient dimensions must be positive");
    require(centroid[a] >= 0.0 && centroid[a] <= d, ErrorCode::kCentroidOutOfBounds,
            "centroid component " + std::to_string(centroid[a]) + " outside [0, " + std::to_string(dims[a]) + "]");
    p[a] = 2.0 * centroid[a] / d - 1.0;
  }
  return p;
}

Vec3 proportional_location(const PatientRecord& record) {
  require(record.ileum_centroid.has_value(), ErrorCode::kMissingCentroid, "record " + record.id + " has no centroid");
  Vec3 rel{};
  for (std::size_t a = 0; a < 3; ++a) rel[a] = (*record.ileum_centroid)[a] - static_cast<double>(record.patient_origin[a]);
  return proportional_location(rel, record.patient_dims);
}

Vec3 voxel_location(const Vec3& proportional, const std::array<std::size_t, 3>& origin, const Extents3& dims) {
  Vec3 v{};
  for (std::size_t a = 0; a < 3; ++a) {
    v[a] = static_cast<double>(origin[a]) + (proportional[a] + 1.0) * 0.5 * static_cast<double>(dims[a]);
  }
  return v;
}

PopulationDistribution PopulationDistribution::reference() {
  PopulationDistribution d;
  d.mu = {-0.192, -0.171, -0.111};
  d.sigma = {{{0.012, -0.005, -0.014}, {-0.005, 0.019, 0.017}, {-0.014, 0.017, 0.042}}};
  return d;
}

void PopulationDistribution::validate() const {
  Eigen::Matrix3d m;
  for (int i = 0; i < 3; ++i) {
    require(std::isfinite(mu[i]), ErrorCode::kConfig, "distribution mean must be finite");
    for (int j = 0; j < 3; ++j) {
      m(i, j) = sigma[i][j];
      require(std::abs(sigma[i][j] - sigma[j][i]) <= 1e-12, ErrorCode::kConfig, "covariance is not symmetric");
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(m, Eigen::EigenvaluesOnly);
  require(solver.eigenvalues().minCoeff() >= -1e-12, ErrorCode::kConfig, "covariance is not positive semi-definite");
}

nlohmann::json to_json(const PopulationDistribution& dist) {
  return {{"convention", "proportional [-1,1], axes [D,H,W]"}, {"mu", dist.mu}, {"sigma", dist.sigma}};
}

PopulationDistribution distribution_from_json(const nlohmann::json& j) {
  try {
    PopulationDistribution d;
    d.mu = j.at("mu").get<Vec3>();
    d.sigma = j.at("sigma").get<Mat3>();
    d.validate();
    return d;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed distribution: ") + e.what());
  }
}

PopulationDistribution fit_distribution(std::span<const Vec3> points) {
  require(points.size() >= 2, ErrorCode::kInsufficientSamples,
          "need at least 2 locations to fit a distribution, got " + std::to_string(points.size()));
  const double n = static_cast<double>(points.size());
  PopulationDistribution d;
  for (const auto& p : points) {
    for (std::size_t a = 0; a < 3; ++a) d.mu[a] += p[a];
  }
  for (auto& m : d.mu) m /= n;
  for (const auto& p : points) {
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) d.sigma[i][j] += (p[i] - d.mu[i]) * (p[j] - d.mu[j]);
    }
  }
  for (auto& row : d.sigma) {
    for (auto& v : row) v /= (n - 1.0);
  }
  return d;
}

std::array<Interval, 3> population_interval(const PopulationDistribution& dist, double k_sigma) {
  require(k_sigma > 0.0, ErrorCode::kInvalidArgument, "k_sigma must be positive");
  std::array<Interval, 3> out{};
  for (std::size_t a = 0; a < 3; ++a) {
    const double half = k_sigma * std::sqrt(std::max(dist.sigma[a][a], 0.0));
    out[a] = {dist.mu[a] - half, dist.mu[a] + half};
  }
  return out;
}

namespace {

// Grows [lo, hi) about its centre to at least `min_size`, then translates it
// inside [0, limit).
void fit_span(std::size_t& lo, std::size_t& hi, std::size_t min_size, std::size_t limit) {
  require(min_size <= limit, ErrorCode::kWindowLargerThanVolume,
          "window extent " + std::to_string(min_size) + " exceeds volume extent " + std::to_string(limit));
  if (hi - lo < min_size) {
    const double centre = 0.5 * static_cast<double>(lo + hi);
    const double start = std::round(centre - 0.5 * static_cast<double>(min_size));
    lo = static_cast<std::size_t>(std::clamp(start, 0.0, static_cast<double>(limit - min_size)));
    hi = lo + min_size;
  }
}

}  // namespace

Box3 population_box(const PopulationDistribution& dist, double k_sigma, const std::array<std::size_t, 3>& origin,
                    const Extents3& patient_dims, const Extents3& volume_extents, const Extents3& min_window) {
  const auto intervals = population_interval(dist, k_sigma);
  Box3 box;
  for (std::size_t a = 0; a < 3; ++a) {
    const double scale = 0.5 * static_cast<double>(patient_dims[a]);
    const double base = static_cast<double>(origin[a]);
    const double limit = static_cast<double>(volume_extents[a]);
    const double vlo = std::clamp(base + (intervals[a].lo + 1.0) * scale, 0.0, limit);
    const double vhi = std::clamp(base + (intervals[a].hi + 1.0) * scale, 0.0, limit);
    std::size_t lo = static_cast<std::size_t>(std::floor(vlo));
    std::size_t hi = static_cast<std::size_t>(std::ceil(vhi));
    lo = std::min(lo, volume_extents[a] - 1);
    hi = std::max(hi, lo + 1);
    fit_span(lo, hi, min_window[a], volume_extents[a]);
    box.lo[a] = lo;
    box.size[a] = hi - lo;
  }
  return box;
}

std::string_view to_string(RoiMode mode) noexcept { return mode == RoiMode::kGeneric ? "generic" : "localised"; }

RoiMode parse_roi_mode(std::string_view text) {
  if (text == "localised" || text == "localized") return RoiMode::kLocalised;
  if (text == "generic") return RoiMode::kGeneric;
  fail(ErrorCode::kConfig, "unknown ROI mode '" + std::string(text) + "'");
}

Box3 roi_box(const Extents3& volume_extents, const PatientRecord& record, const RoiSpec& spec,
             const PopulationDistribution* dist) {
  if (spec.mode == RoiMode::kLocalised) {
    require(record.ileum_centroid.has_value(), ErrorCode::kMissingCentroid,
            "localised extraction needs a centroid for record " + record.id);
    Box3 box;
    box.size = spec.window;
    for (std::size_t a = 0; a < 3; ++a) {
      require(spec.window[a] <= volume_extents[a], ErrorCode::kWindowLargerThanVolume,
              "window " + to_string(spec.window) + " larger than volume " + to_string(volume_extents));
      const double start = std::round((*record.ileum_centroid)[a] - 0.5 * static_cast<double>(spec.window[a]));
      box.lo[a] = static_cast<std::size_t>(
          std::clamp(start, 0.0, static_cast<double>(volume_extents[a] - spec.window[a])));
    }
    return box;
  }
  require(dist != nullptr, ErrorCode::kMissingDistribution, "generic extraction needs a population distribution");
  const Extents3 min_window{spec.min_extent, spec.min_extent, spec.min_extent};
  return population_box(*dist, spec.k_sigma, record.patient_origin, record.patient_dims, volume_extents, min_window);
}

Volume extract_roi(const Volume& volume, const PatientRecord& record, const RoiSpec& spec,
                   const PopulationDistribution* dist) {
  return volume.crop(roi_box(volume.extents(), record, spec, dist));
}

double volume_reduction(const Extents3& original, const Extents3& window) {
  for (std::size_t a = 0; a < 3; ++a) {
    require(window[a] <= original[a], ErrorCode::kWindowLargerThanVolume,
            "window " + to_string(window) + " larger than volume " + to_string(original));
  }
  return 100.0 * (1.0 - static_cast<double>(window.voxels()) / static_cast<double>(original.voxels()));
}

}  // namespace ileumnet
