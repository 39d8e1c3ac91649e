#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "ileumnet/records.hpp"
#include "ileumnet/volume.hpp"

namespace ileumnet {

using Index3 = std::array<std::size_t, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

/// 6-connected flood fill over voxels >= threshold starting at `seed`;
/// returns the tight bounding box of the grown region.
Box3 region_grow_extent(const Volume& volume, const Index3& seed, float threshold);

/// Maps a centroid (relative to the patient box origin) into [-1, 1]^3 with
/// the box centre at 0: p = 2 i / d - 1.
Vec3 proportional_location(const Vec3& centroid, const Extents3& dims);
Vec3 proportional_location(const PatientRecord& record);

// Inverse of proportional_location, in absolute voxel coordinates.
Vec3 voxel_location(const Vec3& proportional, const std::array<std::size_t, 3>& origin, const Extents3& dims);

/// Gaussian over proportional ileal locations.
struct PopulationDistribution {
  Vec3 mu{0.0, 0.0, 0.0};
  Mat3 sigma{};

  // Fitted values reported for the clinical cohort (normalised to [-1, 1]).
  static PopulationDistribution reference();

  // Throws kConfig unless sigma is symmetric (1e-12) and PSD.
  void validate() const;
};

nlohmann::json to_json(const PopulationDistribution& dist);
PopulationDistribution distribution_from_json(const nlohmann::json& j);

/// Sample mean and unbiased (N - 1) sample covariance.
PopulationDistribution fit_distribution(std::span<const Vec3> points);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Per-axis mu +- k_sigma * sqrt(sigma_aa) in proportional coordinates.
std::array<Interval, 3> population_interval(const PopulationDistribution& dist, double k_sigma);

/// Voxel box expected to contain the ileum, clamped to the volume and grown
/// (about its centre) to at least `min_window` per axis.
Box3 population_box(const PopulationDistribution& dist, double k_sigma, const std::array<std::size_t, 3>& origin,
                    const Extents3& patient_dims, const Extents3& volume_extents, const Extents3& min_window);

enum class RoiMode { kLocalised, kGeneric };

std::string_view to_string(RoiMode mode) noexcept;
RoiMode parse_roi_mode(std::string_view text);

struct RoiSpec {
  RoiMode mode = RoiMode::kLocalised;
  Extents3 window{31, 87, 87};
  double k_sigma = 3.0;
  // Smallest legal extent per axis of any extracted region.
  std::size_t min_extent = 8;
};

/// Localised: fixed window centred on the ileum centroid, translated (never
/// shrunk) to stay inside the volume. Generic: population_box crop.
Box3 roi_box(const Extents3& volume_extents, const PatientRecord& record, const RoiSpec& spec,
             const PopulationDistribution* dist);
Volume extract_roi(const Volume& volume, const PatientRecord& record, const RoiSpec& spec,
                   const PopulationDistribution* dist);

/// 100 * (1 - |window| / |original|).
double volume_reduction(const Extents3& original, const Extents3& window);

}  // namespace ileumnet
