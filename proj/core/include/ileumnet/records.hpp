#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ileumnet/volume.hpp"

namespace ileumnet {

enum class BinaryLabel { kHealthy = 0, kAbnormal = 1 };

/// One patient. Coordinates are continuous voxel coordinates in [D, H, W]
/// order where voxel i covers [i, i + 1).
struct PatientRecord {
  std::string id;
  int severity = 0;  // 0 healthy, 1 mild, 2 moderate, 3 severe
  std::optional<double> difficulty;
  std::optional<Vec3> ileum_centroid;
  // Patient bounding box (from region growing); the centroid lies inside it.
  std::array<std::size_t, 3> patient_origin{0, 0, 0};
  Extents3 patient_dims;
  std::string volume_path;

  BinaryLabel label() const noexcept { return severity == 0 ? BinaryLabel::kHealthy : BinaryLabel::kAbnormal; }
  std::size_t class_index() const noexcept { return static_cast<std::size_t>(label()); }
  void validate() const;
};

nlohmann::json to_json(const PatientRecord& record);
PatientRecord record_from_json(const nlohmann::json& j);

struct Manifest {
  std::vector<PatientRecord> records;
  // Directory relative volume paths resolve against.
  std::string base_dir;

  std::string resolve(const PatientRecord& record) const;
};

/// {"format": "ileumnet-manifest", "version": 1, "records": [...]}
void write_manifest(const std::string& path, const Manifest& manifest);
Manifest read_manifest(const std::string& path);

}  // namespace ileumnet
