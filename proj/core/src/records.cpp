#include "ileumnet/records.hpp"

#include <filesystem>
#include <fstream>

namespace ileumnet {

void PatientRecord::validate() const {
  require(!id.empty(), ErrorCode::kConfig, "record without id");
  require(severity >= 0 && severity <= 3, ErrorCode::kConfig, "record " + id + ": severity must be 0..3");
  require(patient_dims.voxels() > 0, ErrorCode::kConfig, "record " + id + ": empty patient dimensions");
  if (difficulty) require(*difficulty > 0.0, ErrorCode::kConfig, "record " + id + ": difficulty must be positive");
  if (ileum_centroid) {
    for (std::size_t a = 0; a < 3; ++a) {
      const double rel = (*ileum_centroid)[a] - static_cast<double>(patient_origin[a]);
      require(rel >= 0.0 && rel <= static_cast<double>(patient_dims[a]), ErrorCode::kCentroidOutOfBounds,
              "record " + id + ": centroid outside patient dimensions");
    }
  }
}

nlohmann::json to_json(const PatientRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["severity"] = r.severity;
  j["label"] = r.label() == BinaryLabel::kHealthy ? "healthy" : "abnormal";
  j["difficulty"] = r.difficulty ? nlohmann::json(*r.difficulty) : nlohmann::json(nullptr);
  j["ileum_centroid"] = r.ileum_centroid ? nlohmann::json(*r.ileum_centroid) : nlohmann::json(nullptr);
  j["patient_origin"] = r.patient_origin;
  j["patient_dims"] = {r.patient_dims.d, r.patient_dims.h, r.patient_dims.w};
  j["volume_path"] = r.volume_path;
  return j;
}

PatientRecord record_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> kKeys = {"id",           "severity",       "label",        "difficulty",
                                                 "ileum_centroid", "patient_origin", "patient_dims", "volume_path"};
  try {
    for (const auto& [key, _] : j.items()) {
      require(std::find(kKeys.begin(), kKeys.end(), key) != kKeys.end(), ErrorCode::kConfig,
              "unknown record key '" + key + "'");
    }
    PatientRecord r;
    r.id = j.at("id").get<std::string>();
    r.severity = j.at("severity").get<int>();
    if (j.contains("difficulty") && !j["difficulty"].is_null()) r.difficulty = j["difficulty"].get<double>();
    if (j.contains("ileum_centroid") && !j["ileum_centroid"].is_null()) {
      r.ileum_centroid = j["ileum_centroid"].get<Vec3>();
    }
    if (j.contains("patient_origin")) r.patient_origin = j["patient_origin"].get<std::array<std::size_t, 3>>();
    const auto dims = j.at("patient_dims").get<std::array<std::size_t, 3>>();
    r.patient_dims = {dims[0], dims[1], dims[2]};
    r.volume_path = j.value("volume_path", std::string());
    if (j.contains("label")) {
      const auto label = j["label"].get<std::string>();
      require(label == (r.severity == 0 ? "healthy" : "abnormal"), ErrorCode::kConfig,
              "record " + r.id + ": label disagrees with severity");
    }
    r.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed record: ") + e.what());
  }
}

std::string Manifest::resolve(const PatientRecord& record) const {
  const std::filesystem::path p(record.volume_path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (std::filesystem::path(base_dir) / p).string();
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  nlohmann::json j;
  j["format"] = "ileumnet-manifest";
  j["version"] = 1;
  j["records"] = nlohmann::json::array();
  for (const auto& r : manifest.records) j["records"].push_back(to_json(r));
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write manifest: " + path);
  out << j.dump(2) << '\n';
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, "manifest " + path + " is not valid JSON: " + e.what());
  }
  require(j.value("format", std::string()) == "ileumnet-manifest" && j.value("version", 0) == 1, ErrorCode::kConfig,
          "unsupported manifest format in " + path);
  Manifest m;
  m.base_dir = std::filesystem::path(path).parent_path().string();
  for (const auto& r : j.at("records")) m.records.push_back(record_from_json(r));
  return m;
}

}  // namespace ileumnet
