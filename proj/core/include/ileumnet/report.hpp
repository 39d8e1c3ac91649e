#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "ileumnet/trainer.hpp"

namespace ileumnet {

// Reports carry no timings, so identical runs serialise identically.
nlohmann::json to_json(const FoldReport& report);
nlohmann::json to_json(const RunReport& report);

nlohmann::json to_json(const ResNetConfig& config);
nlohmann::json to_json(const TrainConfig& config);

// Overlays the keys present in `j` onto `base`. Unknown keys throw kConfig.
ResNetConfig resnet_config_from_json(const nlohmann::json& j, ResNetConfig base);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base);

// Pretty-printed with a trailing newline.
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace ileumnet
