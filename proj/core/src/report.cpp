#include "ileumnet/report.hpp"

#include <fstream>
#include <set>

namespace ileumnet {
namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& keys, const std::string& where) {
  require(j.is_object(), ErrorCode::kConfig, where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    require(keys.contains(key), ErrorCode::kConfig, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void overlay(const nlohmann::json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

template <std::size_t N>
nlohmann::json extents_json(const std::array<std::size_t, N>& a) {
  return nlohmann::json(a);
}

}  // namespace

nlohmann::json to_json(const FoldReport& r) {
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& p : r.predictions) {
    preds.push_back({{"id", p.id},
                     {"severity", p.severity},
                     {"predicted", p.predicted == BinaryLabel::kAbnormal ? "abnormal" : "healthy"},
                     {"loss", p.loss},
                     {"p_abnormal", p.p_abnormal}});
  }
  nlohmann::json j{{"fold", r.fold},
                   {"train_size", r.train_size},
                   {"test_size", r.test_size},
                   {"confusion", to_json(r.confusion)},
                   {"metrics", to_json(r.metrics)},
                   {"per_severity", to_json(r.severity)},
                   {"difficulty", to_json(r.difficulty)},
                   {"best_loss", r.best_loss},
                   {"best_epoch", r.best_epoch},
                   {"train_losses", r.train_losses},
                   {"test_losses", r.test_losses},
                   {"predictions", preds}};
  j["distribution"] = r.distribution ? to_json(*r.distribution) : nlohmann::json();
  return j;
}

nlohmann::json to_json(const RunReport& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) folds.push_back(to_json(f));
  return {{"format", "ileumnet-report"},
          {"version", 1},
          {"config", r.config},
          {"folds", folds},
          {"aggregate",
           {{"confusion", to_json(r.confusion)},
            {"metrics", to_json(r.metrics)},
            {"per_severity", to_json(r.severity)},
            {"difficulty", to_json(r.difficulty)}}}};
}

nlohmann::json to_json(const ResNetConfig& c) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : c.stages) stages.push_back({s.channels, s.blocks});
  return {{"stages", stages},
          {"input_window", extents_json(c.input_window)},
          {"in_channels", c.in_channels},
          {"num_classes", c.num_classes},
          {"dropout_rate", c.dropout_rate},
          {"padding", std::string(to_string(c.padding))},
          {"attention_enabled", c.attention_enabled},
          {"attention_weight", c.attention_weight}};
}

ResNetConfig resnet_config_from_json(const nlohmann::json& j, ResNetConfig c) {
  reject_unknown(j,
                 {"stages", "input_window", "in_channels", "num_classes", "dropout_rate", "padding",
                  "attention_enabled", "attention_weight"},
                 "model config");
  try {
    if (j.contains("stages")) {
      c.stages.clear();
      for (const auto& s : j["stages"]) {
        const auto pair = s.get<std::array<std::size_t, 2>>();
        c.stages.push_back({pair[0], pair[1]});
      }
    }
    overlay(j, "input_window", c.input_window);
    overlay(j, "in_channels", c.in_channels);
    overlay(j, "num_classes", c.num_classes);
    overlay(j, "dropout_rate", c.dropout_rate);
    if (j.contains("padding")) c.padding = parse_padding_mode(j["padding"].get<std::string>());
    overlay(j, "attention_enabled", c.attention_enabled);
    overlay(j, "attention_weight", c.attention_weight);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed model config: ") + e.what());
  }
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},
          {"seed", c.seed},
          {"folds", c.folds},
          {"roi", std::string(to_string(c.roi.mode))},
          {"roi_window", {c.roi.window.d, c.roi.window.h, c.roi.window.w}},
          {"k_sigma", c.roi.k_sigma},
          {"min_extent", c.roi.min_extent},
          {"augment", c.augment},
          {"max_rotation_deg", c.augmentation.max_rotation_deg},
          {"rotation_prob", c.augmentation.rotation_prob},
          {"flip_prob", c.augmentation.flip_prob},
          {"crop_fraction", c.augmentation.crop_fraction},
          {"crop_prob", c.augmentation.crop_prob}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  reject_unknown(j,
                 {"batch_size", "max_epochs", "lr", "beta1", "beta2", "eps", "seed", "folds", "roi", "roi_window",
                  "k_sigma", "min_extent", "augment", "max_rotation_deg", "rotation_prob", "flip_prob",
                  "crop_fraction", "crop_prob"},
                 "train config");
  try {
    overlay(j, "batch_size", c.batch_size);
    overlay(j, "max_epochs", c.max_epochs);
    overlay(j, "lr", c.adam.lr);
    overlay(j, "beta1", c.adam.beta1);
    overlay(j, "beta2", c.adam.beta2);
    overlay(j, "eps", c.adam.eps);
    overlay(j, "seed", c.seed);
    overlay(j, "folds", c.folds);
    if (j.contains("roi")) c.roi.mode = parse_roi_mode(j["roi"].get<std::string>());
    if (j.contains("roi_window")) {
      const auto w = j["roi_window"].get<std::array<std::size_t, 3>>();
      c.roi.window = {w[0], w[1], w[2]};
    }
    overlay(j, "k_sigma", c.roi.k_sigma);
    overlay(j, "min_extent", c.roi.min_extent);
    overlay(j, "augment", c.augment);
    overlay(j, "max_rotation_deg", c.augmentation.max_rotation_deg);
    overlay(j, "rotation_prob", c.augmentation.rotation_prob);
    overlay(j, "flip_prob", c.augmentation.flip_prob);
    overlay(j, "crop_fraction", c.augmentation.crop_fraction);
    overlay(j, "crop_prob", c.augmentation.crop_prob);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed train config: ") + e.what());
  }
  return c;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path);
  out << j.dump(2) << '\n';
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path);
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, path + ": " + e.what());
  }
}

}  // namespace ileumnet
