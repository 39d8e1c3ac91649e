#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ileumnet/augment.hpp"
#include "ileumnet/folds.hpp"
#include "ileumnet/localization.hpp"
#include "ileumnet/metrics.hpp"
#include "ileumnet/model.hpp"
#include "ileumnet/optim.hpp"

namespace ileumnet {

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t max_epochs = 20;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t folds = 4;
  RoiSpec roi;
  bool augment = true;
  AugmentConfig augmentation;
  // 0 selects ILEUMNET_THREADS, else the hardware concurrency.
  std::size_t threads = 0;

  // Paper optimiser and batch size.
  static TrainConfig paper();
  // Desk-scale schedule for the reduced-channel model.
  static TrainConfig desk();

  void validate() const;
};

// Worker count after applying the ILEUMNET_THREADS cap.
std::size_t resolve_threads(std::size_t requested);

/// Manifest records with their volumes, index-aligned.
struct Dataset {
  std::vector<PatientRecord> records;
  std::vector<Volume> volumes;

  std::size_t index_of(const std::string& id) const;
};

Dataset load_dataset(const Manifest& manifest);

struct SamplePrediction {
  std::string id;
  int severity = 0;
  BinaryLabel predicted = BinaryLabel::kHealthy;
  double loss = 0.0;
  double p_abnormal = 0.0;
};

struct FoldReport {
  std::size_t fold = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  Confusion confusion;
  Metrics metrics;
  SeverityCounts severity;
  DifficultyStats difficulty;
  // Test loss at the selected checkpoint and the epoch (1-based) it came from.
  double best_loss = 0.0;
  std::size_t best_epoch = 0;
  std::vector<double> train_losses;
  std::vector<double> test_losses;
  std::vector<SamplePrediction> predictions;
  // Distribution used for Generic extraction, when one was needed.
  std::optional<PopulationDistribution> distribution;
};

struct FoldOutcome {
  FoldReport report;
  ParameterSet<float> params;  // the selected (min test loss) checkpoint
};

struct EpochLog {
  std::size_t fold = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
};
using EpochCallback = std::function<void(const EpochLog&)>;

/// Population distribution for a fold: `fixed` when given, otherwise fitted
/// on the training records. Only Generic extraction needs one.
std::optional<PopulationDistribution> fold_distribution(const Dataset& data, const Fold& fold, const RoiSpec& roi,
                                                        const PopulationDistribution* fixed);

/// Trains from a fresh initialisation and evaluates the test ids at the epoch
/// with the lowest mean test loss. Aborts with kNonFiniteLoss.
FoldOutcome train_fold(const Dataset& data, const Fold& fold, std::size_t fold_index, const TrainConfig& config,
                       const ResNetConfig& model, const PopulationDistribution* fixed_dist = nullptr,
                       const EpochCallback& on_epoch = {});

/// Evaluates `params` on the fold's test ids with dropout disabled.
FoldReport evaluate_fold(const Dataset& data, const Fold& fold, std::size_t fold_index, const TrainConfig& config,
                         const ResNetConfig& model, const ParameterSet<float>& params,
                         const PopulationDistribution* fixed_dist = nullptr);

struct RunReport {
  nlohmann::json config;
  std::vector<FoldReport> folds;
  // Sums over folds, i.e. combined predictions over the whole dataset.
  Confusion confusion;
  Metrics metrics;
  SeverityCounts severity;
  DifficultyStats difficulty;
};

RunReport aggregate(nlohmann::json config, std::vector<FoldReport> folds, std::span<const PatientRecord> records);

struct CrossValidationResult {
  RunReport report;
  std::vector<ParameterSet<float>> checkpoints;
};

CrossValidationResult cross_validate(const Dataset& data, const TrainConfig& config, const ResNetConfig& model,
                                     const nlohmann::json& config_echo,
                                     const PopulationDistribution* fixed_dist = nullptr,
                                     const EpochCallback& on_epoch = {});

}  // namespace ileumnet
