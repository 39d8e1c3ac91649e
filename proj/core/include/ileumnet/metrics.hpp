#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "ileumnet/records.hpp"

namespace ileumnet {

/// Binary confusion counts with abnormal as the positive class.
struct Confusion {
  std::size_t tp_a = 0;  // abnormal predicted abnormal
  std::size_t fn_a = 0;  // abnormal predicted healthy
  std::size_t fp_a = 0;  // healthy predicted abnormal
  std::size_t tn_h = 0;  // healthy predicted healthy

  std::size_t total() const noexcept { return tp_a + fn_a + fp_a + tn_h; }
  void add(BinaryLabel truth, BinaryLabel predicted);
  Confusion& operator+=(const Confusion& o);
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct Metrics {
  ClassMetrics abnormal;
  ClassMetrics healthy;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
};

// Ratios with a zero denominator are 0.
Metrics compute_metrics(const Confusion& c);

/// Correct and total counts per severity 0..3.
struct SeverityCounts {
  std::array<std::size_t, 4> correct{};
  std::array<std::size_t, 4> total{};

  // Percentage per severity; absent for a class with no members.
  std::array<std::optional<double>, 4> accuracy_percent() const;
  SeverityCounts& operator+=(const SeverityCounts& o);
};

// predicted[i] is the predicted label of records[i].
SeverityCounts per_severity_accuracy(std::span<const BinaryLabel> predicted, std::span<const PatientRecord> records);

struct DifficultyStats {
  // Mean over abnormal records that were predicted healthy.
  std::optional<double> misclassified_abnormal_mean;
  // Mean over every abnormal record with a difficulty.
  std::optional<double> abnormal_mean;
  std::size_t misclassified_abnormal = 0;
};

DifficultyStats difficulty_analysis(std::span<const BinaryLabel> predicted, std::span<const PatientRecord> records);

struct AccuracyBounds {
  double hoeffding = 0.0;
  // Exact binomial lower confidence limit at a perfect score (k = n).
  double clopper_pearson = 0.0;
};

/// Best test accuracy distinguishable from perfect at significance alpha.
AccuracyBounds accuracy_upper_bound(std::size_t n, double alpha);

// One-sided Clopper-Pearson lower limit for k successes out of n.
double clopper_pearson_lower(std::size_t k, std::size_t n, double alpha);

nlohmann::json to_json(const Confusion& c);
nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const SeverityCounts& s);
nlohmann::json to_json(const DifficultyStats& d);

}  // namespace ileumnet
