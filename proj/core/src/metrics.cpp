#include "ileumnet/metrics.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <cmath>

namespace ileumnet {
namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassMetrics m;
  m.precision = ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
  m.recall = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  m.support = tp + fn;
  return m;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

void Confusion::add(BinaryLabel truth, BinaryLabel predicted) {
  const bool a = truth == BinaryLabel::kAbnormal, pa = predicted == BinaryLabel::kAbnormal;
  if (a && pa) ++tp_a;
  else if (a) ++fn_a;
  else if (pa) ++fp_a;
  else ++tn_h;
}

Confusion& Confusion::operator+=(const Confusion& o) {
  tp_a += o.tp_a;
  fn_a += o.fn_a;
  fp_a += o.fp_a;
  tn_h += o.tn_h;
  return *this;
}

Metrics compute_metrics(const Confusion& c) {
  Metrics m;
  m.abnormal = class_metrics(c.tp_a, c.fp_a, c.fn_a);
  m.healthy = class_metrics(c.tn_h, c.fn_a, c.fp_a);
  const double support = static_cast<double>(m.abnormal.support + m.healthy.support);
  m.weighted_f1 = ratio(static_cast<double>(m.abnormal.support) * m.abnormal.f1 +
                            static_cast<double>(m.healthy.support) * m.healthy.f1,
                        support);
  m.accuracy = ratio(static_cast<double>(c.tp_a + c.tn_h), support);
  return m;
}

std::array<std::optional<double>, 4> SeverityCounts::accuracy_percent() const {
  std::array<std::optional<double>, 4> out;
  for (std::size_t s = 0; s < 4; ++s) {
    if (total[s] > 0) out[s] = 100.0 * static_cast<double>(correct[s]) / static_cast<double>(total[s]);
  }
  return out;
}

SeverityCounts& SeverityCounts::operator+=(const SeverityCounts& o) {
  for (std::size_t s = 0; s < 4; ++s) {
    correct[s] += o.correct[s];
    total[s] += o.total[s];
  }
  return *this;
}

SeverityCounts per_severity_accuracy(std::span<const BinaryLabel> predicted, std::span<const PatientRecord> records) {
  require(predicted.size() == records.size(), ErrorCode::kShapeMismatch, "prediction and record counts differ");
  SeverityCounts out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto s = static_cast<std::size_t>(records[i].severity);
    require(s < 4, ErrorCode::kInvalidArgument, "severity out of range");
    ++out.total[s];
    if (predicted[i] == records[i].label()) ++out.correct[s];
  }
  return out;
}

DifficultyStats difficulty_analysis(std::span<const BinaryLabel> predicted, std::span<const PatientRecord> records) {
  require(predicted.size() == records.size(), ErrorCode::kShapeMismatch, "prediction and record counts differ");
  DifficultyStats out;
  double miss_sum = 0.0, all_sum = 0.0;
  std::size_t all_n = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.label() != BinaryLabel::kAbnormal || !r.difficulty) continue;
    all_sum += *r.difficulty;
    ++all_n;
    if (predicted[i] == BinaryLabel::kHealthy) {
      miss_sum += *r.difficulty;
      ++out.misclassified_abnormal;
    }
  }
  if (all_n > 0) out.abnormal_mean = all_sum / static_cast<double>(all_n);
  if (out.misclassified_abnormal > 0) {
    out.misclassified_abnormal_mean = miss_sum / static_cast<double>(out.misclassified_abnormal);
  }
  return out;
}

double clopper_pearson_lower(std::size_t k, std::size_t n, double alpha) {
  require(n >= 1 && k <= n, ErrorCode::kInvalidArgument, "need 0 <= k <= n and n >= 1");
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  if (k == 0) return 0.0;
  return boost::math::ibeta_inv(static_cast<double>(k), static_cast<double>(n - k + 1), alpha);
}

AccuracyBounds accuracy_upper_bound(std::size_t n, double alpha) {
  require(n >= 1, ErrorCode::kInvalidArgument, "test-set size must be positive");
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  AccuracyBounds b;
  b.hoeffding = 1.0 - std::sqrt(std::log(1.0 / alpha) / (2.0 * static_cast<double>(n)));
  b.clopper_pearson = clopper_pearson_lower(n, n, alpha);
  return b;
}

nlohmann::json to_json(const Confusion& c) {
  return {{"tp_a", c.tp_a}, {"fn_a", c.fn_a}, {"fp_a", c.fp_a}, {"tn_h", c.tn_h}};
}

nlohmann::json to_json(const Metrics& m) {
  auto cls = [](const ClassMetrics& c) {
    return nlohmann::json{{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
  };
  return {{"abnormal", cls(m.abnormal)},
          {"healthy", cls(m.healthy)},
          {"weighted_f1", m.weighted_f1},
          {"accuracy", m.accuracy}};
}

nlohmann::json to_json(const SeverityCounts& s) {
  static constexpr std::array<const char*, 4> kNames{"healthy", "mild", "moderate", "severe"};
  const auto pct = s.accuracy_percent();
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < 4; ++i) {
    j[kNames[i]] = {{"correct", s.correct[i]}, {"total", s.total[i]}, {"accuracy_percent", optional_json(pct[i])}};
  }
  return j;
}

nlohmann::json to_json(const DifficultyStats& d) {
  return {{"misclassified_abnormal_mean", optional_json(d.misclassified_abnormal_mean)},
          {"abnormal_mean", optional_json(d.abnormal_mean)},
          {"misclassified_abnormal", d.misclassified_abnormal}};
}

}  // namespace ileumnet
