#include "ileumnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "ileumnet/ops.hpp"

namespace ileumnet {
namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kInitTag = 1, kOrderTag = 2, kAugmentTag = 3, kDropoutTag = 4;

struct Window {
  std::size_t record = 0;  // index into Dataset
  Volume volume;
};

struct SampleOutput {
  double loss = 0.0;
  std::array<double, 2> logits{};
};

RoiSpec effective_roi(const TrainConfig& config, const ResNetConfig& model) {
  RoiSpec roi = config.roi;
  if (roi.mode == RoiMode::kLocalised) roi.window = {model.input_window[0], model.input_window[1], model.input_window[2]};
  roi.min_extent = std::max(roi.min_extent, model.min_input_extent());
  return roi;
}

std::vector<Window> extract_windows(const Dataset& data, const std::vector<std::string>& ids, const RoiSpec& roi,
                                    const std::optional<PopulationDistribution>& dist) {
  std::vector<Window> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const std::size_t i = data.index_of(id);
    out.push_back({i, extract_roi(data.volumes[i], data.records[i], roi, dist ? &*dist : nullptr)});
  }
  return out;
}

// One forward (and optionally backward) pass. Gradients are added to `grads`
// when it is non-null.
SampleOutput run_sample(const ParameterSet<float>& params, const Volume& window, std::size_t label,
                        const ResNetConfig& model, bool training, Rng& rng, std::vector<Tensor<float>>* grads) {
  Tape<float> tape;
  const auto vars = bind_params(tape, params, grads != nullptr);
  const Var input = tape.constant(window.to_tensor<float>());
  const auto pred = forward(tape, vars, input, model, training, rng);
  const Var loss = ops::softmax_cross_entropy(tape, pred.logits_combined, label);
  SampleOutput out;
  out.loss = tape.value(loss)[0];
  const auto& logits = tape.value(pred.logits_combined);
  out.logits = {logits[0], logits[1]};
  if (grads != nullptr) {
    tape.backward(loss);
    for (std::size_t p = 0; p < vars.size(); ++p) {
      if (tape.has_grad(vars[p])) (*grads)[p].add_(tape.grad(vars[p]));
    }
  }
  return out;
}

std::vector<Tensor<float>> zero_grads(const ParameterSet<float>& params) {
  std::vector<Tensor<float>> g;
  g.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) g.push_back(Tensor<float>::zeros_like(params[i]));
  return g;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
// handled by exactly one worker; callers write to per-index slots only.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

[[noreturn]] void non_finite(const std::string& where, const std::string& what) {
  fail(ErrorCode::kNonFiniteLoss, "non-finite value " + where + ": " + what);
}

struct Evaluation {
  double mean_loss = 0.0;
  std::vector<SamplePrediction> predictions;
};

Evaluation evaluate(const Dataset& data, const std::vector<Window>& windows, const ParameterSet<float>& params,
                    const ResNetConfig& model, std::size_t threads) {
  std::vector<SampleOutput> outputs(windows.size());
  parallel_for(windows.size(), threads, [&](std::size_t i) {
    Rng unused(0);
    outputs[i] = run_sample(params, windows[i].volume, data.records[windows[i].record].class_index(), model, false,
                            unused, nullptr);
  });
  Evaluation ev;
  double total = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& r = data.records[windows[i].record];
    const auto& o = outputs[i];
    SamplePrediction p;
    p.id = r.id;
    p.severity = r.severity;
    p.predicted = o.logits[1] > o.logits[0] ? BinaryLabel::kAbnormal : BinaryLabel::kHealthy;
    p.loss = o.loss;
    const double m = std::max(o.logits[0], o.logits[1]);
    const double e0 = std::exp(o.logits[0] - m), e1 = std::exp(o.logits[1] - m);
    p.p_abnormal = e1 / (e0 + e1);
    total += o.loss;
    ev.predictions.push_back(std::move(p));
  }
  ev.mean_loss = windows.empty() ? 0.0 : total / static_cast<double>(windows.size());
  return ev;
}

void fill_metrics(FoldReport& report, const Dataset& data) {
  std::vector<PatientRecord> records;
  std::vector<BinaryLabel> predicted;
  for (const auto& p : report.predictions) {
    const auto& r = data.records[data.index_of(p.id)];
    records.push_back(r);
    predicted.push_back(p.predicted);
    report.confusion.add(r.label(), p.predicted);
  }
  report.metrics = compute_metrics(report.confusion);
  report.severity = per_severity_accuracy(predicted, records);
  report.difficulty = difficulty_analysis(predicted, records);
}

}  // namespace

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.batch_size = 64;
  c.max_epochs = 100;
  c.adam.lr = 5e-6;
  return c;
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.batch_size = 8;
  c.max_epochs = 8;
  c.adam.lr = 2e-4;
  return c;
}

void TrainConfig::validate() const {
  require(batch_size >= 1, ErrorCode::kConfig, "batch_size must be at least 1");
  require(max_epochs >= 1, ErrorCode::kConfig, "max_epochs must be at least 1");
  require(folds >= 1, ErrorCode::kConfig, "folds must be at least 1");
  require(adam.lr >= 0.0 && std::isfinite(adam.lr), ErrorCode::kConfig, "learning rate must be finite and >= 0");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0, ErrorCode::kConfig,
          "Adam betas must lie in [0, 1)");
  require(adam.eps > 0.0, ErrorCode::kConfig, "Adam eps must be positive");
  require(roi.k_sigma > 0.0, ErrorCode::kConfig, "k_sigma must be positive");
}

std::size_t resolve_threads(std::size_t requested) {
  std::size_t n = requested;
  if (n == 0) n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ILEUMNET_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    require(end != env && *end == '\0' && cap >= 1, ErrorCode::kConfig,
            std::string("ILEUMNET_THREADS must be a positive integer, got '") + env + "'");
    n = std::min<std::size_t>(n, cap);
  }
  return n;
}

std::size_t Dataset::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].id == id) return i;
  }
  fail(ErrorCode::kInvalidArgument, "unknown record id " + id);
}

Dataset load_dataset(const Manifest& manifest) {
  Dataset d;
  d.records = manifest.records;
  d.volumes.reserve(d.records.size());
  for (const auto& r : d.records) d.volumes.push_back(read_volume(manifest.resolve(r)));
  return d;
}

std::optional<PopulationDistribution> fold_distribution(const Dataset& data, const Fold& fold, const RoiSpec& roi,
                                                        const PopulationDistribution* fixed) {
  if (roi.mode != RoiMode::kGeneric) return std::nullopt;
  if (fixed != nullptr) return *fixed;
  std::vector<Vec3> points;
  for (const auto& id : fold.train_ids) points.push_back(proportional_location(data.records[data.index_of(id)]));
  return fit_distribution(points);
}

FoldReport evaluate_fold(const Dataset& data, const Fold& fold, std::size_t fold_index, const TrainConfig& config,
                         const ResNetConfig& model, const ParameterSet<float>& params,
                         const PopulationDistribution* fixed_dist) {
  const RoiSpec roi = effective_roi(config, model);
  const auto dist = fold_distribution(data, fold, roi, fixed_dist);
  const auto windows = extract_windows(data, fold.test_ids, roi, dist);
  auto ev = evaluate(data, windows, params, model, resolve_threads(config.threads));
  FoldReport report;
  report.fold = fold_index;
  report.train_size = fold.train_ids.size();
  report.test_size = fold.test_ids.size();
  report.best_loss = ev.mean_loss;
  report.predictions = std::move(ev.predictions);
  report.distribution = dist;
  fill_metrics(report, data);
  return report;
}

FoldOutcome train_fold(const Dataset& data, const Fold& fold, std::size_t fold_index, const TrainConfig& config,
                       const ResNetConfig& model, const PopulationDistribution* fixed_dist,
                       const EpochCallback& on_epoch) {
  config.validate();
  model.validate();
  require(!fold.train_ids.empty(), ErrorCode::kInvalidArgument, "fold " + std::to_string(fold_index) + " has no training records");
  const std::size_t threads = resolve_threads(config.threads);
  const RoiSpec roi = effective_roi(config, model);
  const auto dist = fold_distribution(data, fold, roi, fixed_dist);
  const auto train = extract_windows(data, fold.train_ids, roi, dist);
  const auto test = extract_windows(data, fold.test_ids, roi, dist);

  Rng init_rng(derive_seed(config.seed, {kInitTag, fold_index}));
  ParameterSet<float> params = init_params<float>(model, init_rng);
  AdamState<float> adam(params, config.adam);

  FoldOutcome best;
  best.report.best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> train_losses, test_losses;
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng order_rng(derive_seed(config.seed, {kOrderTag, fold_index, epoch}));
    std::shuffle(order.begin(), order.end(), order_rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      // Per-sample gradients land in their own slot, then reduce in batch
      // order so the sum does not depend on the worker count.
      std::vector<std::vector<Tensor<float>>> slots(threads > 1 ? n : 0);
      std::vector<double> losses(n);
      std::vector<Tensor<float>> grads = zero_grads(params);
      auto sample = [&](std::size_t b, std::vector<Tensor<float>>* sink) {
        const Window& w = train[order[start + b]];
        const std::uint64_t rec = w.record;
        Rng aug_rng(derive_seed(config.seed, {kAugmentTag, fold_index, epoch, rec}));
        Rng drop_rng(derive_seed(config.seed, {kDropoutTag, fold_index, epoch, rec}));
        const Volume input = config.augment ? augment(w.volume, aug_rng, config.augmentation) : w.volume;
        try {
          losses[b] = run_sample(params, input, data.records[w.record].class_index(), model, true, drop_rng, sink).loss;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kNonFinite) throw;
          non_finite("in fold " + std::to_string(fold_index) + " epoch " + std::to_string(epoch) + " sample " +
                         data.records[w.record].id,
                     e.what());
        }
      };
      if (threads > 1) {
        parallel_for(n, threads, [&](std::size_t b) {
          slots[b] = zero_grads(params);
          sample(b, &slots[b]);
        });
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t p = 0; p < grads.size(); ++p) grads[p].add_(slots[b][p]);
        }
      } else {
        for (std::size_t b = 0; b < n; ++b) sample(b, &grads);
      }
      for (std::size_t b = 0; b < n; ++b) epoch_loss += losses[b];
      const float inv = 1.0f / static_cast<float>(n);
      for (auto& g : grads) g.scale_(inv);
      adam_step(params, grads, adam);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss)) non_finite("in fold " + std::to_string(fold_index), "training loss");

    auto ev = evaluate(data, test, params, model, threads);
    if (!std::isfinite(ev.mean_loss)) non_finite("in fold " + std::to_string(fold_index), "test loss");
    train_losses.push_back(epoch_loss);
    test_losses.push_back(ev.mean_loss);
    std::size_t correct = 0;
    for (const auto& p : ev.predictions) {
      if (p.predicted == data.records[data.index_of(p.id)].label()) ++correct;
    }
    const double accuracy = ev.predictions.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(ev.predictions.size());
    if (on_epoch) on_epoch({fold_index, epoch, epoch_loss, ev.mean_loss, accuracy});

    if (ev.mean_loss < best.report.best_loss) {
      best.report.best_loss = ev.mean_loss;
      best.report.best_epoch = epoch;
      best.report.predictions = std::move(ev.predictions);
      best.params = params;
    }
  }

  FoldReport& r = best.report;
  r.fold = fold_index;
  r.train_size = fold.train_ids.size();
  r.test_size = fold.test_ids.size();
  r.train_losses = std::move(train_losses);
  r.test_losses = std::move(test_losses);
  r.distribution = dist;
  fill_metrics(r, data);
  return best;
}

RunReport aggregate(nlohmann::json config, std::vector<FoldReport> folds, std::span<const PatientRecord> records) {
  RunReport run;
  run.config = std::move(config);
  std::unordered_map<std::string, const PatientRecord*> by_id;
  for (const auto& r : records) by_id[r.id] = &r;
  std::vector<PatientRecord> tested;
  std::vector<BinaryLabel> predicted;
  for (const auto& f : folds) {
    run.confusion += f.confusion;
    for (const auto& p : f.predictions) {
      const auto it = by_id.find(p.id);
      require(it != by_id.end(), ErrorCode::kInvalidArgument, "prediction for unknown record " + p.id);
      tested.push_back(*it->second);
      predicted.push_back(p.predicted);
    }
  }
  run.metrics = compute_metrics(run.confusion);
  run.severity = per_severity_accuracy(predicted, tested);
  run.difficulty = difficulty_analysis(predicted, tested);
  run.folds = std::move(folds);
  return run;
}

CrossValidationResult cross_validate(const Dataset& data, const TrainConfig& config, const ResNetConfig& model,
                                     const nlohmann::json& config_echo, const PopulationDistribution* fixed_dist,
                                     const EpochCallback& on_epoch) {
  const FoldPlan plan = make_folds(data.records, config.folds, config.seed);
  CrossValidationResult result;
  std::vector<FoldReport> reports;
  for (std::size_t k = 0; k < plan.folds.size(); ++k) {
    auto outcome = train_fold(data, plan.folds[k], k, config, model, fixed_dist, on_epoch);
    reports.push_back(std::move(outcome.report));
    result.checkpoints.push_back(std::move(outcome.params));
  }
  result.report = aggregate(config_echo, std::move(reports), data.records);
  return result;
}

}  // namespace ileumnet
