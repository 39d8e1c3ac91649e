#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>

#include "ileumnet/localization.hpp"
#include "ileumnet/metrics.hpp"
#include "ileumnet/model.hpp"
#include "ileumnet/pgm.hpp"
#include "ileumnet/phantom.hpp"
#include "ileumnet/report.hpp"
#include "ileumnet/trainer.hpp"

namespace ileumnet::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flag values; unset optionals fall back to the config file, then defaults.
struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> manifest;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> roi;
  std::optional<std::string> attention;
  std::optional<std::string> preset;
  std::optional<std::size_t> folds;
  std::optional<double> alpha;
  std::optional<std::size_t> n;
  std::optional<std::string> dist;
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::vector<std::size_t> counts;
  std::vector<std::size_t> extents;
  std::optional<std::string> run_dir;
  std::optional<std::string> id;
  std::optional<std::size_t> fold;
};

/// Fully resolved settings for one invocation.
struct RunConfig {
  std::string command;
  std::string preset = "desk";
  std::uint64_t seed = 0;
  std::string manifest;
  std::string out;
  std::string dist;  // empty: reference constants (synth) or fitted (generic ROI)
  ResNetConfig model = ResNetConfig::desk();
  TrainConfig train = TrainConfig::desk();
  double alpha = 0.05;
  std::size_t n = 170;
  std::array<std::size_t, 4> counts{100, 34, 29, 7};
  Extents3 extents = PhantomConfig{}.extents;
  std::string run_dir;
  std::string id;
  std::optional<std::size_t> fold;
};

const std::set<std::string> kTopLevelKeys = {"preset", "seed",   "manifest", "out",  "dist", "roi", "attention",
                                             "folds",  "alpha",  "n",        "counts", "extents", "model", "train",
                                             "run",    "id",     "fold"};

template <typename T>
T pick(const std::optional<T>& flag, const json& file, const char* key, T fallback) {
  if (flag) return *flag;
  if (file.contains(key)) {
    try {
      return file.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorCode::kConfig, std::string("config key '") + key + "': " + e.what());
    }
  }
  return fallback;
}

bool parse_on_off(const std::string& v) {
  if (v == "on" || v == "true") return true;
  if (v == "off" || v == "false") return false;
  fail(ErrorCode::kConfig, "attention must be on or off, got '" + v + "'");
}

RunConfig resolve(const std::string& command, const Flags& f) {
  json file = json::object();
  if (f.config) {
    file = read_json(*f.config);
    require(file.is_object(), ErrorCode::kConfig, "config file must hold a JSON object");
    for (const auto& [key, _] : file.items()) {
      require(kTopLevelKeys.contains(key), ErrorCode::kConfig, "unknown config key '" + key + "'");
    }
  }
  RunConfig c;
  c.command = command;
  c.preset = pick<std::string>(f.preset, file, "preset", "desk");
  if (c.preset == "paper") {
    c.model = ResNetConfig::paper();
    c.train = TrainConfig::paper();
  } else {
    require(c.preset == "desk", ErrorCode::kConfig, "unknown preset '" + c.preset + "'");
  }
  if (file.contains("model")) c.model = resnet_config_from_json(file["model"], c.model);
  if (file.contains("train")) c.train = train_config_from_json(file["train"], c.train);

  c.seed = pick<std::uint64_t>(f.seed, file, "seed", c.train.seed);
  c.manifest = pick<std::string>(f.manifest, file, "manifest", "");
  c.out = pick<std::string>(f.out, file, "out", "");
  c.dist = pick<std::string>(f.dist, file, "dist", "");
  c.alpha = pick<double>(f.alpha, file, "alpha", c.alpha);
  c.n = pick<std::size_t>(f.n, file, "n", c.n);
  c.run_dir = pick<std::string>(f.run_dir, file, "run", "");
  c.id = pick<std::string>(f.id, file, "id", "");
  if (f.fold) c.fold = f.fold;
  else if (file.contains("fold")) c.fold = file["fold"].get<std::size_t>();

  const std::string roi = pick<std::string>(f.roi, file, "roi", std::string(to_string(c.train.roi.mode)));
  c.train.roi.mode = parse_roi_mode(roi);
  const std::string attention =
      pick<std::string>(f.attention, file, "attention", c.model.attention_enabled ? "on" : "off");
  c.model.attention_enabled = parse_on_off(attention);
  c.train.folds = pick<std::size_t>(f.folds, file, "folds", c.train.folds);
  if (f.lr) c.train.adam.lr = *f.lr;
  if (f.epochs) c.train.max_epochs = *f.epochs;
  if (f.batch_size) c.train.batch_size = *f.batch_size;
  c.train.seed = c.seed;
  c.train.roi.window = {c.model.input_window[0], c.model.input_window[1], c.model.input_window[2]};

  std::vector<std::size_t> counts = f.counts;
  if (counts.empty() && file.contains("counts")) counts = file["counts"].get<std::vector<std::size_t>>();
  if (!counts.empty()) {
    require(counts.size() == 4, ErrorCode::kConfig, "counts needs four values (healthy, mild, moderate, severe)");
    std::copy(counts.begin(), counts.end(), c.counts.begin());
  }
  std::vector<std::size_t> extents = f.extents;
  if (extents.empty() && file.contains("extents")) extents = file["extents"].get<std::vector<std::size_t>>();
  if (!extents.empty()) {
    require(extents.size() == 3, ErrorCode::kConfig, "extents needs three values (D, H, W)");
    c.extents = {extents[0], extents[1], extents[2]};
  }
  c.model.validate();
  c.train.validate();
  return c;
}

// Config echo written into outputs. Output paths are left out so identical
// runs into different directories produce identical reports.
json echo(const RunConfig& c) {
  json j{{"command", c.command}, {"preset", c.preset}, {"seed", c.seed}};
  if (!c.manifest.empty()) j["manifest"] = c.manifest;
  j["dist"] = c.dist.empty() ? json() : json(c.dist);
  if (c.command == "synth") {
    j["counts"] = c.counts;
    j["extents"] = {c.extents.d, c.extents.h, c.extents.w};
  } else if (c.command == "bound") {
    j["n"] = c.n;
    j["alpha"] = c.alpha;
  } else if (c.command != "fit-dist") {
    j["model"] = to_json(c.model);
    j["train"] = to_json(c.train);
  }
  return j;
}

std::optional<PopulationDistribution> load_dist(const RunConfig& c) {
  if (c.dist.empty()) return std::nullopt;
  return distribution_from_json(read_json(c.dist));
}

void need(const std::string& value, const char* flag) {
  require(!value.empty(), ErrorCode::kConfig, std::string(flag) + " is required");
}

int cmd_synth(const RunConfig& c, std::ostream& out) {
  need(c.out, "--out");
  const auto dist = load_dist(c).value_or(PopulationDistribution::reference());
  PhantomConfig pc;
  pc.extents = c.extents;
  const fs::path root(c.out);
  fs::create_directories(root / "volumes");
  Manifest m;
  std::size_t index = 0;
  for (int severity = 0; severity < 4; ++severity) {
    for (std::size_t k = 0; k < c.counts[static_cast<std::size_t>(severity)]; ++k, ++index) {
      char id[32];
      std::snprintf(id, sizeof id, "case%04zu", index);
      Rng rng(derive_seed(c.seed, {index}));
      Phantom ph = generate_phantom(id, severity, dist, pc, rng);
      ph.record.volume_path = "volumes/" + std::string(id) + ".vol";
      write_volume((root / ph.record.volume_path).string(), ph.volume);
      m.records.push_back(ph.record);
    }
  }
  write_manifest((root / "manifest.json").string(), m);
  write_json((root / "synth_config.json").string(), echo(c));
  out << "wrote " << m.records.size() << " phantoms to " << root.string() << '\n';
  return kOk;
}

int cmd_fit_dist(const RunConfig& c, std::ostream& out) {
  need(c.manifest, "--manifest");
  const Manifest m = read_manifest(c.manifest);
  std::vector<Vec3> points;
  for (const auto& r : m.records) points.push_back(proportional_location(r));
  const auto dist = fit_distribution(points);
  json j = to_json(dist);
  j["n"] = points.size();
  j["config"] = echo(c);
  if (c.out.empty()) {
    out << j.dump(2) << '\n';
  } else {
    write_json(c.out, j);
    out << "wrote distribution fitted on " << points.size() << " records to " << c.out << '\n';
  }
  return kOk;
}

int cmd_extract_roi(const RunConfig& c, std::ostream& out) {
  need(c.manifest, "--manifest");
  need(c.out, "--out");
  const Manifest m = read_manifest(c.manifest);
  RoiSpec roi = c.train.roi;
  roi.min_extent = std::max(roi.min_extent, c.model.min_input_extent());
  std::optional<PopulationDistribution> dist = load_dist(c);
  if (roi.mode == RoiMode::kGeneric && !dist) {
    std::vector<Vec3> points;
    for (const auto& r : m.records) points.push_back(proportional_location(r));
    dist = fit_distribution(points);
  }
  fs::create_directories(c.out);
  json rois = json::array();
  for (const auto& r : m.records) {
    const Volume v = read_volume(m.resolve(r));
    const Box3 box = roi_box(v.extents(), r, roi, dist ? &*dist : nullptr);
    write_volume((fs::path(c.out) / (r.id + ".vol")).string(), v.crop(box));
    rois.push_back({{"id", r.id},
                    {"lo", box.lo},
                    {"size", {box.size.d, box.size.h, box.size.w}},
                    {"volume_reduction_percent", volume_reduction(v.extents(), box.size)}});
  }
  json j{{"config", echo(c)}, {"rois", rois}};
  if (dist) j["distribution"] = to_json(*dist);
  write_json((fs::path(c.out) / "roi.json").string(), j);
  out << "extracted " << rois.size() << " " << to_string(roi.mode) << " regions to " << c.out << '\n';
  return kOk;
}

void print_summary(const RunReport& r, std::ostream& out) {
  const auto& m = r.metrics;
  char line[160];
  for (const auto& f : r.folds) {
    std::snprintf(line, sizeof line, "fold %zu  A %.2f/%.2f  H %.2f/%.2f  wF1 %.3f  acc %.3f  best epoch %zu\n", f.fold,
                  f.metrics.abnormal.precision, f.metrics.abnormal.recall, f.metrics.healthy.precision,
                  f.metrics.healthy.recall, f.metrics.weighted_f1, f.metrics.accuracy, f.best_epoch);
    out << line;
  }
  std::snprintf(line, sizeof line, "all     A %.2f/%.2f  H %.2f/%.2f  wF1 %.3f  acc %.3f\n", m.abnormal.precision,
                m.abnormal.recall, m.healthy.precision, m.healthy.recall, m.weighted_f1, m.accuracy);
  out << line;
}

std::string checkpoint_path(const std::string& dir, std::size_t fold) {
  return (fs::path(dir) / ("fold" + std::to_string(fold) + ".ckpt")).string();
}

int cmd_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
  need(c.manifest, "--manifest");
  need(c.out, "--out");
  const Dataset data = load_dataset(read_manifest(c.manifest));
  const auto dist = load_dist(c);
  fs::create_directories(c.out);
  const json config = echo(c);
  write_json((fs::path(c.out) / "config.json").string(), config);
  auto log = [&err](const EpochLog& e) {
    char line[128];
    std::snprintf(line, sizeof line, "fold %zu epoch %zu  train loss %.4f  test loss %.4f  test acc %.3f\n", e.fold,
                  e.epoch, e.train_loss, e.test_loss, e.test_accuracy);
    err << line << std::flush;
  };
  const auto result = cross_validate(data, c.train, c.model, config, dist ? &*dist : nullptr, log);
  for (std::size_t k = 0; k < result.checkpoints.size(); ++k) save_checkpoint(checkpoint_path(c.out, k), result.checkpoints[k]);
  write_json((fs::path(c.out) / "report.json").string(), to_json(result.report));
  print_summary(result.report, out);
  return kOk;
}

// Settings of a finished training run, with flags overriding the manifest.
RunConfig run_settings(const RunConfig& c) {
  need(c.run_dir, "--run");
  const json saved = read_json((fs::path(c.run_dir) / "config.json").string());
  RunConfig r = c;
  try {
    r.preset = saved.at("preset").get<std::string>();
    r.seed = saved.at("seed").get<std::uint64_t>();
    if (c.manifest.empty()) r.manifest = saved.at("manifest").get<std::string>();
    if (c.dist.empty() && !saved.at("dist").is_null()) r.dist = saved["dist"].get<std::string>();
    r.model = resnet_config_from_json(saved.at("model"), ResNetConfig::paper());
    r.train = train_config_from_json(saved.at("train"), TrainConfig{});
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed run config: ") + e.what());
  }
  return r;
}

ParameterSet<float> load_checked(const std::string& path, const ResNetConfig& model) {
  ParameterSet<float> params = load_checkpoint(path);
  const auto layout = param_layout(model);
  require(params.size() == layout.size(), ErrorCode::kConfig, path + " does not match the model configuration");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    require(params.name(i) == layout[i].name && params[i].shape() == layout[i].shape, ErrorCode::kConfig,
            path + ": tensor " + params.name(i) + " does not match the model configuration");
  }
  return params;
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  const RunConfig r = run_settings(c);
  const Dataset data = load_dataset(read_manifest(r.manifest));
  const auto dist = load_dist(r);
  const FoldPlan plan = make_folds(data.records, r.train.folds, r.train.seed);
  std::vector<FoldReport> folds;
  for (std::size_t k = 0; k < plan.folds.size(); ++k) {
    const auto params = load_checked(checkpoint_path(r.run_dir, k), r.model);
    folds.push_back(evaluate_fold(data, plan.folds[k], k, r.train, r.model, params, dist ? &*dist : nullptr));
  }
  json config = echo(r);
  config["command"] = "eval";
  const RunReport report = aggregate(config, std::move(folds), data.records);
  const std::string path = c.out.empty() ? (fs::path(r.run_dir) / "eval_report.json").string() : c.out;
  write_json(path, to_json(report));
  print_summary(report, out);
  return kOk;
}

int cmd_attn_export(const RunConfig& c, std::ostream& out) {
  const RunConfig r = run_settings(c);
  need(r.id, "--id");
  need(c.out, "--out");
  require(r.model.attention_enabled, ErrorCode::kAttentionDisabled, "the run in " + r.run_dir + " has attention off");
  const Dataset data = load_dataset(read_manifest(r.manifest));
  const auto dist = load_dist(r);
  const FoldPlan plan = make_folds(data.records, r.train.folds, r.train.seed);
  std::size_t fold = r.fold.value_or(plan.folds.size());
  if (!r.fold) {
    for (std::size_t k = 0; k < plan.folds.size(); ++k) {
      const auto& ids = plan.folds[k].test_ids;
      if (std::find(ids.begin(), ids.end(), r.id) != ids.end()) fold = k;
    }
  }
  require(fold < plan.folds.size(), ErrorCode::kConfig, "no fold holds " + r.id + " in its test set");
  const auto params = load_checked(checkpoint_path(r.run_dir, fold), r.model);

  RoiSpec roi = r.train.roi;
  roi.min_extent = std::max(roi.min_extent, r.model.min_input_extent());
  const auto fold_dist = fold_distribution(data, plan.folds[fold], roi, dist ? &*dist : nullptr);
  const std::size_t i = data.index_of(r.id);
  const Volume window = extract_roi(data.volumes[i], data.records[i], roi, fold_dist ? &*fold_dist : nullptr);

  Tape<float> tape;
  const auto vars = bind_params(tape, params, false);
  Rng unused(0);
  const auto pred = forward(tape, vars, tape.constant(window.to_tensor<float>()), r.model, false, unused);
  const auto paths = export_attention(c.out, r.id, window, *pred.attention_map);
  out << "wrote " << paths.size() << " overlay slices for " << r.id << " (fold " << fold << ") to " << c.out << '\n';
  return kOk;
}

int cmd_bound(const RunConfig& c, std::ostream& out) {
  const auto b = accuracy_upper_bound(c.n, c.alpha);
  json j{{"n", c.n}, {"alpha", c.alpha}, {"hoeffding", b.hoeffding}, {"clopper_pearson", b.clopper_pearson}};
  out << j.dump(2) << '\n';
  return kOk;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInsufficientSamples:
    case ErrorCode::kAttentionDisabled:
    case ErrorCode::kMissingDistribution:
    case ErrorCode::kMissingCentroid:
      return kUsageError;
    default:
      return kRuntimeError;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Terminal-ileum volume classifier: phantoms, ROI extraction, training and evaluation"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config file; flags take precedence");
    sub->add_option("--seed", f.seed, "Base random seed");
  };
  auto data_flags = [&f](CLI::App* sub) {
    sub->add_option("--manifest", f.manifest, "Manifest JSON");
    sub->add_option("--dist", f.dist, "Population distribution JSON");
  };
  auto model_flags = [&f](CLI::App* sub) {
    sub->add_option("--roi", f.roi, "ROI mode")->check(CLI::IsMember({"localised", "localized", "generic"}));
    sub->add_option("--attention", f.attention, "Attention gate")->check(CLI::IsMember({"on", "off"}));
    sub->add_option("--preset", f.preset, "Model preset")->check(CLI::IsMember({"paper", "desk"}));
  };

  auto* synth = app.add_subcommand("synth", "Generate a phantom dataset and its manifest");
  common(synth);
  synth->add_option("--out", f.out, "Output directory");
  synth->add_option("--dist", f.dist, "Population distribution JSON (default: reference constants)");
  synth->add_option("--counts", f.counts, "Phantoms per severity: healthy,mild,moderate,severe")->delimiter(',');
  synth->add_option("--extents", f.extents, "Volume extents D,H,W")->delimiter(',');

  auto* fit = app.add_subcommand("fit-dist", "Fit the proportional-location distribution of a manifest");
  common(fit);
  fit->add_option("--manifest", f.manifest, "Manifest JSON");
  fit->add_option("--out", f.out, "Output JSON (default: stdout)");

  auto* extract = app.add_subcommand("extract-roi", "Crop Localised or Generic regions");
  common(extract);
  data_flags(extract);
  model_flags(extract);
  extract->add_option("--out", f.out, "Output directory");

  auto* train = app.add_subcommand("train", "Stratified cross-validated training");
  common(train);
  data_flags(train);
  model_flags(train);
  train->add_option("--out", f.out, "Run directory");
  train->add_option("--folds", f.folds, "Fold count");
  train->add_option("--lr", f.lr, "Adam learning rate");
  train->add_option("--epochs", f.epochs, "Maximum epochs per fold");
  train->add_option("--batch-size", f.batch_size, "Mini-batch size");

  auto* eval = app.add_subcommand("eval", "Re-evaluate the saved checkpoints of a run");
  common(eval);
  data_flags(eval);
  eval->add_option("--run", f.run_dir, "Run directory written by train")->required();
  eval->add_option("--out", f.out, "Report path (default: <run>/eval_report.json)");

  auto* attn = app.add_subcommand("attn-export", "Export attention overlays as PGM slices");
  common(attn);
  data_flags(attn);
  attn->add_option("--run", f.run_dir, "Run directory written by train")->required();
  attn->add_option("--id", f.id, "Record id")->required();
  attn->add_option("--fold", f.fold, "Fold checkpoint (default: the fold testing the record)");
  attn->add_option("--out", f.out, "Output directory");

  auto* bound = app.add_subcommand("bound", "Small-sample accuracy bounds");
  common(bound);
  bound->add_option("--n", f.n, "Test-set size");
  bound->add_option("--alpha", f.alpha, "Significance level")->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    const RunConfig c = resolve(name, f);
    if (name == "synth") return cmd_synth(c, out);
    if (name == "fit-dist") return cmd_fit_dist(c, out);
    if (name == "extract-roi") return cmd_extract_roi(c, out);
    if (name == "train") return cmd_train(c, out, err);
    if (name == "eval") return cmd_eval(c, out);
    if (name == "attn-export") return cmd_attn_export(c, out);
    return cmd_bound(c, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"ileumnet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace ileumnet::cli
