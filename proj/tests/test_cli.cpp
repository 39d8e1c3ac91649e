#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "ileumnet/localization.hpp"
#include "ileumnet/pgm.hpp"
#include "ileumnet/records.hpp"
#include "oracles.hpp"

using namespace ileumnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ileumnet_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

// Small phantom set shared by the train/eval/export tests.
const fs::path& shared_dataset() {
  static const fs::path dir = [] {
    const auto d = scratch("shared");
    const auto r = cli_run({"synth", "--out", (d / "ds").string(), "--counts", "8,0,0,8", "--extents", "24,48,48",
                            "--seed", "11"});
    EXPECT_EQ(r.code, cli::kOk) << r.err;
    return d;
  }();
  return dir;
}

}  // namespace

TEST(CliSynth, CountsAndHistogram) {
  const auto d = scratch("synth");
  const auto r = cli_run({"synth", "--out", (d / "a").string(), "--counts", "10,3,3,1", "--extents", "24,48,48",
                          "--seed", "4"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const Manifest m = read_manifest((d / "a" / "manifest.json").string());
  ASSERT_EQ(m.records.size(), 17u);
  std::array<int, 4> hist{};
  for (const auto& rec : m.records) {
    ++hist[rec.severity];
    EXPECT_TRUE(fs::exists(m.resolve(rec))) << rec.id;
  }
  EXPECT_EQ(hist, (std::array<int, 4>{10, 3, 3, 1}));
  EXPECT_TRUE(fs::exists(d / "a" / "synth_config.json"));
}

TEST(CliSynth, SameSeedIsByteIdentical) {
  const auto d = scratch("synth_repeat");
  for (const char* sub : {"a", "b"}) {
    ASSERT_EQ(cli_run({"synth", "--out", (d / sub).string(), "--counts", "3,1,1,1", "--extents", "24,48,48",
                       "--seed", "9"})
                  .code,
              cli::kOk);
  }
  EXPECT_EQ(slurp(d / "a" / "manifest.json"), slurp(d / "b" / "manifest.json"));
  for (const auto& entry : fs::directory_iterator(d / "a" / "volumes")) {
    EXPECT_EQ(slurp(entry.path()), slurp(d / "b" / "volumes" / entry.path().filename()));
  }
}

TEST(CliSynth, MeanCentroidMatchesReferenceDistribution) {
  const auto d = scratch("synth_500");
  ASSERT_EQ(cli_run({"synth", "--out", d.string(), "--counts", "500,0,0,0", "--extents", "16,40,40", "--seed", "2"}).code,
            cli::kOk);
  const Manifest m = read_manifest((d / "manifest.json").string());
  Vec3 mean{};
  for (const auto& rec : m.records) {
    const Vec3 p = proportional_location(rec);
    for (std::size_t a = 0; a < 3; ++a) mean[a] += p[a] / 500.0;
  }
  const auto ref = PopulationDistribution::reference();
  for (std::size_t a = 0; a < 3; ++a) {
    EXPECT_LT(std::abs(mean[a] - ref.mu[a]), 3.0 * std::sqrt(ref.sigma[a][a] / 500.0)) << a;
  }

  // fit-dist over the same manifest recovers the generator mean.
  const auto r = cli_run({"fit-dist", "--manifest", (d / "manifest.json").string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j.at("n"), 500);
  for (std::size_t a = 0; a < 3; ++a) {
    EXPECT_NEAR(j.at("mu")[a].get<double>(), mean[a], 1e-12);
    EXPECT_LT(std::abs(j.at("mu")[a].get<double>() - ref.mu[a]), 3.0 * std::sqrt(ref.sigma[a][a] / 500.0));
  }
}

TEST(CliFitDist, TwoRecordsAndTooFew) {
  const auto d = scratch("fit");
  Manifest m;
  PatientRecord a;
  a.id = "a";
  a.patient_dims = {10, 20, 40};
  a.ileum_centroid = Vec3{5, 10, 20};  // proportional (0, 0, 0)
  PatientRecord b = a;
  b.id = "b";
  b.ileum_centroid = Vec3{3, 6, 16};  // (-0.4, -0.4, -0.2)
  m.records = {a, b};
  write_manifest((d / "two.json").string(), m);
  const auto r = cli_run({"fit-dist", "--manifest", (d / "two.json").string(), "--out", (d / "dist.json").string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const json j = load(d / "dist.json");
  EXPECT_NEAR(j.at("mu")[0].get<double>(), -0.2, 1e-12);
  EXPECT_NEAR(j.at("mu")[1].get<double>(), -0.2, 1e-12);
  EXPECT_NEAR(j.at("mu")[2].get<double>(), -0.1, 1e-12);
  EXPECT_EQ(j.at("config").at("command"), "fit-dist");

  m.records = {a};
  write_manifest((d / "one.json").string(), m);
  const auto one = cli_run({"fit-dist", "--manifest", (d / "one.json").string()});
  EXPECT_EQ(one.code, cli::kUsageError);
  EXPECT_NE(one.err.find("InsufficientSamples"), std::string::npos) << one.err;
}

TEST(CliExtractRoi, LocalisedAndGeneric) {
  const auto& ds = shared_dataset();
  const auto d = scratch("extract");
  const auto manifest = (ds / "ds" / "manifest.json").string();
  ASSERT_EQ(cli_run({"extract-roi", "--manifest", manifest, "--out", (d / "loc").string()}).code, cli::kOk);
  const Manifest m = read_manifest(manifest);
  const Volume w = read_volume((d / "loc" / (m.records[0].id + ".vol")).string());
  EXPECT_EQ(w.extents(), (Extents3{12, 24, 24}));
  const json roi = load(d / "loc" / "roi.json");
  EXPECT_TRUE(roi.dump().find("volume_reduction_percent") != std::string::npos);

  const auto g = cli_run({"extract-roi", "--manifest", manifest, "--roi", "generic", "--out", (d / "gen").string()});
  ASSERT_EQ(g.code, cli::kOk) << g.err;
  const Volume gw = read_volume((d / "gen" / (m.records[0].id + ".vol")).string());
  EXPECT_GE(gw.extents().voxels(), 9u * 9u * 9u);
}

TEST(CliTrain, ReportSchemaAndEvalReproduces) {
  const auto& ds = shared_dataset();
  const auto d = scratch("train");
  const auto r = cli_run({"train", "--manifest", (ds / "ds" / "manifest.json").string(), "--out", (d / "run").string(),
                          "--roi", "localised", "--attention", "on", "--epochs", "2", "--seed", "3"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const json rep = load(d / "run" / "report.json");
  EXPECT_EQ(rep.at("format"), "ileumnet-report");
  ASSERT_EQ(rep.at("folds").size(), 4u);
  EXPECT_TRUE(rep.at("aggregate").at("metrics").contains("weighted_f1"));
  EXPECT_EQ(rep.at("config").at("train").at("seed"), 3);
  for (int k = 0; k < 4; ++k) EXPECT_TRUE(fs::exists(d / "run" / ("fold" + std::to_string(k) + ".ckpt")));

  const auto e = cli_run({"eval", "--run", (d / "run").string()});
  ASSERT_EQ(e.code, cli::kOk) << e.err;
  const json ev = load(d / "run" / "eval_report.json");
  ASSERT_EQ(ev.at("folds").size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(ev.at("folds")[k].at("metrics"), rep.at("folds")[k].at("metrics"));
    EXPECT_EQ(ev.at("folds")[k].at("confusion"), rep.at("folds")[k].at("confusion"));
    EXPECT_EQ(ev.at("folds")[k].at("predictions"), rep.at("folds")[k].at("predictions"));
  }
  EXPECT_EQ(ev.at("aggregate"), rep.at("aggregate"));
}

TEST(CliTrain, ZeroLearningRateIsNullModel) {
  const auto& ds = shared_dataset();
  const auto d = scratch("train_lr0");
  const auto r = cli_run({"train", "--manifest", (ds / "ds" / "manifest.json").string(), "--out", d.string(),
                          "--lr", "0", "--epochs", "1", "--seed", "8"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const json rep = load(d / "report.json");
  const double acc = rep.at("aggregate").at("metrics").at("accuracy");
  // Balanced 8/8 set: prior 0.5, binomial sd 0.125.
  EXPECT_NEAR(acc, 0.5, 2 * 0.125);
}

TEST(CliAttention, ExportWritesOnePairPerGatedSlice) {
  const auto& ds = shared_dataset();
  const auto d = scratch("attn");
  const auto manifest = (ds / "ds" / "manifest.json").string();
  ASSERT_EQ(cli_run({"train", "--manifest", manifest, "--out", (d / "run").string(), "--epochs", "1", "--folds", "2"}).code,
            cli::kOk);
  const Manifest m = read_manifest(manifest);
  const std::string id = m.records[3].id;
  const auto r = cli_run({"attn-export", "--run", (d / "run").string(), "--id", id, "--out", (d / "png").string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  // Desk window 12x24x24 gives a 3x6x6 gated grid.
  std::size_t overlays = 0, raws = 0;
  for (const auto& e : fs::directory_iterator(d / "png")) {
    const auto name = e.path().filename().string();
    if (name.rfind(id + "_raw_z", 0) == 0) ++raws;
    else if (name.rfind(id + "_z", 0) == 0) ++overlays;
  }
  EXPECT_EQ(overlays, 3u);
  EXPECT_EQ(raws, 3u);
  const GreyImage img = read_pgm((d / "png" / (id + "_z0.pgm")).string());
  EXPECT_EQ(img.width, 24u);
  EXPECT_EQ(img.height, 24u);

  ASSERT_EQ(cli_run({"train", "--manifest", manifest, "--out", (d / "off").string(), "--epochs", "1", "--folds", "2",
                     "--attention", "off"})
                .code,
            cli::kOk);
  const auto off = cli_run({"attn-export", "--run", (d / "off").string(), "--id", id, "--out", (d / "png_off").string()});
  EXPECT_EQ(off.code, cli::kUsageError);
  EXPECT_NE(off.err.find("AttentionDisabled"), std::string::npos) << off.err;
}

TEST(CliAttention, PaperGridGivesEightSlices) {
  const auto window = [] {
    Volume v({31, 87, 87});
    Rng rng(1);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& x : v.data()) x = u(rng);
    return v;
  }();
  Tensor<float> map({1, 8, 22, 22}, 1.0f / (8 * 22 * 22));
  const auto slices = attention_overlays(window, map);
  ASSERT_EQ(slices.size(), 8u);
  for (const auto& s : slices) {
    ASSERT_EQ(s.raw.pixels.size(), 87u * 87u);
    for (std::size_t i = 0; i < s.raw.pixels.size(); ++i) {
      // Uniform attention dims every pixel by half.
      EXPECT_LE(std::abs(2 * static_cast<int>(s.overlay.pixels[i]) - static_cast<int>(s.raw.pixels[i])), 1);
    }
  }
  // A peaked map keeps the hot region at full brightness and darkens the rest.
  Tensor<float> peaked({1, 8, 22, 22}, 0.0f);
  peaked.at(0, 4, 11, 11) = 1.0f;
  const auto hot = attention_overlays(window, peaked);
  const std::size_t y = 11 * 87 / 22 + 1, x = 11 * 87 / 22 + 1;
  EXPECT_EQ(hot[4].overlay.pixels[y * 87 + x], hot[4].raw.pixels[y * 87 + x]);
  EXPECT_EQ(hot[0].overlay.pixels[y * 87 + x], 0);
}

TEST(CliBound, ReportsBothBounds) {
  const auto r = cli_run({"bound", "--n", "170", "--alpha", "0.05"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const json j = json::parse(r.out);
  EXPECT_NEAR(j.at("hoeffding").get<double>(), 0.9061, 5e-4);
  EXPECT_NEAR(j.at("clopper_pearson").get<double>(), 0.9825, 5e-4);
  EXPECT_EQ(cli_run({"bound", "--n", "170", "--alpha", "1.5"}).code, cli::kUsageError);
}

TEST(CliConfig, FileValuesYieldToFlags) {
  const auto d = scratch("config");
  { std::ofstream(d / "cfg.json") << R"({"n": 42, "alpha": 0.1})"; }
  const auto file_only = json::parse(cli_run({"bound", "--config", (d / "cfg.json").string()}).out);
  EXPECT_EQ(file_only.at("n"), 42);
  EXPECT_EQ(file_only.at("alpha"), 0.1);
  const auto flagged = json::parse(cli_run({"bound", "--config", (d / "cfg.json").string(), "--n", "170"}).out);
  EXPECT_EQ(flagged.at("n"), 170);
  EXPECT_EQ(flagged.at("alpha"), 0.1);

  { std::ofstream(d / "bad.json") << R"({"n": 42, "bogus": 1})"; }
  const auto bad = cli_run({"bound", "--config", (d / "bad.json").string()});
  EXPECT_EQ(bad.code, cli::kUsageError);
}

TEST(CliErrors, ExitCodes) {
  EXPECT_EQ(cli_run({}).code, cli::kUsageError);
  EXPECT_EQ(cli_run({"frobnicate"}).code, cli::kUsageError);
  EXPECT_EQ(cli_run({"train", "--roi", "sideways"}).code, cli::kUsageError);
  const auto missing = cli_run({"fit-dist", "--manifest", "/nonexistent/manifest.json"});
  EXPECT_EQ(missing.code, cli::kRuntimeError);
  EXPECT_EQ(missing.err.rfind("error: ", 0), 0u) << missing.err;
}
