#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "sopt/cli.hpp"
#include "sopt/image_io.hpp"
#include "sopt/net.hpp"

using namespace sopt;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

const std::vector<std::string> kSmallData{"--set", "data.per_class=12", "--set", "data.heldout_per_class=3",
                                          "--set", "data.size=16"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

class Cli : public ::testing::Test {
 protected:
  static fs::path root, ckpt;

  static void SetUpTestSuite() {
    root = fs::path(::testing::TempDir()) / "sopt_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    const auto r = run(with({"train", "--out", (root / "train").string(), "--set", "train.epochs=2"}, kSmallData));
    ASSERT_EQ(r.code, kExitOk) << r.err;
    ckpt = root / "train" / "checkpoint.sopt";
  }

  static std::vector<std::string> synth(const std::string& preset, const std::string& out,
                                        std::vector<std::string> extra = {}) {
    auto args = with({"synth", "--preset", preset, "--out", (root / out).string(), "--set",
                      "checkpoint=" + ckpt.string()},
                     kSmallData);
    return with(args, extra);
  }
};

fs::path Cli::root, Cli::ckpt;

void expect_valid_pnm(const fs::path& p) {
  const std::string bytes = slurp(p);
  std::istringstream in(bytes);
  std::string magic;
  std::size_t w, h, maxval;
  in >> magic >> w >> h >> maxval;
  EXPECT_TRUE(magic == "P5" || magic == "P6") << p;
  EXPECT_EQ(maxval, 255u) << p;
  const std::size_t channels = magic == "P6" ? 3 : 1;
  EXPECT_EQ(bytes.size() - (std::size_t(in.tellg()) + 1), channels * w * h) << p;
  const Tensor t = read_pnm(p.string());
  const auto tmp = p.string() + ".rt";
  write_pnm(tmp, t);
  EXPECT_EQ(slurp(tmp), bytes) << p;
  fs::remove(tmp);
}

void expect_all_images_valid(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".ppm" || e.path().extension() == ".pgm") expect_valid_pnm(e.path()), ++n;
  EXPECT_GT(n, 0u);
}

}  // namespace

TEST_F(Cli, TrainWritesCheckpointAndMetrics) {
  EXPECT_EQ(slurp(ckpt).substr(0, 4), "SOPT");
  const json metrics = load(root / "train" / "metrics.json");
  EXPECT_FALSE(metrics.empty());
  const json man = load(root / "train" / "manifest.json");
  EXPECT_EQ(man["command"], "train");
  EXPECT_EQ(man["engine_version"], kEngineVersion);
  EXPECT_EQ(man["config"]["train"]["epochs"], 2);
}

TEST_F(Cli, UnknownKeyIsAConfigError) {
  const auto r = run({"train", "--out", (root / "bad").string(), "--set", "train.epochz=3"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("train.epochz"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(root / "bad"));

  const fs::path cfg = root / "typo.json";
  std::ofstream(cfg) << R"({"ascent": {"stepz": 3}})";
  const auto s = run(synth("fv", "typo", {"--config", cfg.string()}));
  EXPECT_EQ(s.code, kExitConfig);
  EXPECT_NE(s.err.find("ascent.stepz"), std::string::npos) << s.err;
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run({"synth", "--preset", "fv", "--set", "checkpoint=/nonexistent.sopt", "--out",
                 (root / "x").string()})
                .code,
            kExitMissingInput);
  EXPECT_EQ(run({"synth", "--preset", "nope"}).code, kExitConfig);
  EXPECT_EQ(run({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(run({"train", "--config", (root / "missing.json").string()}).code, kExitMissingInput);
  EXPECT_EQ(run({"train", "--set", "train.epochs=\"ten\""}).code, kExitConfig);
  EXPECT_EQ(run(synth("fv", "nan", {"--set", "ascent.normalize_gradient=false", "--set", "ascent.step_size=1e300",
                                    "--set", "ascent.steps=3"}))
                .code,
            kExitNumeric);
  const fs::path junk = root / "junk.sopt";
  std::ofstream(junk) << "not a checkpoint";
  EXPECT_EQ(run(synth("fv", "junk", {"--set", "checkpoint=" + junk.string()})).code, kExitMissingInput);
}

TEST_F(Cli, FeatureVisualizationRecordsSuperstimulus) {
  const auto r = run(synth("fv", "fv", {"--set", "ascent.steps=40", "--set", "superstimulus.images=40"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json man = load(root / "fv" / "manifest.json");
  EXPECT_EQ(man["superstimulus"]["images"], 40);
  EXPECT_TRUE(man["superstimulus"].contains("ratio"));
  EXPECT_GT(man["final_objective"].get<double>(), man["initial_objective"].get<double>());
  ASSERT_EQ(man["snapshots"].size(), 2u);
  EXPECT_TRUE(fs::exists(root / "fv" / "final.ppm"));
  EXPECT_TRUE(fs::exists(root / "fv" / "metrics.json"));
  expect_all_images_valid(root / "fv");
}

TEST_F(Cli, DegenerateStyleTransfer) {
  const auto r = run(synth("style", "style", {"--set", "style=heldout:0", "--set", "ascent.steps=30"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json man = load(root / "style" / "manifest.json");
  // The objective is the negated combined loss.
  EXPECT_GT(man["final_objective"].get<double>(), man["initial_objective"].get<double>());
  const json& last = man["snapshots"].back();
  EXPECT_LT(last["terms"]["style_loss"].get<double>(), 1e-3);
}

TEST_F(Cli, SensoryOptimizationReportsAllTerms) {
  const auto r = run(synth("so", "so", {"--set", "ascent.steps=10", "--set", "ascent.snapshot_interval=5"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json man = load(root / "so" / "manifest.json");
  ASSERT_EQ(man["snapshots"].size(), 3u);
  for (const auto& s : man["snapshots"]) {
    EXPECT_TRUE(s["terms"].contains("layer_l2"));
    EXPECT_TRUE(s["terms"].contains("style_loss"));
    EXPECT_TRUE(s["terms"].contains("content_loss"));
  }
}

TEST_F(Cli, DreamRuns) {
  const auto r = run(synth("dream", "dream", {"--set", "ascent.steps=5", "--set", "superstimulus.images=8"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(load(root / "dream" / "manifest.json").contains("superstimulus"));
}

TEST_F(Cli, MediumWritesBinaryImageAndCutPlan) {
  const auto r = run(synth("medium", "medium", {"--set", "ascent.steps=20", "--set", "param.cell=2"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Tensor img = read_pnm((root / "medium" / "final.ppm").string());
  for (float v : img.data()) ASSERT_TRUE(v == 0.0f || v == 1.0f);
  const std::string cuts = slurp(root / "medium" / "cuts.txt");
  EXPECT_EQ(std::count(cuts.begin(), cuts.end(), '\n'), 8);
  EXPECT_EQ(load(root / "medium" / "manifest.json")["outputs"]["medium"], "cuts.txt");
}

TEST_F(Cli, PaintWritesSvg) {
  const auto r = run(synth("paint", "paint", {"--set", "paint.budget=6", "--set", "paint.proposals=4"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json man = load(root / "paint" / "manifest.json");
  EXPECT_TRUE(man.contains("strokes_accepted"));
  EXPECT_EQ(man["snapshots"].size(), man["strokes_accepted"].get<std::size_t>() + 1);
  EXPECT_NE(slurp(root / "paint" / "medium.svg").find("<svg"), std::string::npos);
}

TEST_F(Cli, PaletteWritesAssignment) {
  const auto r = run(synth("style", "palette", {"--set", "param.kind=\"palette\"", "--set", "ascent.steps=5"}));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(load(root / "palette" / "palette.json")["colors"].size(), 4u);
}

TEST_F(Cli, ManifestReplaysBitIdentically) {
  const auto first = run(synth("fv", "replay_a", {"--set", "ascent.steps=12", "--set", "superstimulus.images=0",
                                                  "--set", "ascent.snapshot_interval=4", "--seed", "7"}));
  ASSERT_EQ(first.code, kExitOk) << first.err;
  const auto again = run({"synth", "--config", (root / "replay_a" / "manifest.json").string(), "--out",
                          (root / "replay_b").string()});
  ASSERT_EQ(again.code, kExitOk) << again.err;
  const json a = load(root / "replay_a" / "manifest.json"), b = load(root / "replay_b" / "manifest.json");
  EXPECT_EQ(a["config"]["seed"], 7);
  for (const auto& f : {"final.ppm", "snap_00000.ppm", "snap_00004.ppm", "snap_00012.ppm"})
    EXPECT_EQ(slurp(root / "replay_a" / f), slurp(root / "replay_b" / f)) << f;
  EXPECT_EQ(a["final_objective"], b["final_objective"]);
}

TEST_F(Cli, EvalOnHeldOutMatchesAccuracy) {
  const auto r = run(with({"eval", "--out", (root / "eval").string(), "--set", "checkpoint=" + ckpt.string(), "--set",
                           "checkpoint_b=" + ckpt.string()},
                          kSmallData));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json rep = load(root / "eval" / "report.json");
  EXPECT_EQ(rep["net_a"]["retention"], rep["net_a"]["accuracy"]);
  EXPECT_EQ(rep["agreement"], 1.0);
  EXPECT_EQ(rep["retention_gap"], 0.0);
  EXPECT_EQ(rep["images"], 24);
}

TEST_F(Cli, InspectSummarizes) {
  const auto r = run({"inspect", ckpt.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("Conv(16,3,1,1)"), std::string::npos) << r.out;
  EXPECT_EQ(run({"inspect", (root / "nothing").string()}).code, kExitMissingInput);
}
