#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rfmask/pipeline.hpp"

using namespace rfmask;
namespace fs = std::filesystem;

namespace {

// Fast variant of the sample: shorter sweep, fewer frames.
io::json small_config(bool with_mover = true) {
  io::json scatterers = io::json::array();
  if (with_mover)
    scatterers.push_back({{"position", {-0.4, 2.0, 1.0}}, {"velocity", {0.8, 0.2, 0.0}}});
  scatterers.push_back({{"position", {1.2, 3.1, 1.0}}, {"reflectivity", 2.0}});
  return {{"seed", 3},
          {"scene",
           {{"frames", 9},
            {"noise_std", 0.0005},
            {"radar", {{"num_samples", 16}, {"antennas", 86}, {"mount", {0.0, 0.0, 1.0}}}},
            {"scatterers", scatterers}}},
          {"fusion", {{"layers", 2}}}};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rfmask_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RFMASK_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Pipeline, EmptySceneHasNoDetections) {
  auto j = small_config(false);
  j["scene"]["scatterers"] = io::json::array();
  j["scene"]["noise_std"] = 0.0;
  const auto res = run_pipeline(pipeline_config_from_json(j));
  EXPECT_FALSE(res.frames.empty());
  for (const auto& f : res.frames) EXPECT_TRUE(f.detections.empty());
  EXPECT_EQ(res.report.ap_50, 0.0);
  EXPECT_EQ(res.report.num_gt, 0u);
}

TEST(Cli, EmptySceneRunExitsCleanly) {
  const fs::path dir = scratch("empty");
  auto j = small_config(false);
  j["scene"]["scatterers"] = io::json::array();
  j["scene"]["noise_std"] = 0.0;
  write_file(dir / "config.json", j.dump());
  ASSERT_EQ(run_cli("run --config " + (dir / "config.json").string() + " --out-dir " + (dir / "out").string()), 0);
  EXPECT_TRUE(io::read_json((dir / "out" / "detections.json").string()).empty());
  fs::remove_all(dir);
}

TEST(Pipeline, StaticSceneHasNoDetections) {
  auto j = small_config(false);
  j["scene"]["noise_std"] = 0.0;
  const auto res = run_pipeline(pipeline_config_from_json(j));
  EXPECT_FALSE(res.frames.empty());
  for (const auto& f : res.frames) EXPECT_TRUE(f.detections.empty());
}

TEST(Pipeline, MovingScattererIsDetected) {
  const auto res = run_pipeline(pipeline_config_from_json(small_config()));
  ASSERT_FALSE(res.frames.empty());
  for (const auto& f : res.frames) {
    ASSERT_EQ(f.true_positions.size(), 1u);
    EXPECT_TRUE(f.contains_truth) << "camera frame " << f.camera_frame;
  }
  EXPECT_GE(res.contains_fraction, 0.95);
  EXPECT_GE(res.mean_mask_iou, 0.5);
}

TEST(Pipeline, WritesArtifactsAndRemovesMarker) {
  const fs::path dir = scratch("artifacts");
  auto j = small_config();
  j["output_dir"] = (dir / "out").string();
  run_pipeline(pipeline_config_from_json(j));
  for (const char* f : {"hor.rfc", "ver.rfc", "hor.rfh", "ver.rfh", "detections.json", "ground_truth.json",
                        "masks.json", "report.json", "pr_curves.csv"})
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  EXPECT_FALSE(fs::exists(dir / "out" / kIncompleteMarker));
  const auto report = io::read_json((dir / "out" / "report.json").string());
  EXPECT_TRUE(report.contains("ap_50_95"));
  fs::remove_all(dir);
}

TEST(Pipeline, RejectsMalformedConfig) {
  auto j = small_config();
  j["background_lag"] = 20;
  EXPECT_THROW(pipeline_config_from_json(j), std::invalid_argument);
  auto k = small_config();
  k.erase("scene");
  EXPECT_THROW(pipeline_config_from_json(k), io::FormatError);
  auto h = small_config();
  h["fusion"]["heads"] = 3;
  EXPECT_THROW(pipeline_config_from_json(h), std::invalid_argument);
}

TEST(Cli, RunIsDeterministic) {
  const fs::path dir = scratch("determinism");
  write_file(dir / "config.json", small_config().dump());
  ASSERT_EQ(run_cli("run --config " + (dir / "config.json").string() + " --out-dir " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("run --config " + (dir / "config.json").string() + " --out-dir " + (dir / "b").string()), 0);
  for (const char* f : {"report.json", "detections.json", "masks.json", "pr_curves.csv", "hor.rfh"})
    EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
  fs::remove_all(dir);
}

TEST(Cli, MalformedConfigFailsWithoutWriting) {
  const fs::path dir = scratch("malformed");
  write_file(dir / "config.json", "{\"scene\": [ {\"position\": [0, 2");
  EXPECT_NE(run_cli("run --config " + (dir / "config.json").string() + " --out-dir " + (dir / "out").string()), 0);
  EXPECT_FALSE(fs::exists(dir / "out"));
  EXPECT_NE(run_cli("run --config " + (dir / "missing.json").string()), 0);
  EXPECT_NE(run_cli("no-such-command"), 0);
  fs::remove_all(dir);
}

TEST(Cli, StagewiseSubcommands) {
  const fs::path dir = scratch("stages");
  write_file(dir / "scene.json", small_config()["scene"].dump());
  const std::string d = dir.string() + "/";
  ASSERT_EQ(run_cli("simulate --scene " + d + "scene.json --out " + d + "hor.rfc --seed 1"), 0);
  ASSERT_EQ(run_cli("beamform --cube " + d + "hor.rfc --plane hor --out " + d + "hor.rfh --subtract-lag 1 --normalize"), 0);
  ASSERT_EQ(run_cli("detect --heatmap " + d + "hor.rfh --out " + d + "dets.json"), 0);
  const auto dets = io::read_json(d + "dets.json");
  EXPECT_FALSE(dets.empty());
  write_file(dir / "gt.json", dets.dump());
  ASSERT_EQ(run_cli("evaluate --pred " + d + "dets.json --gt " + d + "gt.json --out " + d + "report.json --plot " + d +
                    "pr.csv"),
            0);
  EXPECT_DOUBLE_EQ(io::read_json(d + "report.json")["ap_50"].get<double>(), 1.0);

  FeatureBlock h(1, 4, 3), v(1, 4, 2, Orientation::vertical);
  for (std::size_t i = 0; i < h.values.size(); ++i) h.values[i] = 0.1 * static_cast<double>(i);
  for (std::size_t i = 0; i < v.values.size(); ++i) v.values[i] = -0.2 * static_cast<double>(i);
  write_file(dir / "h.json", io::feature_block_to_json(h).dump());
  write_file(dir / "v.json", io::feature_block_to_json(v).dump());
  ASSERT_EQ(run_cli("weights --dim 4 --heads 2 --layers 2 --seed 5 --out " + d + "w.bin"), 0);
  ASSERT_EQ(run_cli("fuse --hor " + d + "h.json --ver " + d + "v.json --weights " + d + "w.bin --out " + d +
                    "fused.json --mask-size 8"),
            0);
  const auto fused = io::read_json(d + "fused.json");
  EXPECT_EQ(fused["rows"].get<int>(), 2);
  EXPECT_EQ(fused["cols"].get<int>(), 3);
  EXPECT_NE(run_cli("fuse --hor " + d + "h.json --ver " + d + "v.json --heads 3 --out " + d + "bad.json"), 0);

  // Two cameras observing one joint.
  Matrix34 p1, p2;
  p1 << 800, 0, 320, 0, 0, 800, 240, 0, 0, 0, 1, 0;
  p2 << 800, 0, 320, -800, 0, 800, 240, 0, 0, 0, 1, 0;
  const CameraModel c1(p1), c2(p2);
  const Vec3 x(0.2, -0.1, 3.0);
  write_file(dir / "calib.json", io::cameras_to_json({c1, c2}).dump());
  const Vec2 a = c1.project(x), b = c2.project(x);
  io::json kp = io::json::array({{{"camera", 0}, {"joint", 0}, {"x", a.x()}, {"y", a.y()}},
                                 {{"camera", 1}, {"joint", 0}, {"x", b.x()}, {"y", b.y()}}});
  write_file(dir / "kp.json", kp.dump());
  ASSERT_EQ(run_cli("triangulate --calib " + d + "calib.json --kp2d " + d + "kp.json --out " + d + "kp3d.json"), 0);
  const auto kp3 = io::read_json(d + "kp3d.json");
  ASSERT_EQ(kp3.size(), 1u);
  EXPECT_NEAR(kp3[0]["z"].get<double>(), 3.0, 1e-6);
  fs::remove_all(dir);
}

TEST(Cli, SampleConfigParses) {
  const auto c = read_pipeline_config(std::string(RFMASK_SAMPLES_DIR) + "/one_walker.json");
  EXPECT_EQ(c.scene.frames, 41u);
  EXPECT_EQ(c.scene.scatterers.size(), 3u);
}
