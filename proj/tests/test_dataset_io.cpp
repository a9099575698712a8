#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "rfmask/dataset.hpp"
#include "rfmask/io.hpp"

using namespace rfmask;

namespace {

std::vector<double> stream(std::size_t n, double fps, double offset = 0.0) {
  std::vector<double> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(offset + static_cast<double>(i) / fps);
  return t;
}

}  // namespace

TEST(AlignStreams, IdenticalStreamsPairOneToOne) {
  const auto ts = stream(10, 20);
  const auto pairs = align_streams(ts, ts);
  ASSERT_EQ(pairs.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(pairs[i].radar_index, i);
    EXPECT_EQ(pairs[i].residual, 0.0);
  }
}

TEST(AlignStreams, SlowerCameraTakesEveryOtherRadarFrame) {
  const auto pairs = align_streams(stream(10, 10), stream(20, 20));
  ASSERT_EQ(pairs.size(), 10u);
  for (std::size_t n = 0; n < 10; ++n) {
    EXPECT_EQ(pairs[n].camera_index, n);
    EXPECT_EQ(pairs[n].radar_index, 2 * n);
    EXPECT_NEAR(pairs[n].residual, 0.0, 1e-12);
  }
}

TEST(AlignStreams, DropsFramesBeyondTolerance) {
  const std::vector<double> cam{0.0, 0.5, 2.0};
  const std::vector<double> radar{0.01, 0.49, 0.51};
  const auto pairs = align_streams(cam, radar, 0.05);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].radar_index, 0u);
  EXPECT_EQ(pairs[1].radar_index, 1u);  // tie goes to the earlier frame
  EXPECT_THROW(align_streams({}, radar), std::invalid_argument);
  EXPECT_THROW(align_streams({1.0, 0.0}, radar), std::invalid_argument);
}

TEST(AlignStreams, ResidualIsMinimalOverAllRadarFrames) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> cam(15), radar(23);
    for (auto& t : cam) t = u(rng);
    for (auto& t : radar) t = u(rng);
    std::sort(cam.begin(), cam.end());
    std::sort(radar.begin(), radar.end());
    const auto pairs = align_streams(cam, radar, 10.0);
    ASSERT_EQ(pairs.size(), cam.size());
    for (const auto& p : pairs) {
      double best = 1e9;
      for (double r : radar) best = std::min(best, std::abs(r - cam[p.camera_index]));
      EXPECT_EQ(p.residual, best);
    }
  }
}

TEST(Rle, Examples) {
  EXPECT_EQ(rle_encode(BinaryMask(2, 2, 1)), (RleCounts{0, 4}));
  EXPECT_EQ(rle_encode(BinaryMask(2, 2, 0)), (RleCounts{4}));
  BinaryMask checker(2, 2, 0);
  checker(1, 0) = checker(0, 1) = 1;
  // Column-major order reads 0, 1, 1, 0.
  EXPECT_EQ(rle_encode(checker), (RleCounts{1, 2, 1}));
  BinaryMask stripes(2, 2, 0);
  stripes(0, 1) = stripes(1, 1) = 1;
  EXPECT_EQ(rle_encode(stripes), (RleCounts{1, 1, 1, 1}));
  EXPECT_EQ(rle_to_string({1, 2, 1}), "1 2 1");
  EXPECT_EQ(rle_decode("1 2 1", 2, 2), checker);
}

TEST(Rle, MalformedInput) {
  EXPECT_THROW(rle_decode(RleCounts{1, 2}, 2, 2), std::runtime_error);
  EXPECT_THROW(rle_decode(RleCounts{}, 0, 0), std::runtime_error);
  EXPECT_THROW(rle_decode("1 x 2", 2, 2), std::runtime_error);
  EXPECT_THROW(rle_decode("1 2 3", 2, 2), std::runtime_error);
}

TEST(Rle, RandomRoundTrips) {
  std::mt19937 rng(5);
  std::uniform_int_distribution<std::size_t> dim(1, 30);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    BinaryMask m(dim(rng), dim(rng), 0);
    const double density = u(rng);
    for (auto& v : m.values()) v = u(rng) < density ? 1 : 0;
    const auto counts = rle_encode(m);
    ASSERT_EQ(rle_decode(counts, m.width(), m.height()), m);
    ASSERT_EQ(rle_decode(rle_to_string(counts), m.width(), m.height()), m);
  }
}

TEST(CubeFormat, RoundTripAtFloatPrecision) {
  ChirpConfig cfg;
  cfg.num_samples = 8;
  const auto arr = VirtualArray::default_for(cfg, Vec3(0, 0, 1), Orientation::horizontal, 5);
  Scatterer s;
  s.position = Vec3(0.2, 1.5, 1.0);
  const auto cube = synthesize_frame_cube({s}, cfg, arr, 3, {0.01, 4});
  std::stringstream buf;
  io::write_cube(buf, cube);
  const auto back = io::read_cube(buf, arr);
  ASSERT_EQ(back.frames(), 3u);
  EXPECT_EQ(back.config().start_freq, cfg.start_freq);
  for (std::size_t i = 0; i < cube.data().size(); ++i)
    EXPECT_NEAR(std::abs(back.data()[i] - cube.data()[i]), 0.0, 1e-6 * std::abs(cube.data()[i]) + 1e-12);
  std::stringstream again;
  io::write_cube(again, cube);
  EXPECT_THROW(io::read_cube(again, VirtualArray::default_for(cfg, Vec3(0, 0, 1), Orientation::horizontal, 4)),
               io::FormatError);
}

TEST(CubeFormat, RejectsBadMagicAndTruncation) {
  std::stringstream bad("RFX1xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx");
  EXPECT_THROW(io::read_cube_header(bad), io::FormatError);
  ChirpConfig cfg;
  cfg.num_samples = 4;
  const auto arr = VirtualArray::default_for(cfg, Vec3(0, 0, 1), Orientation::horizontal, 2);
  std::stringstream buf;
  io::write_cube(buf, synthesize_frame_cube({}, cfg, arr, 1));
  std::stringstream cut(buf.str().substr(0, buf.str().size() - 3));
  EXPECT_THROW(io::read_cube(cut, arr), io::FormatError);
}

TEST(HeatmapFormat, RoundTripBothKinds) {
  const PlaneGrid g{Orientation::vertical, Vec2(0.5, 0.1), 0.05, 4, 3, 0.2};
  ComplexHeatmap c(g, 2);
  for (std::size_t i = 0; i < c.values().size(); ++i) c.values()[i] = cplx(0.25 * i, -0.5 * i);
  std::stringstream buf;
  io::write_heatmap(buf, c);
  const auto lc = io::read_heatmap(buf);
  ASSERT_EQ(lc.kind, io::HeatmapKind::complex);
  EXPECT_EQ(lc.complex_values.values(), c.values());
  EXPECT_EQ(lc.grid().plane, Orientation::vertical);
  EXPECT_EQ(lc.grid().origin, g.origin);
  EXPECT_EQ(lc.grid().lift, 0.2);

  const RealHeatmap r = magnitude_normalize(c);
  std::stringstream rbuf;
  io::write_heatmap(rbuf, r);
  const auto lr = io::read_heatmap(rbuf);
  ASSERT_EQ(lr.kind, io::HeatmapKind::real);
  for (std::size_t i = 0; i < r.values().size(); ++i) EXPECT_NEAR(lr.real_values.values()[i], r.values()[i], 1e-7);
  std::stringstream bad("RFH2");
  EXPECT_THROW(io::read_heatmap(bad), io::FormatError);
}

TEST(SceneJson, ListAndObjectForms) {
  const auto list = io::scene_from_json(io::json::parse(R"([{"position": [0, 2, 1]},
      {"position": [1, 2, 1], "trajectory": [[0,0,0],[0.1,0,0],[0.2,0,0]]}])"));
  EXPECT_EQ(list.frames, 3u);
  EXPECT_TRUE(list.scatterers[0].is_static);
  EXPECT_FALSE(list.scatterers[1].is_static);

  const auto obj = io::scene_from_json(io::json::parse(R"({"frames": 4, "noise_std": 0.1,
      "radar": {"num_samples": 16, "antennas": 10},
      "scatterers": [{"position": [0, 2, 1], "velocity": [1, 0, 0]}]})"));
  EXPECT_EQ(obj.frames, 4u);
  EXPECT_EQ(obj.horizontal.config.num_samples, 16u);
  EXPECT_EQ(obj.vertical.antennas, 10u);
  EXPECT_EQ(obj.vertical.config.start_freq, 79e9);
  ASSERT_EQ(obj.scatterers[0].trajectory.size(), 4u);
  EXPECT_NEAR(obj.scatterers[0].trajectory[2].x(), 2.0 / 20.0, 1e-12);

  EXPECT_THROW(io::scene_from_json(io::json::parse(R"({"frames": 2})")), io::FormatError);
  EXPECT_THROW(io::scene_from_json(io::json::parse(R"([{"reflectivity": 1}])")), io::FormatError);
}

TEST(EvalJson, ReportAndCurves) {
  EvalRecord rec(1);
  rec[0].ground_truth = {{0, 0, 1, 1}};
  rec[0].detections = {{{0, 0, 1, 1}, 0.8}};
  const auto r = average_precision(rec);
  const auto j = io::report_to_json(r);
  EXPECT_DOUBLE_EQ(j["ap_50"].get<double>(), 1.0);
  const std::string csv = io::pr_curves_csv(r);
  EXPECT_EQ(csv.rfind("iou_threshold,rank,recall,precision,score", 0), 0u);
  EXPECT_NE(csv.find("0.65,"), std::string::npos);
}
