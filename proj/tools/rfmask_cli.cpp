// rfmask command-line driver. Each pipeline stage is exposed as a
// subcommand; `run` executes the whole chain from a config file.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "rfmask/rfmask.hpp"

namespace fs = std::filesystem;
using rfmask::io::json;

namespace {

// Relative output paths land in $RFMASK_OUTPUT_DIR when it is set.
std::string output_path(const std::string& p) {
  const char* dir = std::getenv("RFMASK_OUTPUT_DIR");
  if (!dir || !*dir || fs::path(p).is_absolute()) return p;
  fs::create_directories(dir);
  return (fs::path(dir) / p).string();
}

rfmask::Vec3 parse_vec3(const std::string& s) {
  std::stringstream ss(s);
  rfmask::Vec3 v;
  char sep = 0;
  if (!(ss >> v.x() >> sep >> v.y() >> sep >> v.z())) throw std::invalid_argument("expected x,y,z but got '" + s + "'");
  return v;
}

rfmask::Orientation parse_plane(const std::string& s) {
  return s == "ver" ? rfmask::Orientation::vertical : rfmask::Orientation::horizontal;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rfmask: RF silhouette pipeline toolkit"};
  app.require_subcommand(1);

  // simulate
  std::string scene_path, cube_out, radar = "hor";
  std::uint64_t seed = 0;
  auto* simulate = app.add_subcommand("simulate", "Synthesize a radar cube from a scene file");
  simulate->add_option("--scene", scene_path, "Scene JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", cube_out, "Output cube (.rfc)")->required();
  simulate->add_option("--seed", seed, "Noise seed");
  simulate->add_option("--radar", radar, "Which radar to simulate")->check(CLI::IsMember({"hor", "ver"}));

  // beamform
  std::string cube_in, plane = "hor", grid_path, heatmap_out, mount_str;
  std::size_t subtract_lag = 0;
  bool normalize = false;
  auto* beamform = app.add_subcommand("beamform", "Beamform a cube onto a horizontal or vertical plane");
  beamform->add_option("--cube", cube_in, "Input cube (.rfc)")->required()->check(CLI::ExistingFile);
  beamform->add_option("--plane", plane, "Signal plane")->check(CLI::IsMember({"hor", "ver"}));
  beamform->add_option("--grid", grid_path, "Grid JSON {origin, cell_size, width, height, lift}");
  beamform->add_option("--out", heatmap_out, "Output heatmap (.rfh)")->required();
  beamform->add_option("--mount", mount_str, "Array phase centre x,y,z (default 0,0,1)");
  beamform->add_option("--subtract-lag", subtract_lag, "Background subtraction lag in frames (0 = off)");
  beamform->add_flag("--normalize", normalize, "Write per-frame normalised magnitudes");

  // detect
  std::string heatmap_in, det_out;
  rfmask::CfarParams cfar;
  double min_peak = 0.0;
  auto* detect = app.add_subcommand("detect", "CFAR human detection on a horizontal heatmap");
  detect->add_option("--heatmap", heatmap_in, "Input heatmap (.rfh)")->required()->check(CLI::ExistingFile);
  detect->add_option("--out", det_out, "Detections JSON")->required();
  detect->add_option("--guard", cfar.guard, "Guard cells");
  detect->add_option("--train", cfar.train, "Training cells");
  detect->add_option("--threshold", cfar.threshold_factor, "Threshold factor (>= 1)");
  detect->add_option("--extent", cfar.box_extent, "Box side in meters");
  detect->add_option("--min-peak", min_peak, "Drop detections whose normalised peak is below this");

  // fuse
  std::string hor_in, ver_in, weights_in, fuse_out;
  std::size_t heads = 4, layers = 4, mask_size = 0;
  std::uint64_t weight_seed = 0;
  auto* fuse = app.add_subcommand("fuse", "Multi-head fusion of horizontal/vertical feature blocks");
  fuse->add_option("--hor", hor_in, "Horizontal feature block JSON")->required()->check(CLI::ExistingFile);
  fuse->add_option("--ver", ver_in, "Vertical feature block JSON")->required()->check(CLI::ExistingFile);
  fuse->add_option("--weights", weights_in, "Attention weights file (seeded random when omitted)");
  fuse->add_option("--seed", weight_seed, "Seed for random weights");
  fuse->add_option("--heads", heads, "Head count for random weights");
  fuse->add_option("--layers", layers, "Layer count for random weights");
  fuse->add_option("--mask-size", mask_size, "Also emit an m x m mask from the fused block");
  fuse->add_option("--out", fuse_out, "Output JSON")->required();

  // weights
  std::string weights_out;
  std::size_t dim = 8;
  double scale = 1.0;
  auto* gen_weights = app.add_subcommand("weights", "Write seeded random attention weights");
  gen_weights->add_option("--dim", dim, "Feature dimension C*H");
  gen_weights->add_option("--heads", heads, "Head count");
  gen_weights->add_option("--layers", layers, "Layer count");
  gen_weights->add_option("--seed", weight_seed, "Seed");
  gen_weights->add_option("--scale", scale, "Weight scale");
  gen_weights->add_option("--out", weights_out, "Output weights file")->required();

  // evaluate
  std::string pred_in, gt_in, report_out, plot_out;
  auto* evaluate = app.add_subcommand("evaluate", "COCO-style AP / recall / PR curves");
  evaluate->add_option("--pred", pred_in, "Detections JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--gt", gt_in, "Ground-truth JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", report_out, "Report JSON")->required();
  evaluate->add_option("--plot", plot_out, "PR-curve CSV");

  // triangulate
  std::string calib_in, kp_in, kp_out;
  std::size_t persons = 0;
  auto* triangulate = app.add_subcommand("triangulate", "Triangulate 3D keypoints from calibrated views");
  triangulate->add_option("--calib", calib_in, "Camera matrices JSON")->required()->check(CLI::ExistingFile);
  triangulate->add_option("--kp2d", kp_in, "2D keypoints JSON")->required()->check(CLI::ExistingFile);
  triangulate->add_option("--out", kp_out, "3D keypoints JSON")->required();
  triangulate->add_option("--persons", persons, "Assign person ids by K-means with this many people");
  triangulate->add_option("--seed", seed, "K-means seed");

  // run
  std::string config_in, run_out_dir;
  auto* run = app.add_subcommand("run", "Run the full pipeline from a config file");
  run->add_option("--config", config_in, "Pipeline config JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out-dir", run_out_dir, "Output directory (overrides config)");
  run->add_option("--seed", seed, "Override the config seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      const auto scene = rfmask::io::read_scene(scene_path);
      const auto& setup = radar == "ver" ? scene.vertical : scene.horizontal;
      const auto cube = rfmask::synthesize_frame_cube(scene.scatterers, setup.config, setup.array(parse_plane(radar)),
                                                      scene.frames, {scene.noise_std, seed});
      rfmask::io::write_cube(output_path(cube_out), cube);
    } else if (beamform->parsed()) {
      const auto orientation = parse_plane(plane);
      std::ifstream is(cube_in, std::ios::binary);
      const auto header = rfmask::io::read_cube_header(is);
      rfmask::io::RadarSetup setup;
      setup.config = header.config;
      setup.antennas = header.antennas;
      if (!mount_str.empty()) setup.mount = parse_vec3(mount_str);
      is.seekg(0);
      const auto cube = rfmask::io::read_cube(is, setup.array(orientation));
      auto grid = orientation == rfmask::Orientation::horizontal ? rfmask::PlaneGrid::default_horizontal(setup.mount.z())
                                                                 : rfmask::PlaneGrid::default_vertical(setup.mount.x());
      if (!grid_path.empty()) grid = rfmask::io::grid_from_json(rfmask::io::read_json(grid_path), grid);
      auto h = rfmask::beamform_plane(cube, grid);
      if (subtract_lag > 0) h = rfmask::background_subtract(h, subtract_lag);
      if (normalize)
        rfmask::io::write_heatmap(output_path(heatmap_out), rfmask::magnitude_normalize(h));
      else
        rfmask::io::write_heatmap(output_path(heatmap_out), h);
    } else if (detect->parsed()) {
      const auto loaded = rfmask::io::read_heatmap(heatmap_in);
      const auto h = loaded.normalized();
      std::vector<std::vector<rfmask::Detection>> per_frame;
      for (std::size_t t = 0; t < h.frames(); ++t) {
        const auto frame = rfmask::frame_grid(h, t);
        auto dets = rfmask::cfar_detect(frame, h.grid(), cfar);
        std::erase_if(dets, [&](const rfmask::Detection& d) { return frame(d.peak_col, d.peak_row) < min_peak; });
        per_frame.push_back(rfmask::non_max_suppression(std::move(dets)));
      }
      rfmask::io::write_json(output_path(det_out), rfmask::io::detections_to_json(per_frame));
    } else if (fuse->parsed()) {
      const auto hor = rfmask::io::feature_block_from_json(rfmask::io::read_json(hor_in));
      const auto ver = rfmask::io::feature_block_from_json(rfmask::io::read_json(ver_in));
      const auto weights =
          weights_in.empty()
              ? rfmask::io::quantize_f32(rfmask::AttentionWeights::random(hor.channels * hor.height, heads, layers, weight_seed))
              : rfmask::io::read_weights(weights_in);
      const auto fused = rfmask::fuse(hor, ver, weights);
      json out{{"rows", fused.rows()}, {"cols", fused.cols()}, {"fused", rfmask::io::matrix_to_json(fused)}};
      if (mask_size > 0) {
        const auto mask = rfmask::fused_to_mask(fused, hor.width + ver.width, mask_size);
        out["mask_size"] = mask_size;
        out["mask"] = mask.values();
      }
      rfmask::io::write_json(output_path(fuse_out), out);
    } else if (gen_weights->parsed()) {
      rfmask::io::write_weights(output_path(weights_out), rfmask::AttentionWeights::random(dim, heads, layers, weight_seed, scale));
    } else if (evaluate->parsed()) {
      const auto rec = rfmask::io::eval_record_from_json(rfmask::io::read_json(pred_in), rfmask::io::read_json(gt_in));
      const auto report = rfmask::average_precision(rec);
      rfmask::io::write_json(output_path(report_out), rfmask::io::report_to_json(report));
      if (!plot_out.empty()) rfmask::io::write_text(output_path(plot_out), rfmask::io::pr_curves_csv(report));
    } else if (triangulate->parsed()) {
      const auto cams = rfmask::io::cameras_from_json(rfmask::io::read_json(calib_in));
      const auto kps = rfmask::io::keypoints2d_from_json(rfmask::io::read_json(kp_in));
      std::map<std::pair<int, int>, std::vector<std::pair<rfmask::CameraModel, rfmask::Keypoint2D>>> groups;
      for (const auto& k : kps) {
        if (k.camera >= cams.size()) throw std::out_of_range("keypoint references unknown camera");
        groups[{k.keypoint.person.value_or(-1), k.keypoint.joint}].emplace_back(cams[k.camera], k.keypoint);
      }
      std::vector<rfmask::Keypoint3D> out;
      for (const auto& [key, obs] : groups) out.push_back(rfmask::triangulate(obs));
      if (persons > 0) {
        std::vector<rfmask::Vec3> pts;
        for (const auto& k : out) pts.push_back(k.xyz);
        const auto clusters = rfmask::cluster_keypoints(pts, persons, seed);
        for (std::size_t i = 0; i < out.size(); ++i) out[i].person = static_cast<int>(clusters.labels[i]);
      }
      rfmask::io::write_json(output_path(kp_out), rfmask::io::keypoints3d_to_json(out));
    } else if (run->parsed()) {
      auto config = rfmask::read_pipeline_config(config_in);
      if (!run_out_dir.empty()) config.output_dir = run_out_dir;
      if (config.output_dir.empty()) config.output_dir = output_path("rfmask_out");
      if (run->count("--seed")) config.seed = seed;
      const auto result = rfmask::run_pipeline(config);
      std::cout << "frames=" << result.frames.size() << " ap50=" << result.report.ap_50
                << " recall50=" << result.report.recall_50 << " mean_mask_iou=" << result.mean_mask_iou << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "rfmask: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
