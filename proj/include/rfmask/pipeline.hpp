#pragma once

// End-to-end driver: simulate -> beamform (hor, ver) -> background subtract
// -> CFAR -> vertical boxes -> RoIAlign -> fusion -> mask pasting ->
// evaluation.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rfmask/beamform.hpp"
#include "rfmask/dataset.hpp"
#include "rfmask/detect.hpp"
#include "rfmask/fusion.hpp"
#include "rfmask/geometry.hpp"
#include "rfmask/io.hpp"
#include "rfmask/metrics.hpp"
#include "rfmask/radar_model.hpp"

namespace rfmask {

struct DetectorConfig {
  CfarParams cfar;
  double min_peak = 0.5;  // detections below this normalised peak are dropped
  double nms_iou = 0.5;
};

struct FusionConfig {
  std::size_t heads = 4;
  std::size_t layers = 4;
  double weight_scale = 1.0;
  std::optional<std::uint64_t> seed;  // defaults to the pipeline seed
  std::string weights_file;           // overrides seeded weights when set
};

struct CameraStreamConfig {
  double fps = 10.0;
  double max_residual = kDefaultMaxResidual;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string output_dir;
  io::Scene scene;
  PlaneGrid horizontal_grid;
  PlaneGrid vertical_grid;
  std::size_t background_lag = 1;
  DetectorConfig detector;
  HeightRange height_range;
  std::size_t roi_size = 8;
  FusionConfig fusion;
  std::size_t mask_size = 28;
  ResultPlane result_plane;
  CameraStreamConfig camera;
  bool write_cubes = true;
  bool write_heatmaps = true;

  void validate() const {
    require(background_lag >= 1, "config: background_lag must be >= 1");
    require(scene.frames > background_lag, "config: need more radar frames than the background lag");
    require(roi_size >= 1 && mask_size >= 1, "config: roi_size and mask_size must be >= 1");
    require(camera.fps > 0, "config: camera fps must be > 0");
    require(height_range.z_min < height_range.z_max, "config: inverted height range");
    require(horizontal_grid.plane == Orientation::horizontal && vertical_grid.plane == Orientation::vertical,
            "config: grid planes mislabelled");
    horizontal_grid.validate();
    vertical_grid.validate();
    result_plane.validate();
    scene.horizontal.config.validate();
    scene.vertical.config.validate();
    require(fusion.heads >= 1 && fusion.layers >= 1, "config: fusion heads/layers must be >= 1");
    require(roi_size % fusion.heads == 0, "config: roi_size (feature dim) must be divisible by fusion heads");
  }
};

// Builds a config from JSON. `base_dir` resolves relative file references.
inline PipelineConfig pipeline_config_from_json(const io::json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw io::FormatError("config: expected a JSON object");
  PipelineConfig c;
  c.seed = j.value("seed", std::uint64_t{0});
  c.output_dir = j.value("output_dir", std::string{});
  if (j.contains("scene"))
    c.scene = io::scene_from_json(j["scene"]);
  else if (j.contains("scene_file"))
    c.scene = io::read_scene((base_dir / j["scene_file"].get<std::string>()).string());
  else
    throw io::FormatError("config: missing \"scene\" or \"scene_file\"");

  c.horizontal_grid = PlaneGrid::default_horizontal(c.scene.horizontal.mount.z());
  c.vertical_grid = PlaneGrid::default_vertical(c.scene.vertical.mount.x());
  if (j.contains("grids")) {
    const auto& g = j["grids"];
    if (g.contains("horizontal")) c.horizontal_grid = io::grid_from_json(g["horizontal"], c.horizontal_grid);
    if (g.contains("vertical")) c.vertical_grid = io::grid_from_json(g["vertical"], c.vertical_grid);
  }
  c.background_lag = j.value("background_lag", c.background_lag);
  if (j.contains("detector")) {
    const auto& d = j["detector"];
    c.detector.cfar.guard = d.value("guard", c.detector.cfar.guard);
    c.detector.cfar.train = d.value("train", c.detector.cfar.train);
    c.detector.cfar.threshold_factor = d.value("threshold_factor", c.detector.cfar.threshold_factor);
    c.detector.cfar.box_extent = d.value("box_extent", c.detector.cfar.box_extent);
    c.detector.min_peak = d.value("min_peak", c.detector.min_peak);
    c.detector.nms_iou = d.value("nms_iou", c.detector.nms_iou);
  }
  if (j.contains("height_range")) {
    const auto& h = j["height_range"];
    if (!h.is_array() || h.size() != 2) throw io::FormatError("config: height_range must be [z_min, z_max]");
    c.height_range = {h[0].get<double>(), h[1].get<double>()};
  }
  c.roi_size = j.value("roi_size", c.roi_size);
  if (j.contains("fusion")) {
    const auto& f = j["fusion"];
    c.fusion.heads = f.value("heads", c.fusion.heads);
    c.fusion.layers = f.value("layers", c.fusion.layers);
    c.fusion.weight_scale = f.value("weight_scale", c.fusion.weight_scale);
    if (f.contains("seed")) c.fusion.seed = f["seed"].get<std::uint64_t>();
    if (f.contains("weights_file")) c.fusion.weights_file = (base_dir / f["weights_file"].get<std::string>()).string();
  }
  c.mask_size = j.value("mask_size", c.mask_size);
  auto& rp = c.result_plane;
  if (j.contains("result_plane")) {
    const auto& r = j["result_plane"];
    rp.r = r.value("r", rp.r);
    rp.pixel_scale = r.value("pixel_scale", rp.pixel_scale);
    rp.image_width = r.value("width", rp.image_width);
    rp.image_height = r.value("height", rp.image_height);
  }
  // Offsets default to centring the optical axis in the image.
  rp.p_x = static_cast<double>(rp.image_width) / (2.0 * rp.pixel_scale);
  rp.p_y = static_cast<double>(rp.image_height) / (2.0 * rp.pixel_scale);
  if (j.contains("result_plane")) {
    rp.p_x = j["result_plane"].value("p_x", rp.p_x);
    rp.p_y = j["result_plane"].value("p_y", rp.p_y);
  }
  if (j.contains("camera")) {
    c.camera.fps = j["camera"].value("fps", c.camera.fps);
    c.camera.max_residual = j["camera"].value("max_residual", c.camera.max_residual);
  }
  c.write_cubes = j.value("write_cubes", c.write_cubes);
  c.write_heatmaps = j.value("write_heatmaps", c.write_heatmaps);
  c.validate();
  return c;
}

inline PipelineConfig read_pipeline_config(const std::string& path) {
  try {
    return pipeline_config_from_json(io::read_json(path), std::filesystem::path(path).parent_path());
  } catch (const io::json::exception& e) {
    throw io::FormatError(path + ": " + e.what());
  }
}

// Radar world (x lateral, y range, z up) to the result-plane frame
// (X right, Y down, Z depth) with the projection centre at `eye`.
inline Vec3 world_to_view(const Vec3& p, const Vec3& eye) {
  return {p.x() - eye.x(), -(p.z() - eye.z()), p.y() - eye.y()};
}

inline Box3D world_box_to_view(const Box3D& b, const Vec3& eye) {
  const Vec3 a = world_to_view(b.min, eye), c = world_to_view(b.max, eye);
  return Box3D(a.cwiseMin(c), a.cwiseMax(c));
}

struct FrameOutput {
  std::size_t camera_frame = 0;
  std::size_t radar_frame = 0;  // index into the raw radar stream
  std::vector<Detection> detections;
  std::vector<Box2D> gt_boxes;        // horizontal, meters
  std::vector<Vec3> true_positions;   // moving scatterers at this frame
  BinaryMask pasted;                  // union of pasted detection masks
  BinaryMask gt_mask;                 // union of projected ground-truth boxes
  double mask_iou = 0.0;
  bool contains_truth = false;        // some detection box contains every true position
};

struct PipelineResult {
  std::vector<FrameOutput> frames;
  ApReport report;
  double contains_fraction = 0.0;
  double mean_mask_iou = 0.0;
  std::size_t skipped_projections = 0;
};

namespace detail {

inline FeatureBlock horizontal_features(const Grid2<double>& crop) {
  // columns along x become width, rows along y become height
  FeatureBlock f(1, crop.height(), crop.width(), Orientation::horizontal);
  for (std::size_t y = 0; y < crop.height(); ++y)
    for (std::size_t x = 0; x < crop.width(); ++x) f.at(0, y, x) = crop(x, y);
  return f;
}

inline FeatureBlock vertical_features(const Grid2<double>& crop) {
  // shared range axis (y) becomes height, elevation (z) becomes width
  FeatureBlock f(1, crop.width(), crop.height(), Orientation::vertical);
  for (std::size_t z = 0; z < crop.height(); ++z)
    for (std::size_t y = 0; y < crop.width(); ++y) f.at(0, y, z) = crop(y, z);
  return f;
}

inline std::optional<Box2D> project_world_box(const ResultPlane& plane, const Box3D& world, const Vec3& eye) {
  const Box3D view = world_box_to_view(world, eye);
  if (view.min.z() <= kProjectionEpsilon) return std::nullopt;
  return plane_box_to_pixels(plane, project_box3d(plane, view));
}

}  // namespace detail

inline AttentionWeights pipeline_weights(const PipelineConfig& c) {
  if (!c.fusion.weights_file.empty()) return io::read_weights(c.fusion.weights_file);
  return io::quantize_f32(AttentionWeights::random(c.roi_size, c.fusion.heads, c.fusion.layers,
                                                   c.fusion.seed.value_or(c.seed + 2), c.fusion.weight_scale));
}

inline constexpr const char* kIncompleteMarker = "_INCOMPLETE";

// Runs every stage; when output_dir is set, artifacts are written there. A
// marker file flags the directory until the run completes.
inline PipelineResult run_pipeline(const PipelineConfig& c) {
  c.validate();
  namespace fs = std::filesystem;
  const bool write = !c.output_dir.empty();
  const fs::path out(c.output_dir);
  if (write) {
    fs::create_directories(out);
    io::write_text((out / kIncompleteMarker).string(), "pipeline did not finish\n");
  }

  const io::Scene& scene = c.scene;
  const VirtualArray hor_array = scene.horizontal.array(Orientation::horizontal);
  const VirtualArray ver_array = scene.vertical.array(Orientation::vertical);
  const RadarFrameCube hor_cube = synthesize_frame_cube(scene.scatterers, scene.horizontal.config, hor_array,
                                                        scene.frames, {scene.noise_std, c.seed});
  const RadarFrameCube ver_cube = synthesize_frame_cube(scene.scatterers, scene.vertical.config, ver_array,
                                                        scene.frames, {scene.noise_std, c.seed + 1});
  if (write && c.write_cubes) {
    io::write_cube((out / "hor.rfc").string(), hor_cube);
    io::write_cube((out / "ver.rfc").string(), ver_cube);
  }

  const ComplexHeatmap hor_raw = beamform_plane(hor_cube, c.horizontal_grid);
  const ComplexHeatmap ver_raw = beamform_plane(ver_cube, c.vertical_grid);
  if (write && c.write_heatmaps) {
    io::write_heatmap((out / "hor.rfh").string(), hor_raw);
    io::write_heatmap((out / "ver.rfh").string(), ver_raw);
  }
  const RealHeatmap hor = magnitude_normalize(background_subtract(hor_raw, c.background_lag));
  const RealHeatmap ver = magnitude_normalize(background_subtract(ver_raw, c.background_lag));

  // Differenced frame i belongs to radar frame i + lag.
  const double radar_fps = scene.horizontal.config.frames_per_second;
  std::vector<double> radar_ts, cam_ts;
  for (std::size_t i = 0; i < hor.frames(); ++i)
    radar_ts.push_back(static_cast<double>(i + c.background_lag) / radar_fps);
  const double last = static_cast<double>(scene.frames - 1) / radar_fps;
  for (std::size_t n = 0; static_cast<double>(n) / c.camera.fps <= last; ++n)
    cam_ts.push_back(static_cast<double>(n) / c.camera.fps);
  const auto pairs = align_streams(cam_ts, radar_ts, c.camera.max_residual);

  const AttentionWeights weights = pipeline_weights(c);
  const std::size_t seq_len = 2 * c.roi_size;
  const Vec3 eye = scene.horizontal.mount;
  const ResultPlane& plane = c.result_plane;
  const double half = 0.5 * c.detector.cfar.box_extent;

  PipelineResult res;
  EvalRecord record;
  std::size_t contains = 0;
  double iou_sum = 0.0;
  for (const auto& pair : pairs) {
    FrameOutput fo;
    fo.camera_frame = pair.camera_index;
    fo.radar_frame = pair.radar_index + c.background_lag;
    fo.pasted = BinaryMask(plane.image_width, plane.image_height, 0);
    fo.gt_mask = BinaryMask(plane.image_width, plane.image_height, 0);

    auto dets = cfar_detect(hor, pair.radar_index, c.detector.cfar);
    const Grid2<double> hor_frame = frame_grid(hor, pair.radar_index);
    const Grid2<double> ver_frame = frame_grid(ver, pair.radar_index);
    std::erase_if(dets, [&](const Detection& d) { return hor_frame(d.peak_col, d.peak_row) < c.detector.min_peak; });
    fo.detections = non_max_suppression(std::move(dets), c.detector.nms_iou);

    for (const auto& d : fo.detections) {
      const Box2D vbox = vertical_box_from_horizontal(d.box, c.height_range);
      const Box3D world = compose_box3d(d.box, vbox);
      const auto hcrop = roi_crop(hor_frame, d.box_cells, c.roi_size);
      const auto vcrop = roi_crop(ver_frame, c.vertical_grid.box_to_cells(vbox), c.roi_size);
      const Eigen::MatrixXd fused =
          fuse(detail::horizontal_features(hcrop), detail::vertical_features(vcrop), weights);
      const MaskGrid mask = fused_to_mask(fused, seq_len, c.mask_size);
      const auto pix = detail::project_world_box(plane, world, eye);
      const bool on_canvas = pix && pix->x2 > 0 && pix->y2 > 0 && pix->x1 < static_cast<double>(plane.image_width) &&
                             pix->y1 < static_cast<double>(plane.image_height);
      if (!on_canvas) {
        ++res.skipped_projections;
        continue;
      }
      paste_mask(mask, *pix, fo.pasted);
    }

    for (const auto& s : scene.scatterers) {
      if (s.is_static || !s.visible_at(fo.radar_frame)) continue;
      const Vec3 p = s.position_at(fo.radar_frame);
      fo.true_positions.push_back(p);
      const Box2D gt{p.x() - half, p.y() - half, p.x() + half, p.y() + half};
      fo.gt_boxes.push_back(gt);
      const Box3D world = compose_box3d(gt, vertical_box_from_horizontal(gt, c.height_range));
      if (const auto pix = detail::project_world_box(plane, world, eye)) {
        const BinaryMask m = box_mask(*pix, plane.image_width, plane.image_height);
        for (std::size_t i = 0; i < m.size(); ++i) fo.gt_mask.values()[i] |= m.values()[i];
      }
    }

    fo.contains_truth = !fo.true_positions.empty();
    for (const auto& p : fo.true_positions) {
      bool hit = false;
      for (const auto& d : fo.detections) hit = hit || d.box.contains(p.x(), p.y());
      fo.contains_truth = fo.contains_truth && hit;
    }
    contains += fo.contains_truth;
    fo.mask_iou = mask_iou(fo.pasted, fo.gt_mask);
    iou_sum += fo.mask_iou;

    FrameEval fe;
    for (const auto& d : fo.detections) fe.detections.push_back({d.box, d.score});
    fe.ground_truth = fo.gt_boxes;
    record.push_back(std::move(fe));
    res.frames.push_back(std::move(fo));
  }
  res.report = average_precision(record);
  if (!res.frames.empty()) {
    res.contains_fraction = static_cast<double>(contains) / static_cast<double>(res.frames.size());
    res.mean_mask_iou = iou_sum / static_cast<double>(res.frames.size());
  }

  if (write) {
    io::json dets = io::json::array(), gts = io::json::array(), masks = io::json::array();
    for (const auto& f : res.frames) {
      for (const auto& d : f.detections)
        dets.push_back({{"frame", f.camera_frame},
                        {"radar_frame", f.radar_frame},
                        {"score", d.score},
                        {"box_m", io::to_json(d.box)},
                        {"box_cells", io::to_json(d.box_cells)}});
      for (const auto& g : f.gt_boxes) gts.push_back({{"frame", f.camera_frame}, {"box_m", io::to_json(g)}});
      masks.push_back({{"frame", f.camera_frame},
                       {"width", f.pasted.width()},
                       {"height", f.pasted.height()},
                       {"rle", rle_to_string(rle_encode(f.pasted))},
                       {"gt_rle", rle_to_string(rle_encode(f.gt_mask))},
                       {"mask_iou", f.mask_iou}});
    }
    io::json report = io::report_to_json(res.report);
    report["frames_evaluated"] = res.frames.size();
    report["contains_fraction"] = res.contains_fraction;
    report["mean_mask_iou"] = res.mean_mask_iou;
    report["skipped_projections"] = res.skipped_projections;
    io::write_json((out / "detections.json").string(), dets);
    io::write_json((out / "ground_truth.json").string(), gts);
    io::write_json((out / "masks.json").string(), masks);
    io::write_json((out / "report.json").string(), report);
    io::write_text((out / "pr_curves.csv").string(), io::pr_curves_csv(res.report));
    fs::remove(out / kIncompleteMarker);
  }
  return res;
}

}  // namespace rfmask
