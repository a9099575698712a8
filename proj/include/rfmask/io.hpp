#pragma once

// File formats: radar cubes (RFC1), heatmaps (RFH1), attention weights, and
// the JSON documents exchanged between pipeline stages.
//
// All binary formats are little-endian.

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfmask/beamform.hpp"
#include "rfmask/dataset.hpp"
#include "rfmask/detect.hpp"
#include "rfmask/fusion.hpp"
#include "rfmask/geometry.hpp"
#include "rfmask/metrics.hpp"
#include "rfmask/radar_model.hpp"

namespace rfmask::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

using json = nlohmann::json;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("unexpected end of file");
  return v;
}

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
  char buf[4];
  if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
    throw FormatError(std::string("bad magic, expected ") + magic);
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return is;
}

inline std::uint32_t to_u32(std::size_t v) {
  if (v > 0xffffffffu) throw FormatError("dimension does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

// ---------------------------------------------------------------- RFC1 cube
// "RFC1", u32 K, M, T, f64 start_freq, bandwidth, sample_period, fps, then
// K*M*T (re, im) f32 pairs with k fastest and t slowest. Array geometry is
// not stored; readers supply it.

inline void write_cube(std::ostream& os, const RadarFrameCube& cube) {
  os.write("RFC1", 4);
  detail::put(os, detail::to_u32(cube.samples()));
  detail::put(os, detail::to_u32(cube.antennas()));
  detail::put(os, detail::to_u32(cube.frames()));
  const ChirpConfig& c = cube.config();
  detail::put(os, c.start_freq);
  detail::put(os, c.bandwidth);
  detail::put(os, c.sample_period);
  detail::put(os, c.frames_per_second);
  for (const cplx& v : cube.data()) {
    detail::put(os, static_cast<float>(v.real()));
    detail::put(os, static_cast<float>(v.imag()));
  }
  if (!os) throw std::runtime_error("write_cube: stream error");
}

struct CubeHeader {
  std::uint32_t samples = 0, antennas = 0, frames = 0;
  ChirpConfig config;
};

inline CubeHeader read_cube_header(std::istream& is) {
  detail::expect_magic(is, "RFC1");
  CubeHeader h;
  h.samples = detail::get<std::uint32_t>(is);
  h.antennas = detail::get<std::uint32_t>(is);
  h.frames = detail::get<std::uint32_t>(is);
  h.config.num_samples = h.samples;
  h.config.start_freq = detail::get<double>(is);
  h.config.bandwidth = detail::get<double>(is);
  h.config.sample_period = detail::get<double>(is);
  h.config.frames_per_second = detail::get<double>(is);
  return h;
}

// `array` must have as many elements as the file declares antennas.
inline RadarFrameCube read_cube(std::istream& is, const VirtualArray& array) {
  const CubeHeader h = read_cube_header(is);
  if (array.size() != h.antennas) throw FormatError("read_cube: array size does not match file");
  RadarFrameCube cube(h.config, array, h.frames);
  for (cplx& v : cube.data()) {
    const float re = detail::get<float>(is);
    const float im = detail::get<float>(is);
    v = cplx(re, im);
  }
  return cube;
}

inline void write_cube(const std::string& path, const RadarFrameCube& cube) {
  auto os = detail::open_out(path);
  write_cube(os, cube);
}

// ------------------------------------------------------------- RFH1 heatmap
// "RFH1", u32 W, H, T, u8 plane (0 horizontal, 1 vertical), u8 value kind
// (0 complex, 1 real), f64 origin_u, origin_v, cell_size, f64 lift, then
// f32 values (re, im pairs when complex) row-major within each frame,
// frames outermost.

enum class HeatmapKind : std::uint8_t { complex = 0, real = 1 };

template <typename T>
void write_heatmap(std::ostream& os, const Heatmap<T>& h) {
  const PlaneGrid& g = h.grid();
  os.write("RFH1", 4);
  detail::put(os, detail::to_u32(g.width));
  detail::put(os, detail::to_u32(g.height));
  detail::put(os, detail::to_u32(h.frames()));
  detail::put(os, static_cast<std::uint8_t>(g.plane));
  constexpr bool is_complex = std::is_same_v<T, cplx>;
  detail::put(os, static_cast<std::uint8_t>(is_complex ? HeatmapKind::complex : HeatmapKind::real));
  detail::put(os, g.origin.x());
  detail::put(os, g.origin.y());
  detail::put(os, g.cell_size);
  detail::put(os, g.lift);
  for (const T& v : h.values()) {
    if constexpr (is_complex) {
      detail::put(os, static_cast<float>(v.real()));
      detail::put(os, static_cast<float>(v.imag()));
    } else {
      detail::put(os, static_cast<float>(v));
    }
  }
  if (!os) throw std::runtime_error("write_heatmap: stream error");
}

template <typename T>
void write_heatmap(const std::string& path, const Heatmap<T>& h) {
  auto os = detail::open_out(path);
  write_heatmap(os, h);
}

struct LoadedHeatmap {
  HeatmapKind kind = HeatmapKind::complex;
  ComplexHeatmap complex_values;  // set when kind == complex
  RealHeatmap real_values;        // set when kind == real

  RealHeatmap normalized() const {
    return kind == HeatmapKind::complex ? magnitude_normalize(complex_values) : magnitude_normalize(real_values);
  }
  const PlaneGrid& grid() const { return kind == HeatmapKind::complex ? complex_values.grid() : real_values.grid(); }
};

inline LoadedHeatmap read_heatmap(std::istream& is) {
  detail::expect_magic(is, "RFH1");
  PlaneGrid g;
  g.width = detail::get<std::uint32_t>(is);
  g.height = detail::get<std::uint32_t>(is);
  const std::uint32_t frames = detail::get<std::uint32_t>(is);
  const auto plane = detail::get<std::uint8_t>(is);
  const auto kind = detail::get<std::uint8_t>(is);
  if (plane > 1 || kind > 1) throw FormatError("read_heatmap: bad plane or kind tag");
  g.plane = static_cast<Orientation>(plane);
  g.origin.x() = detail::get<double>(is);
  g.origin.y() = detail::get<double>(is);
  g.cell_size = detail::get<double>(is);
  g.lift = detail::get<double>(is);
  LoadedHeatmap out;
  out.kind = static_cast<HeatmapKind>(kind);
  if (out.kind == HeatmapKind::complex) {
    out.complex_values = ComplexHeatmap(g, frames);
    for (cplx& v : out.complex_values.values()) {
      const float re = detail::get<float>(is);
      const float im = detail::get<float>(is);
      v = cplx(re, im);
    }
  } else {
    out.real_values = RealHeatmap(g, frames);
    for (double& v : out.real_values.values()) v = detail::get<float>(is);
  }
  return out;
}

inline LoadedHeatmap read_heatmap(const std::string& path) {
  auto is = detail::open_in(path);
  return read_heatmap(is);
}

// ------------------------------------------------------------------- JSON

inline json read_json(const std::string& path) {
  auto is = detail::open_in(path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  auto os = detail::open_out(path);
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
inline json to_json(const Box2D& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

inline Box2D box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw FormatError("expected a box [x1, y1, x2, y2]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

// Scene description. Either a bare list of scatterers or an object:
// {"frames": T, "noise_std": s, "radar": {...}, "scatterers": [...]}.
// Scatterer: {"position": [x,y,z], "reflectivity": r, "static": bool,
//             "trajectory": [[dx,dy,dz], ...] | "velocity": [vx,vy,vz],
//             "visibility": [bool, ...]}
struct RadarSetup {
  ChirpConfig config;
  std::size_t antennas = 86;
  Vec3 mount = Vec3(0.0, 0.0, 1.0);  // array phase centre

  VirtualArray array(Orientation o) const { return VirtualArray::default_for(config, mount, o, antennas); }
};

struct Scene {
  std::size_t frames = 1;
  double noise_std = 0.0;
  RadarSetup horizontal{ChirpConfig::horizontal()};
  RadarSetup vertical{ChirpConfig::vertical()};
  std::vector<Scatterer> scatterers;
};

inline ChirpConfig chirp_from_json(const json& j, ChirpConfig base) {
  base.start_freq = j.value("start_freq", base.start_freq);
  base.bandwidth = j.value("bandwidth", base.bandwidth);
  base.num_samples = j.value("num_samples", base.num_samples);
  base.sample_period = j.value("sample_period", base.sample_period);
  base.frames_per_second = j.value("fps", base.frames_per_second);
  base.validate();
  return base;
}

inline RadarSetup radar_from_json(const json& j, RadarSetup base) {
  base.config = chirp_from_json(j, base.config);
  base.antennas = j.value("antennas", base.antennas);
  if (j.contains("mount")) base.mount = vec3_from_json(j["mount"]);
  require(base.antennas >= 1, "radar: antennas must be >= 1");
  return base;
}

inline Scene scene_from_json(const json& doc) {
  Scene s;
  const json* list = &doc;
  bool explicit_frames = false;
  if (doc.is_object()) {
    if (doc.contains("frames")) {
      s.frames = doc["frames"].get<std::size_t>();
      explicit_frames = true;
    }
    s.noise_std = doc.value("noise_std", 0.0);
    if (doc.contains("radar")) {
      const json& r = doc["radar"];
      if (r.contains("horizontal") || r.contains("vertical")) {
        if (r.contains("horizontal")) s.horizontal = radar_from_json(r["horizontal"], s.horizontal);
        if (r.contains("vertical")) s.vertical = radar_from_json(r["vertical"], s.vertical);
      } else {
        s.horizontal = radar_from_json(r, s.horizontal);
        s.vertical.antennas = s.horizontal.antennas;
        s.vertical.mount = s.horizontal.mount;
        s.vertical.config.num_samples = s.horizontal.config.num_samples;
        s.vertical.config.frames_per_second = s.horizontal.config.frames_per_second;
      }
    }
    if (!doc.contains("scatterers")) throw FormatError("scene: missing \"scatterers\"");
    list = &doc["scatterers"];
  }
  if (!list->is_array()) throw FormatError("scene: scatterers must be a list");
  if (!explicit_frames)
    for (const auto& j : *list)
      if (j.contains("trajectory")) s.frames = std::max(s.frames, j["trajectory"].size());
  require(s.frames >= 1, "scene: frames must be >= 1");

  const double fps = s.horizontal.config.frames_per_second;
  for (const auto& j : *list) {
    if (!j.is_object() || !j.contains("position")) throw FormatError("scene: scatterer needs a position");
    Scatterer sc;
    sc.position = vec3_from_json(j["position"]);
    sc.reflectivity = j.value("reflectivity", 1.0);
    if (j.contains("trajectory")) {
      for (const auto& d : j["trajectory"]) sc.trajectory.push_back(vec3_from_json(d));
    } else if (j.contains("velocity")) {
      const Vec3 v = vec3_from_json(j["velocity"]);
      for (std::size_t t = 0; t < s.frames; ++t) sc.trajectory.push_back(v * (static_cast<double>(t) / fps));
    }
    sc.is_static = j.value("static", sc.trajectory.empty());
    if (j.contains("visibility"))
      for (const auto& v : j["visibility"]) sc.visibility.push_back(v.get<bool>());
    s.scatterers.push_back(std::move(sc));
  }
  return s;
}

inline Scene read_scene(const std::string& path) {
  try {
    return scene_from_json(read_json(path));
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline PlaneGrid grid_from_json(const json& j, PlaneGrid base) {
  if (j.contains("origin")) {
    const auto& o = j["origin"];
    if (!o.is_array() || o.size() != 2) throw FormatError("grid: origin must be [u, v]");
    base.origin = Vec2(o[0].get<double>(), o[1].get<double>());
  }
  base.cell_size = j.value("cell_size", base.cell_size);
  base.width = j.value("width", base.width);
  base.height = j.value("height", base.height);
  base.lift = j.value("lift", base.lift);
  base.validate();
  return base;
}

// ------------------------------------------------------------- detections
// [{"frame": i, "score": s, "box_m": [x1,y1,x2,y2], "box_cells": [...]}]

inline json detections_to_json(const std::vector<std::vector<Detection>>& per_frame,
                               const std::vector<std::size_t>& frame_ids = {}) {
  json out = json::array();
  for (std::size_t f = 0; f < per_frame.size(); ++f)
    for (const auto& d : per_frame[f])
      out.push_back({{"frame", frame_ids.empty() ? f : frame_ids[f]},
                     {"score", d.score},
                     {"box_m", to_json(d.box)},
                     {"box_cells", to_json(d.box_cells)}});
  return out;
}

// Prediction and ground-truth files share the layout above; "score" is
// ignored for ground truth and "box" is accepted as an alias of "box_m".
inline EvalRecord eval_record_from_json(const json& pred, const json& gt) {
  if (!pred.is_array() || !gt.is_array()) throw FormatError("evaluate: expected JSON lists");
  std::size_t frames = 0;
  auto frame_of = [](const json& e) {
    if (!e.contains("frame")) throw FormatError("evaluate: entry missing \"frame\"");
    return e["frame"].get<std::size_t>();
  };
  auto box_of = [](const json& e) {
    if (e.contains("box_m")) return box_from_json(e["box_m"]);
    if (e.contains("box")) return box_from_json(e["box"]);
    throw FormatError("evaluate: entry missing \"box_m\"");
  };
  for (const auto& e : pred) frames = std::max(frames, frame_of(e) + 1);
  for (const auto& e : gt) frames = std::max(frames, frame_of(e) + 1);
  EvalRecord rec(frames);
  for (const auto& e : pred) rec[frame_of(e)].detections.push_back({box_of(e), e.at("score").get<double>()});
  for (const auto& e : gt) rec[frame_of(e)].ground_truth.push_back(box_of(e));
  return rec;
}

inline std::string threshold_key(double t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

inline json report_to_json(const ApReport& r) {
  json curves = json::object();
  for (const auto& [thr, pts] : r.pr_curves) {
    json arr = json::array();
    for (const auto& p : pts) arr.push_back({{"recall", p.recall}, {"precision", p.precision}, {"score", p.score}});
    curves[threshold_key(thr)] = arr;
  }
  return {{"thresholds", r.thresholds}, {"ap", r.ap},           {"recall", r.recall},
          {"ap_50_95", r.ap_50_95},     {"ap_50", r.ap_50},     {"ap_75", r.ap_75},
          {"recall_50", r.recall_50},   {"num_gt", r.num_gt},   {"num_detections", r.num_detections},
          {"pr_curves", curves}};
}

// iou_threshold,rank,recall,precision,score
inline std::string pr_curves_csv(const ApReport& r) {
  std::ostringstream os;
  os << "iou_threshold,rank,recall,precision,score\n";
  char buf[160];
  for (const auto& [thr, pts] : r.pr_curves)
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.2f,%zu,%.17g,%.17g,%.17g\n", thr, i + 1, pts[i].recall, pts[i].precision,
                    pts[i].score);
      os << buf;
    }
  return os.str();
}

// ---------------------------------------------------------------- cameras
// JSON list of 3x4 matrices, each either nested rows or 12 row-major numbers.

inline std::vector<CameraModel> cameras_from_json(const json& j) {
  if (!j.is_array()) throw FormatError("calibration: expected a list of matrices");
  std::vector<CameraModel> cams;
  for (const auto& m : j) {
    std::vector<double> flat;
    for (const auto& row : m) {
      if (row.is_array())
        for (const auto& v : row) flat.push_back(v.get<double>());
      else
        flat.push_back(row.get<double>());
    }
    if (flat.size() != 12) throw FormatError("calibration: each matrix needs 12 entries");
    Matrix34 p;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) p(r, c) = flat[static_cast<std::size_t>(r * 4 + c)];
    cams.emplace_back(p);
  }
  return cams;
}

inline json cameras_to_json(const std::vector<CameraModel>& cams) {
  json out = json::array();
  for (const auto& c : cams) {
    json m = json::array();
    for (int r = 0; r < 3; ++r) m.push_back({c.matrix()(r, 0), c.matrix()(r, 1), c.matrix()(r, 2), c.matrix()(r, 3)});
    out.push_back(m);
  }
  return out;
}

// 2D keypoints: [{"camera": i, "joint": j, "person": p (optional), "x": u, "y": v}]
struct CameraKeypoint {
  std::size_t camera = 0;
  Keypoint2D keypoint;
};

inline std::vector<CameraKeypoint> keypoints2d_from_json(const json& j) {
  if (!j.is_array()) throw FormatError("keypoints: expected a list");
  std::vector<CameraKeypoint> out;
  for (const auto& e : j) {
    CameraKeypoint k;
    k.camera = e.at("camera").get<std::size_t>();
    k.keypoint.joint = e.at("joint").get<int>();
    if (e.contains("person") && !e["person"].is_null()) k.keypoint.person = e["person"].get<int>();
    k.keypoint.xy = Vec2(e.at("x").get<double>(), e.at("y").get<double>());
    out.push_back(k);
  }
  return out;
}

inline json keypoints3d_to_json(const std::vector<Keypoint3D>& kps) {
  json out = json::array();
  for (const auto& k : kps)
    out.push_back({{"joint", k.joint},
                   {"person", k.person ? json(*k.person) : json(nullptr)},
                   {"x", k.xyz.x()},
                   {"y", k.xyz.y()},
                   {"z", k.xyz.z()}});
  return out;
}

// ---------------------------------------------------------- feature blocks
// {"channels": C, "height": H, "width": W, "origin": "hor"|"ver", "values": [...]}
// values in (c, h, w) order with w fastest.

inline json feature_block_to_json(const FeatureBlock& f) {
  return {{"channels", f.channels},
          {"height", f.height},
          {"width", f.width},
          {"origin", f.origin == Orientation::horizontal ? "hor" : "ver"},
          {"values", f.values}};
}

inline FeatureBlock feature_block_from_json(const json& j) {
  FeatureBlock f;
  f.channels = j.at("channels").get<std::size_t>();
  f.height = j.at("height").get<std::size_t>();
  f.width = j.at("width").get<std::size_t>();
  f.origin = j.value("origin", std::string("hor")) == "ver" ? Orientation::vertical : Orientation::horizontal;
  f.values = j.at("values").get<std::vector<double>>();
  f.validate();
  return f;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

// ----------------------------------------------------------------- weights
// One line of JSON header, newline, then little-endian f32 data. Per layer,
// in header "order": wq, bq, wk, bk, wv, bv, wo, bo; matrices dim x dim
// row-major, biases dim.

inline const std::vector<std::string>& weight_order() {
  static const std::vector<std::string> order{"wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"};
  return order;
}

inline void write_weights(std::ostream& os, const AttentionWeights& w) {
  w.validate();
  const json header{{"format", "rfmask-attention"},
                    {"layers", w.layers.size()},
                    {"heads", w.heads},
                    {"dim", w.dim},
                    {"dtype", "f32le"},
                    {"order", weight_order()}};
  os << header.dump() << '\n';
  for (const auto& l : w.layers) {
    for (const auto& [m, b] : {std::pair{&l.wq, &l.bq}, {&l.wk, &l.bk}, {&l.wv, &l.bv}, {&l.wo, &l.bo}}) {
      for (Eigen::Index r = 0; r < m->rows(); ++r)
        for (Eigen::Index c = 0; c < m->cols(); ++c) detail::put(os, static_cast<float>((*m)(r, c)));
      for (Eigen::Index i = 0; i < b->size(); ++i) detail::put(os, static_cast<float>((*b)(i)));
    }
  }
  if (!os) throw std::runtime_error("write_weights: stream error");
}

inline void write_weights(const std::string& path, const AttentionWeights& w) {
  auto os = detail::open_out(path);
  write_weights(os, w);
}

inline AttentionWeights read_weights(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("weights: missing header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("weights: bad header: ") + e.what());
  }
  if (header.value("format", "") != "rfmask-attention") throw FormatError("weights: unknown format");
  AttentionWeights w;
  w.dim = header.at("dim").get<std::size_t>();
  w.heads = header.at("heads").get<std::size_t>();
  const auto layers = header.at("layers").get<std::size_t>();
  const auto d = static_cast<Eigen::Index>(w.dim);
  for (std::size_t i = 0; i < layers; ++i) {
    AttentionLayer l;
    for (auto [m, b] : {std::pair{&l.wq, &l.bq}, {&l.wk, &l.bk}, {&l.wv, &l.bv}, {&l.wo, &l.bo}}) {
      m->resize(d, d);
      b->resize(d);
      for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c < d; ++c) (*m)(r, c) = detail::get<float>(is);
      for (Eigen::Index k = 0; k < d; ++k) (*b)(k) = detail::get<float>(is);
    }
    w.layers.push_back(std::move(l));
  }
  w.validate();
  return w;
}

inline AttentionWeights read_weights(const std::string& path) {
  auto is = detail::open_in(path);
  return read_weights(is);
}

// Rounds every weight through f32 so in-memory weights match a written file.
inline AttentionWeights quantize_f32(AttentionWeights w) {
  for (auto& l : w.layers)
    for (auto [m, b] : {std::pair{&l.wq, &l.bq}, {&l.wk, &l.bk}, {&l.wv, &l.bv}, {&l.wo, &l.bo}}) {
      *m = m->cast<float>().cast<double>();
      *b = b->cast<float>().cast<double>();
    }
  return w;
}

}  // namespace rfmask::io
