#pragma once

// Classical human detection on horizontal heatmaps, vertical box derivation,
// RoIAlign feature cropping and the detection loss.

#include <array>
#include <deque>
#include <vector>

#include "rfmask/beamform.hpp"
#include "rfmask/common.hpp"
#include "rfmask/mask.hpp"

namespace rfmask {

enum class DetectionClass : std::uint8_t { background = 0, human = 1 };

struct Detection {
  Box2D box;        // meters on the signal plane
  Box2D box_cells;  // same box in continuous cell coordinates
  double score = 0.0;
  DetectionClass cls = DetectionClass::human;
  std::size_t peak_col = 0, peak_row = 0;
};

struct CfarParams {
  std::size_t guard = 2;
  std::size_t train = 4;
  double threshold_factor = 3.0;
  double box_extent = 0.6;  // meters, side of the square box around each peak
};

// Frame t of a heatmap as a plain grid.
template <typename T>
Grid2<T> frame_grid(const Heatmap<T>& h, std::size_t t = 0) {
  if (t >= h.frames()) throw std::out_of_range("frame_grid: frame index out of range");
  Grid2<T> g(h.width(), h.height());
  const std::size_t n = h.grid().cells();
  std::copy_n(h.values().begin() + static_cast<std::ptrdiff_t>(t * n), n, g.values().begin());
  return g;
}

namespace detail {

// Mean over the training ring: Chebyshev distance in (guard, guard + train],
// truncated at the grid border.
inline double ring_mean(const Grid2<double>& g, std::size_t col, std::size_t row, std::size_t guard,
                        std::size_t train) {
  const long outer = static_cast<long>(guard + train);
  const long inner = static_cast<long>(guard);
  const long w = static_cast<long>(g.width()), h = static_cast<long>(g.height());
  double sum = 0.0;
  std::size_t count = 0;
  for (long dy = -outer; dy <= outer; ++dy) {
    const long y = static_cast<long>(row) + dy;
    if (y < 0 || y >= h) continue;
    for (long dx = -outer; dx <= outer; ++dx) {
      if (std::max(std::abs(dx), std::abs(dy)) <= inner) continue;
      const long x = static_cast<long>(col) + dx;
      if (x < 0 || x >= w) continue;
      sum += g(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace detail

// Cell-averaging CFAR. Seeds (value > factor * ring mean) are merged into
// 8-connected components; each component yields one detection centred on
// its peak with score s / (1 + s), s = peak / ring mean.
inline std::vector<Detection> cfar_detect(const Grid2<double>& values, const PlaneGrid& grid,
                                          const CfarParams& params = {}) {
  grid.validate();
  require(values.width() == grid.width && values.height() == grid.height, "cfar_detect: grid shape mismatch");
  require(params.threshold_factor >= 1.0, "cfar_detect: threshold_factor must be >= 1");
  require(params.box_extent > 0, "cfar_detect: box_extent must be > 0");
  const std::size_t span = 2 * (params.guard + params.train) + 1;
  if (params.train == 0 || span > grid.width || span > grid.height)
    throw std::invalid_argument("cfar_detect: guard/train rings exceed the grid");
  for (double v : values.values()) require(v >= 0 && std::isfinite(v), "cfar_detect: heatmap must be real and non-negative");

  const std::size_t w = grid.width, h = grid.height;
  Grid2<std::uint8_t> seed(w, h, 0);
  Grid2<double> ratio(w, h, 0.0);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double mean = detail::ring_mean(values, c, r, params.guard, params.train);
      const double v = values(c, r);
      if (v > params.threshold_factor * mean) {
        seed(c, r) = 1;
        ratio(c, r) = mean > 0 ? v / mean : std::numeric_limits<double>::infinity();
      }
    }

  std::vector<Detection> out;
  Grid2<std::uint8_t> visited(w, h, 0);
  const Box2D bounds = grid.bounds();
  for (std::size_t r0 = 0; r0 < h; ++r0)
    for (std::size_t c0 = 0; c0 < w; ++c0) {
      if (!seed(c0, r0) || visited(c0, r0)) continue;
      std::size_t best_c = c0, best_r = r0;
      std::deque<std::pair<std::size_t, std::size_t>> queue{{c0, r0}};
      visited(c0, r0) = 1;
      while (!queue.empty()) {
        const auto [c, r] = queue.front();
        queue.pop_front();
        if (values(c, r) > values(best_c, best_r) ||
            (values(c, r) == values(best_c, best_r) && (r < best_r || (r == best_r && c < best_c)))) {
          best_c = c;
          best_r = r;
        }
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const long x = static_cast<long>(c) + dx, y = static_cast<long>(r) + dy;
            if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) continue;
            const auto ux = static_cast<std::size_t>(x), uy = static_cast<std::size_t>(y);
            if (seed(ux, uy) && !visited(ux, uy)) {
              visited(ux, uy) = 1;
              queue.emplace_back(ux, uy);
            }
          }
      }
      const double s = ratio(best_c, best_r);
      const Vec2 center = grid.cell_center(best_c, best_r);
      const double half = 0.5 * params.box_extent;
      Detection d;
      d.box = {std::max(bounds.x1, center.x() - half), std::max(bounds.y1, center.y() - half),
               std::min(bounds.x2, center.x() + half), std::min(bounds.y2, center.y() + half)};
      d.box_cells = grid.box_to_cells(d.box);
      d.score = std::isinf(s) ? 1.0 : s / (1.0 + s);
      d.peak_col = best_c;
      d.peak_row = best_r;
      out.push_back(d);
    }
  return out;
}

inline std::vector<Detection> cfar_detect(const RealHeatmap& h, std::size_t t, const CfarParams& params = {}) {
  return cfar_detect(frame_grid(h, t), h.grid(), params);
}

// Greedy suppression in descending score order.
inline std::vector<Detection> non_max_suppression(std::vector<Detection> dets, double iou_threshold = 0.5) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    bool keep = true;
    for (const auto& k : kept)
      if (box_iou(d.box, k.box) > iou_threshold) {
        keep = false;
        break;
      }
    if (keep) kept.push_back(d);
  }
  return kept;
}

struct HeightRange {
  double z_min = 0.0;
  double z_max = 2.0;
};

// (y, z) box: range span from the horizontal box, height from the fixed range.
inline Box2D vertical_box_from_horizontal(const Box2D& hbox, const HeightRange& range = {}) {
  if (!(range.z_min < range.z_max)) throw std::invalid_argument("vertical_box_from_horizontal: inverted height range");
  return {hbox.y1, range.z_min, hbox.y2, range.z_max};
}

// 3D box from a horizontal (x, y) box and its vertical (y, z) counterpart.
inline Box3D compose_box3d(const Box2D& hbox, const Box2D& vbox) {
  return Box3D(Vec3(hbox.x1, hbox.y1, vbox.y1), Vec3(hbox.x2, hbox.y2, vbox.y2));
}

// RoIAlign: box in continuous cell coordinates, P x P bins, each the mean
// of 2 x 2 bilinear samples at regular sub-bin positions.
inline Grid2<double> roi_crop(const Grid2<double>& input, const Box2D& box_cells, std::size_t out_size) {
  require(out_size >= 1, "roi_crop: output size must be >= 1");
  require(input.size() > 0, "roi_crop: empty input");
  if (!(box_cells.width() > 0 && box_cells.height() > 0)) throw std::invalid_argument("roi_crop: degenerate box");
  constexpr int kSamples = 2;
  Grid2<double> out(out_size, out_size);
  const double bw = box_cells.width() / static_cast<double>(out_size);
  const double bh = box_cells.height() / static_cast<double>(out_size);
  for (std::size_t j = 0; j < out_size; ++j)
    for (std::size_t i = 0; i < out_size; ++i) {
      double acc = 0.0;
      for (int sy = 0; sy < kSamples; ++sy)
        for (int sx = 0; sx < kSamples; ++sx) {
          const double u = box_cells.x1 + bw * (static_cast<double>(i) + (sx + 0.5) / kSamples);
          const double v = box_cells.y1 + bh * (static_cast<double>(j) + (sy + 0.5) / kSamples);
          acc += bilinear_sample(input, u, v);
        }
      out(i, j) = acc / (kSamples * kSamples);
    }
  return out;
}

inline double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

inline double smooth_l1_grad(double x) {
  return std::abs(x) < 1.0 ? x : (x > 0 ? 1.0 : -1.0);
}

inline constexpr double kProbabilityClip = 1e-7;

inline double clip_probability(double p) { return std::clamp(p, kProbabilityClip, 1.0 - kProbabilityClip); }

// Binary cross entropy with probabilities clipped to [1e-7, 1 - 1e-7].
inline double binary_cross_entropy(double p, double target) {
  const double q = clip_probability(p);
  return -(target * std::log(q) + (1.0 - target) * std::log(1.0 - q));
}

// d BCE / d p; zero where the clip is active.
inline double binary_cross_entropy_grad(double p, double target) {
  if (p < kProbabilityClip || p > 1.0 - kProbabilityClip) return 0.0;
  return -target / p + (1.0 - target) / (1.0 - p);
}

using BoxCoords = std::array<double, 4>;

struct PredictedBox {
  double human_score = 0.0;  // predicted probability of the human class
  BoxCoords coords{};        // v
};

struct DetectionTarget {
  int label = 0;       // u: 0 background, 1 human
  BoxCoords coords{};  // t^u
};

struct DetectionLossOptions {
  double lambda_det = 1.0;
};

namespace detail {

inline void check_detection_inputs(const std::vector<PredictedBox>& pred, const std::vector<DetectionTarget>& targets) {
  if (pred.size() != targets.size()) throw std::invalid_argument("detection_loss: prediction/target lists misaligned");
  require(!pred.empty(), "detection_loss: no boxes");
  for (const auto& p : pred)
    require(p.human_score >= 0 && p.human_score <= 1, "detection_loss: score outside [0, 1]");
  for (const auto& t : targets) require(t.label == 0 || t.label == 1, "detection_loss: label must be 0 or 1");
}

}  // namespace detail

// Mean over boxes of BCE(p, p^u) + lambda_det [u >= 1] sum_i smooth_l1(v_i - t_i).
inline double detection_loss(const std::vector<PredictedBox>& pred, const std::vector<DetectionTarget>& targets,
                             const DetectionLossOptions& opts = {}) {
  detail::check_detection_inputs(pred, targets);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double l = binary_cross_entropy(pred[i].human_score, targets[i].label >= 1 ? 1.0 : 0.0);
    if (targets[i].label >= 1) {
      double box = 0.0;
      for (int c = 0; c < 4; ++c) box += smooth_l1(pred[i].coords[c] - targets[i].coords[c]);
      l += opts.lambda_det * box;
    }
    total += l;
  }
  return total / static_cast<double>(pred.size());
}

// Gradient of detection_loss w.r.t. each box's predicted coordinates.
inline std::vector<BoxCoords> detection_loss_coord_grad(const std::vector<PredictedBox>& pred,
                                                        const std::vector<DetectionTarget>& targets,
                                                        const DetectionLossOptions& opts = {}) {
  detail::check_detection_inputs(pred, targets);
  std::vector<BoxCoords> g(pred.size(), BoxCoords{});
  const double scale = opts.lambda_det / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (targets[i].label >= 1)
      for (int c = 0; c < 4; ++c) g[i][c] = scale * smooth_l1_grad(pred[i].coords[c] - targets[i].coords[c]);
  return g;
}

}  // namespace rfmask
