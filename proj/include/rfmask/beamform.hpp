#pragma once

// Horizontal / vertical plane beamforming of raw cubes, time-domain
// background subtraction and magnitude conditioning.

#include <thread>
#include <vector>

#include "rfmask/common.hpp"
#include "rfmask/radar_model.hpp"

namespace rfmask {

// Discretisation of a signal plane. Horizontal grids span (x, y) and are
// lifted to z = lift; vertical grids span (y, z) and are lifted to x = lift.
struct PlaneGrid {
  Orientation plane = Orientation::horizontal;
  Vec2 origin = Vec2::Zero();  // lower corner of cell (0, 0), meters
  double cell_size = 0.05;
  std::size_t width = 1;   // cells along the first plane axis (x or y)
  std::size_t height = 1;  // cells along the second plane axis (y or z)
  double lift = 0.0;

  void validate() const {
    require(cell_size > 0 && std::isfinite(cell_size), "PlaneGrid: cell_size must be > 0");
    require(width >= 1 && height >= 1, "PlaneGrid: width and height must be >= 1");
    require(origin.allFinite() && std::isfinite(lift), "PlaneGrid: origin/lift not finite");
  }

  std::size_t cells() const { return width * height; }

  Vec2 cell_center(std::size_t col, std::size_t row) const {
    return origin + cell_size * Vec2(static_cast<double>(col) + 0.5, static_cast<double>(row) + 0.5);
  }

  Vec3 lift_to_3d(const Vec2& uv) const {
    return plane == Orientation::horizontal ? Vec3(uv.x(), uv.y(), lift) : Vec3(lift, uv.x(), uv.y());
  }

  // Plane coordinates of a 3D point (drops the lifted axis).
  Vec2 project_to_plane(const Vec3& p) const {
    return plane == Orientation::horizontal ? Vec2(p.x(), p.y()) : Vec2(p.y(), p.z());
  }

  // Continuous cell coordinates: cell i spans [i, i+1).
  Vec2 to_cells(const Vec2& uv) const { return (uv - origin) / cell_size; }
  Vec2 to_meters(const Vec2& cells) const { return origin + cells * cell_size; }

  Box2D box_to_cells(const Box2D& b) const {
    const Vec2 lo = to_cells({b.x1, b.y1}), hi = to_cells({b.x2, b.y2});
    return {lo.x(), lo.y(), hi.x(), hi.y()};
  }
  Box2D box_to_meters(const Box2D& b) const {
    const Vec2 lo = to_meters({b.x1, b.y1}), hi = to_meters({b.x2, b.y2});
    return {lo.x(), lo.y(), hi.x(), hi.y()};
  }
  Box2D bounds() const {
    return {origin.x(), origin.y(), origin.x() + cell_size * static_cast<double>(width),
            origin.y() + cell_size * static_cast<double>(height)};
  }

  // 4 m x 4 m room in front of the array at 5 cm cells.
  static PlaneGrid default_horizontal(double plane_height = 0.0) {
    return {Orientation::horizontal, Vec2(-2.0, 0.0), 0.05, 80, 80, plane_height};
  }
  // 4 m of range x 2.5 m of height at 5 cm cells.
  static PlaneGrid default_vertical(double x_offset = 0.0) {
    return {Orientation::vertical, Vec2(0.0, 0.0), 0.05, 80, 50, x_offset};
  }
};

// Per-frame grid of values, row-major within a frame, frames outermost.
template <typename T>
class Heatmap {
 public:
  using value_type = T;

  Heatmap() = default;
  Heatmap(PlaneGrid grid, std::size_t frames) : grid_(grid), frames_(frames) {
    grid_.validate();
    values_.assign(grid_.cells() * frames_, T{});
  }

  const PlaneGrid& grid() const { return grid_; }
  std::size_t width() const { return grid_.width; }
  std::size_t height() const { return grid_.height; }
  std::size_t frames() const { return frames_; }

  std::size_t index(std::size_t col, std::size_t row, std::size_t t) const {
    return col + grid_.width * (row + grid_.height * t);
  }
  T& at(std::size_t col, std::size_t row, std::size_t t) { return values_[index(col, row, t)]; }
  const T& at(std::size_t col, std::size_t row, std::size_t t) const { return values_[index(col, row, t)]; }

  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }

  // Copy of a single frame as a one-frame heatmap.
  Heatmap frame(std::size_t t) const {
    if (t >= frames_) throw std::out_of_range("Heatmap::frame: frame index out of range");
    Heatmap out(grid_, 1);
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(t * grid_.cells()), grid_.cells(),
                out.values_.begin());
    return out;
  }

 private:
  PlaneGrid grid_;
  std::size_t frames_ = 0;
  std::vector<T> values_;
};

using ComplexHeatmap = Heatmap<cplx>;
using RealHeatmap = Heatmap<double>;

struct BeamformOptions {
  unsigned threads = 0;  // 0 = hardware concurrency
};

// value(c, t) = sum_m sum_k s(k, m, t) * exp(j 2 pi d_m(c) / lambda_k).
// The steering phasor is advanced along k by a constant per-sample rotation,
// which agrees with direct evaluation to ~1e-13 relative.
inline ComplexHeatmap beamform_plane(const RadarFrameCube& cube, const PlaneGrid& grid,
                                     const BeamformOptions& opts = {}) {
  grid.validate();
  if (cube.frames() == 0 || cube.data().empty())
    throw std::invalid_argument("beamform_plane: empty cube");
  if (cube.array().orientation != grid.plane)
    throw std::invalid_argument("beamform_plane: cube array orientation does not match grid plane");

  const std::size_t K = cube.samples(), M = cube.antennas(), T = cube.frames();
  const ChirpConfig& cfg = cube.config();
  const double f0 = cfg.frequency(0);
  const double df = cfg.bandwidth / static_cast<double>(K - 1);

  ComplexHeatmap out(grid, T);

  auto process_rows = [&](std::size_t row_begin, std::size_t row_end) {
    std::vector<cplx> steering(K * M);
    for (std::size_t row = row_begin; row < row_end; ++row) {
      for (std::size_t col = 0; col < grid.width; ++col) {
        const Vec3 p = grid.lift_to_3d(grid.cell_center(col, row));
        for (std::size_t m = 0; m < M; ++m) {
          const double d = round_trip_distance(cube.array(), m, p);
          const cplx step = std::polar(1.0, 2.0 * kPi * d * df / kSpeedOfLight);
          cplx ph = std::polar(1.0, 2.0 * kPi * d * f0 / kSpeedOfLight);
          cplx* sv = steering.data() + m * K;
          for (std::size_t k = 0; k < K; ++k) {
            sv[k] = ph;
            ph *= step;
          }
        }
        for (std::size_t t = 0; t < T; ++t) {
          const cplx* s = &cube.at(0, 0, t);
          cplx acc{};
          for (std::size_t m = 0; m < M; ++m) {
            cplx partial{};
            for (std::size_t k = 0; k < K; ++k) partial += s[m * K + k] * steering[m * K + k];
            acc += partial;
          }
          out.at(col, row, t) = acc;
        }
      }
    }
  };

  unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, grid.height));
  if (threads <= 1) {
    process_rows(0, grid.height);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (grid.height + threads - 1) / threads;
    for (unsigned i = 0; i < threads; ++i) {
      const std::size_t b = i * chunk, e = std::min(grid.height, b + chunk);
      if (b < e) pool.emplace_back(process_rows, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

// Frame t of the output is h[t + lag] - h[t]; static paths cancel.
template <typename T>
Heatmap<T> background_subtract(const Heatmap<T>& h, std::size_t lag = 1) {
  require(lag >= 1, "background_subtract: lag must be >= 1");
  if (lag >= h.frames()) throw std::invalid_argument("background_subtract: lag must be < frame count");
  const std::size_t n = h.grid().cells();
  Heatmap<T> out(h.grid(), h.frames() - lag);
  const auto& in = h.values();
  auto& dst = out.values();
  for (std::size_t t = 0; t < out.frames(); ++t)
    for (std::size_t i = 0; i < n; ++i) dst[t * n + i] = in[(t + lag) * n + i] - in[t * n + i];
  return out;
}

// |value| scaled per frame into [0, 1]; all-zero frames stay zero.
template <typename T>
RealHeatmap magnitude_normalize(const Heatmap<T>& h) {
  RealHeatmap out(h.grid(), h.frames());
  const std::size_t n = h.grid().cells();
  for (std::size_t t = 0; t < h.frames(); ++t) {
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = std::abs(h.values()[t * n + i]);
      out.values()[t * n + i] = a;
      peak = std::max(peak, a);
    }
    if (peak > 0)
      for (std::size_t i = 0; i < n; ++i) out.values()[t * n + i] /= peak;
  }
  return out;
}

// Linear index of the largest-magnitude cell in frame t (first on ties).
template <typename T>
std::pair<std::size_t, std::size_t> argmax_cell(const Heatmap<T>& h, std::size_t t) {
  const std::size_t n = h.grid().cells();
  std::size_t best = 0;
  double best_v = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::abs(h.values()[t * n + i]);
    if (a > best_v) {
      best_v = a;
      best = i;
    }
  }
  return {best % h.width(), best / h.width()};
}

}  // namespace rfmask
