#pragma once

#include <cstdint>
#include <vector>

#include "rfmask/common.hpp"

namespace rfmask {

// Dense row-major 2D grid.
template <typename T>
class Grid2 {
 public:
  Grid2() = default;
  Grid2(std::size_t width, std::size_t height, T fill = T{})
      : width_(width), height_(height), values_(width * height, fill) {}

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  bool same_shape(const Grid2& o) const { return width_ == o.width_ && height_ == o.height_; }

  T& operator()(std::size_t x, std::size_t y) { return values_[y * width_ + x]; }
  const T& operator()(std::size_t x, std::size_t y) const { return values_[y * width_ + x]; }

  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }

  bool operator==(const Grid2&) const = default;

 private:
  std::size_t width_ = 0, height_ = 0;
  std::vector<T> values_;
};

// m x m probabilities (or any real-valued map).
using MaskGrid = Grid2<double>;
// Full-frame binary silhouette, values in {0, 1}.
using BinaryMask = Grid2<std::uint8_t>;

// Bilinear sample with pixel-centre convention: value (x, y) sits at
// continuous coordinate (x + 0.5, y + 0.5). Coordinates are clamped to the
// grid so the border value extends outward.
template <typename T>
double bilinear_sample(const Grid2<T>& g, double u, double v) {
  const double x = std::clamp(u - 0.5, 0.0, static_cast<double>(g.width() - 1));
  const double y = std::clamp(v - 0.5, 0.0, static_cast<double>(g.height() - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, g.width() - 1);
  const std::size_t y1 = std::min(y0 + 1, g.height() - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = (1 - fx) * static_cast<double>(g(x0, y0)) + fx * static_cast<double>(g(x1, y0));
  const double bot = (1 - fx) * static_cast<double>(g(x0, y1)) + fx * static_cast<double>(g(x1, y1));
  return (1 - fy) * top + fy * bot;
}

// Resample to a new size by bilinear interpolation at output pixel centres.
template <typename T>
MaskGrid bilinear_resize(const Grid2<T>& g, std::size_t width, std::size_t height) {
  require(g.size() > 0 && width > 0 && height > 0, "bilinear_resize: empty grid");
  MaskGrid out(width, height);
  const double sx = static_cast<double>(g.width()) / static_cast<double>(width);
  const double sy = static_cast<double>(g.height()) / static_cast<double>(height);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      out(x, y) = bilinear_sample(g, (static_cast<double>(x) + 0.5) * sx, (static_cast<double>(y) + 0.5) * sy);
  return out;
}

}  // namespace rfmask
