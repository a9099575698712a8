#pragma once

// Result-plane projection, 3D box projection, multi-view triangulation,
// K-means person association and mask pasting.

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "rfmask/common.hpp"
#include "rfmask/mask.hpp"

namespace rfmask {

// Virtual imaging plane Z = r with in-plane offsets (p_x, p_y), all in
// meters. pixel_scale converts plane meters to image pixels.
struct ResultPlane {
  double r = 1.0;
  double p_x = 0.0;
  double p_y = 0.0;
  double pixel_scale = 100.0;
  std::size_t image_width = 320;
  std::size_t image_height = 240;

  void validate() const {
    require(r != 0 && std::isfinite(r), "ResultPlane: r must be nonzero");
    require(pixel_scale > 0, "ResultPlane: pixel_scale must be > 0");
  }
};

inline constexpr double kProjectionEpsilon = 1e-9;

// Pin-hole style projection onto Z = r with perspective division:
// x_p = r x / z + p_x, y_p = r y / z + p_y.
inline Vec2 project_point(const ResultPlane& plane, const Vec3& p) {
  plane.validate();
  if (!(p.z() > kProjectionEpsilon))
    throw std::domain_error("project_point: point at or behind the projection center");
  return {plane.r * p.x() / p.z() + plane.p_x, plane.r * p.y() / p.z() + plane.p_y};
}

// Axis-aligned hull of the eight projected corners.
inline Box2D project_box3d(const ResultPlane& plane, const Box3D& b) {
  Box2D out{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 v((corner & 1) ? b.max.x() : b.min.x(), (corner & 2) ? b.max.y() : b.min.y(),
                 (corner & 4) ? b.max.z() : b.min.z());
    const Vec2 q = project_point(plane, v);
    out.x1 = std::min(out.x1, q.x());
    out.y1 = std::min(out.y1, q.y());
    out.x2 = std::max(out.x2, q.x());
    out.y2 = std::max(out.y2, q.y());
  }
  return out;
}

inline Box2D plane_box_to_pixels(const ResultPlane& plane, const Box2D& b) {
  return {b.x1 * plane.pixel_scale, b.y1 * plane.pixel_scale, b.x2 * plane.pixel_scale, b.y2 * plane.pixel_scale};
}

using Matrix34 = Eigen::Matrix<double, 3, 4>;

class CameraModel {
 public:
  CameraModel() = default;
  explicit CameraModel(const Matrix34& m) : m_(m) {
    require(m.allFinite(), "CameraModel: projection matrix not finite");
    const Eigen::Matrix3d a = m.leftCols<3>();
    const double scale = a.cwiseAbs().maxCoeff();
    require(scale > 0 && std::abs(a.determinant()) > 1e-12 * scale * scale * scale,
            "CameraModel: left 3x3 block is singular");
  }

  const Matrix34& matrix() const { return m_; }

  Vec2 project(const Vec3& p) const {
    const Eigen::Vector3d h = m_ * p.homogeneous();
    if (std::abs(h.z()) < 1e-12) throw std::domain_error("CameraModel::project: point on the principal plane");
    return h.hnormalized();
  }

  bool operator==(const CameraModel& o) const { return m_ == o.m_; }

 private:
  Matrix34 m_ = Matrix34::Zero();
};

struct Keypoint2D {
  Vec2 xy = Vec2::Zero();  // pixels
  int joint = 0;
  std::optional<int> person;
};

struct Keypoint3D {
  Vec3 xyz = Vec3::Zero();  // meters
  int joint = 0;
  std::optional<int> person;
};

struct TriangulationOptions {
  bool refine = true;
  int max_iterations = 10;
  double step_tolerance = 1e-10;
};

namespace detail {

inline double reprojection_cost(const std::vector<std::pair<CameraModel, Vec2>>& obs, const Vec3& x) {
  double c = 0.0;
  for (const auto& [cam, kp] : obs) c += (cam.project(x) - kp).squaredNorm();
  return c;
}

}  // namespace detail

// Minimises sum_i |pi(M_i k) - k_i|^2: linear DLT initialisation followed by
// Gauss-Newton on the reprojection error.
inline Vec3 triangulate(const std::vector<std::pair<CameraModel, Vec2>>& obs,
                        const TriangulationOptions& opts = {}) {
  if (obs.size() < 2) throw std::invalid_argument("triangulate: need at least two views");
  bool all_same = true;
  for (const auto& o : obs) all_same = all_same && o.first == obs.front().first;
  if (all_same) throw std::domain_error("triangulate: all cameras identical (rank-deficient system)");

  Eigen::MatrixXd a(2 * obs.size(), 4);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const Matrix34& p = obs[i].first.matrix();
    const Vec2& k = obs[i].second;
    a.row(2 * i) = k.x() * p.row(2) - p.row(0);
    a.row(2 * i + 1) = k.y() * p.row(2) - p.row(1);
  }
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double n = a.row(r).norm();
    if (n > 0) a.row(r) /= n;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(2) <= 1e-10 * sv(0)) throw std::domain_error("triangulate: rank-deficient DLT system (parallel rays)");
  const Eigen::Vector4d xh = svd.matrixV().col(3);
  if (std::abs(xh(3)) < 1e-14 * xh.norm()) throw std::domain_error("triangulate: point at infinity");
  Vec3 x = xh.hnormalized();

  if (!opts.refine) return x;
  double cost = detail::reprojection_cost(obs, x);
  for (int it = 0; it < opts.max_iterations; ++it) {
    Eigen::MatrixXd jac(2 * obs.size(), 3);
    Eigen::VectorXd res(2 * obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const Matrix34& p = obs[i].first.matrix();
      const Eigen::Vector3d h = p * x.homogeneous();
      const double u = h.x() / h.z(), v = h.y() / h.z();
      res(2 * i) = u - obs[i].second.x();
      res(2 * i + 1) = v - obs[i].second.y();
      jac.row(2 * i) = (p.block<1, 3>(0, 0) - u * p.block<1, 3>(2, 0)) / h.z();
      jac.row(2 * i + 1) = (p.block<1, 3>(1, 0) - v * p.block<1, 3>(2, 0)) / h.z();
    }
    const Eigen::Vector3d step = (jac.transpose() * jac).ldlt().solve(-jac.transpose() * res);
    if (!step.allFinite()) break;
    const Vec3 candidate = x + step;
    const double c = detail::reprojection_cost(obs, candidate);
    if (!(c <= cost)) break;
    x = candidate;
    cost = c;
    if (step.norm() < opts.step_tolerance) break;
  }
  return x;
}

inline Keypoint3D triangulate(const std::vector<std::pair<CameraModel, Keypoint2D>>& obs,
                              const TriangulationOptions& opts = {}) {
  std::vector<std::pair<CameraModel, Vec2>> plain;
  plain.reserve(obs.size());
  for (const auto& [cam, kp] : obs) plain.emplace_back(cam, kp.xy);
  Keypoint3D out;
  out.xyz = triangulate(plain, opts);
  if (!obs.empty()) {
    out.joint = obs.front().second.joint;
    out.person = obs.front().second.person;
  }
  return out;
}

struct ClusterResult {
  std::vector<std::size_t> labels;
  std::vector<Vec3> centroids;
  std::vector<double> inertia_history;  // after each assignment step
  int iterations = 0;

  double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }
};

// Lloyd's K-means with farthest-point seeding; the first centre is drawn
// from a seeded RNG so the result is reproducible.
inline ClusterResult cluster_keypoints(const std::vector<Vec3>& points, std::size_t k, std::uint64_t seed,
                                       int max_iterations = 100) {
  require(k >= 1, "cluster_keypoints: K must be >= 1");
  if (k > points.size()) throw std::invalid_argument("cluster_keypoints: K exceeds point count");
  const std::size_t n = points.size();

  ClusterResult res;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<bool> chosen(n, false);
  std::size_t first = pick(rng);
  res.centroids.push_back(points[first]);
  chosen[first] = true;
  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = (points[i] - points[first]).squaredNorm();
  while (res.centroids.size() < k) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i)
      if (!chosen[i] && (best == n || nearest[i] > nearest[best])) best = i;
    chosen[best] = true;
    res.centroids.push_back(points[best]);
    for (std::size_t i = 0; i < n; ++i)
      nearest[i] = std::min(nearest[i], (points[i] - points[best]).squaredNorm());
  }

  res.labels.assign(n, k);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = (points[i] - res.centroids[0]).squaredNorm();
      for (std::size_t c = 1; c < k; ++c) {
        const double d = (points[i] - res.centroids[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      changed = changed || res.labels[i] != best;
      res.labels[i] = best;
      inertia += best_d;
    }
    res.inertia_history.push_back(inertia);
    res.iterations = it + 1;
    if (!changed) break;

    std::vector<Vec3> sums(k, Vec3::Zero());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[res.labels[i]] += points[i];
      ++counts[res.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0) res.centroids[c] = sums[c] / static_cast<double>(counts[c]);
  }
  return res;
}

// Resizes an m x m probability mask onto `box` (pixels), thresholds at 0.5
// and ORs the result into `canvas`. Pixels whose centre falls in
// [x1, x2) x [y1, y2) are written; the rest of the box is clipped.
inline void paste_mask(const MaskGrid& mask, const Box2D& box, BinaryMask& canvas) {
  require(mask.size() > 0, "paste_mask: empty mask");
  if (!(box.width() > 0 && box.height() > 0)) throw std::invalid_argument("paste_mask: empty box");
  const double cw = static_cast<double>(canvas.width()), ch = static_cast<double>(canvas.height());
  if (box.x2 <= 0 || box.y2 <= 0 || box.x1 >= cw || box.y1 >= ch)
    throw std::invalid_argument("paste_mask: box does not intersect the canvas");

  const auto first_px = [](double lo) { return static_cast<long>(std::ceil(lo - 0.5)); };
  const long x_begin = std::max(0L, first_px(box.x1));
  const long x_end = std::min(static_cast<long>(canvas.width()), first_px(box.x2));
  const long y_begin = std::max(0L, first_px(box.y1));
  const long y_end = std::min(static_cast<long>(canvas.height()), first_px(box.y2));
  const double sx = static_cast<double>(mask.width()) / box.width();
  const double sy = static_cast<double>(mask.height()) / box.height();
  for (long y = y_begin; y < y_end; ++y) {
    const double v = (static_cast<double>(y) + 0.5 - box.y1) * sy;
    for (long x = x_begin; x < x_end; ++x) {
      const double u = (static_cast<double>(x) + 0.5 - box.x1) * sx;
      if (bilinear_sample(mask, u, v) >= 0.5) canvas(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 1;
    }
  }
}

inline BinaryMask paste_mask(const MaskGrid& mask, const Box2D& box, std::size_t width, std::size_t height) {
  BinaryMask canvas(width, height, 0);
  paste_mask(mask, box, canvas);
  return canvas;
}

// Filled axis-aligned box raster using the same pixel-centre rule as paste_mask.
inline BinaryMask box_mask(const Box2D& box, std::size_t width, std::size_t height) {
  BinaryMask canvas(width, height, 0);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double cx = static_cast<double>(x) + 0.5, cy = static_cast<double>(y) + 0.5;
      if (cx >= box.x1 && cx < box.x2 && cy >= box.y1 && cy < box.y2) canvas(x, y) = 1;
    }
  return canvas;
}

}  // namespace rfmask
