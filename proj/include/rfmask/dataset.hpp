#pragma once

// Dataset plumbing: camera/radar timestamp alignment and run-length mask
// encoding.

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rfmask/common.hpp"
#include "rfmask/mask.hpp"

namespace rfmask {

struct FrameIndexPair {
  std::size_t camera_index = 0;
  double camera_time = 0.0;
  std::size_t radar_index = 0;
  double radar_time = 0.0;
  double residual = 0.0;  // |camera_time - radar_time|
};

// Default pairing tolerance: half a radar frame period at 20 fps.
inline constexpr double kDefaultMaxResidual = 0.05;

// Nearest radar frame for every camera frame (ties go to the earlier radar
// frame); pairs whose residual exceeds max_residual are dropped.
inline std::vector<FrameIndexPair> align_streams(const std::vector<double>& cam_ts, const std::vector<double>& radar_ts,
                                                 double max_residual = kDefaultMaxResidual) {
  if (cam_ts.empty() || radar_ts.empty()) throw std::invalid_argument("align_streams: empty stream");
  require(std::is_sorted(cam_ts.begin(), cam_ts.end()) && std::is_sorted(radar_ts.begin(), radar_ts.end()),
          "align_streams: timestamps must be sorted ascending");
  require(max_residual >= 0, "align_streams: max_residual must be >= 0");
  std::vector<FrameIndexPair> out;
  for (std::size_t i = 0; i < cam_ts.size(); ++i) {
    const double t = cam_ts[i];
    const auto it = std::lower_bound(radar_ts.begin(), radar_ts.end(), t);
    std::size_t j = static_cast<std::size_t>(it - radar_ts.begin());
    if (j == radar_ts.size() || (j > 0 && t - radar_ts[j - 1] <= radar_ts[j] - t)) --j;
    const double residual = std::abs(t - radar_ts[j]);
    if (residual <= max_residual) out.push_back({i, t, j, radar_ts[j], residual});
  }
  return out;
}

using RleCounts = std::vector<std::uint32_t>;

// Column-major run lengths, alternating 0-runs and 1-runs, starting with a
// (possibly empty) 0-run.
inline RleCounts rle_encode(const BinaryMask& mask) {
  RleCounts counts;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (std::size_t x = 0; x < mask.width(); ++x)
    for (std::size_t y = 0; y < mask.height(); ++y) {
      const std::uint8_t v = mask(x, y);
      require(v <= 1, "rle_encode: mask must be binary");
      if (v != current) {
        counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  counts.push_back(run);
  return counts;
}

inline BinaryMask rle_decode(const RleCounts& counts, std::size_t width, std::size_t height) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (counts.empty() || total != static_cast<std::uint64_t>(width) * height)
    throw std::runtime_error("rle_decode: run lengths do not cover the declared mask size");
  BinaryMask mask(width, height, 0);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (auto c : counts) {
    for (std::uint32_t i = 0; i < c; ++i, ++pos) mask(pos / height, pos % height) = value;
    value ^= 1;
  }
  return mask;
}

inline std::string rle_to_string(const RleCounts& counts) {
  std::string s;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(counts[i]);
  }
  return s;
}

inline RleCounts rle_from_string(std::string_view s) {
  RleCounts counts;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == ' ') {
      ++i;
      continue;
    }
    std::uint32_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data() + i, s.data() + s.size(), v);
    if (ec != std::errc{} || (ptr != s.data() + s.size() && *ptr != ' '))
      throw std::runtime_error("rle_decode: malformed run-length string");
    counts.push_back(v);
    i = static_cast<std::size_t>(ptr - s.data());
  }
  return counts;
}

inline BinaryMask rle_decode(std::string_view s, std::size_t width, std::size_t height) {
  return rle_decode(rle_from_string(s), width, height);
}

}  // namespace rfmask
