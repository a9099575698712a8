#pragma once

// Radar hardware description and synthesis of raw FMCW chirp-sample cubes
// from point-scatterer scenes.

#include <cstdint>
#include <random>
#include <vector>

#include "rfmask/common.hpp"

namespace rfmask {

struct ChirpConfig {
  double start_freq = 77e9;        // Hz
  double bandwidth = 1.23e9;       // Hz
  std::size_t num_samples = 64;    // K
  double sample_period = 1.25e-7;  // s
  double frames_per_second = 20.0;

  void validate() const {
    require(std::isfinite(start_freq) && start_freq > 0, "ChirpConfig: start_freq must be > 0");
    require(std::isfinite(bandwidth) && bandwidth > 0, "ChirpConfig: bandwidth must be > 0");
    require(num_samples >= 2, "ChirpConfig: need at least 2 samples per sweep");
    require(sample_period > 0, "ChirpConfig: sample_period must be > 0");
    require(frames_per_second > 0, "ChirpConfig: frames_per_second must be > 0");
  }

  // Linear sweep over [start_freq, start_freq + bandwidth] in K-1 steps.
  double frequency(std::size_t k) const {
    return start_freq + bandwidth * static_cast<double>(k) / static_cast<double>(num_samples - 1);
  }
  double wavelength(std::size_t k) const { return kSpeedOfLight / frequency(k); }
  double center_frequency() const { return start_freq + 0.5 * bandwidth; }

  // Preset for the horizontal radar (77 - 78.23 GHz).
  static ChirpConfig horizontal() { return ChirpConfig{}; }
  // Preset for the vertical radar (79 - 80.23 GHz), offset to avoid mutual interference.
  static ChirpConfig vertical() {
    ChirpConfig c;
    c.start_freq = 79e9;
    return c;
  }
};

enum class Orientation : std::uint8_t { horizontal = 0, vertical = 1 };

struct VirtualArray {
  std::vector<Vec3> element_positions;
  Orientation orientation = Orientation::horizontal;

  std::size_t size() const { return element_positions.size(); }

  Vec3 phase_center() const {
    Vec3 c = Vec3::Zero();
    for (const auto& p : element_positions) c += p;
    return c / static_cast<double>(element_positions.size());
  }

  void validate() const {
    require(!element_positions.empty(), "VirtualArray: need at least one element");
    for (const auto& p : element_positions)
      require(p.allFinite(), "VirtualArray: element position not finite");
  }

  // Uniform linear array centred on `center`: along x for a horizontal
  // array, along z for a vertical one.
  static VirtualArray uniform_linear(std::size_t count, double spacing, const Vec3& center,
                                     Orientation orientation) {
    require(count >= 1, "VirtualArray: need at least one element");
    require(spacing > 0, "VirtualArray: spacing must be > 0");
    VirtualArray a;
    a.orientation = orientation;
    const Vec3 axis = orientation == Orientation::horizontal ? Vec3::UnitX() : Vec3::UnitZ();
    const double mid = 0.5 * static_cast<double>(count - 1);
    for (std::size_t m = 0; m < count; ++m)
      a.element_positions.push_back(center + (static_cast<double>(m) - mid) * spacing * axis);
    return a;
  }

  // 86x1 virtual array. A lambda/2 MIMO virtual array has its monostatic
  // phase centres lambda/4 apart; with round-trip phase any wider spacing
  // aliases into grating lobes.
  static VirtualArray default_for(const ChirpConfig& cfg, const Vec3& center,
                                  Orientation orientation, std::size_t count = 86) {
    const double quarter_lambda = 0.25 * kSpeedOfLight / cfg.center_frequency();
    return uniform_linear(count, quarter_lambda, center, orientation);
  }
};

struct Scatterer {
  Vec3 position = Vec3::Zero();
  double reflectivity = 1.0;
  bool is_static = true;
  // Per-frame displacement from `position`; empty means no motion.
  std::vector<Vec3> trajectory;
  // Per-frame visibility (specular reflection drop-outs); empty means always visible.
  std::vector<bool> visibility;

  Vec3 position_at(std::size_t t) const {
    return trajectory.empty() ? position : Vec3(position + trajectory[t]);
  }
  bool visible_at(std::size_t t) const { return visibility.empty() || visibility[t]; }
};

// Raw samples s(k, m, t); k varies fastest, t slowest.
class RadarFrameCube {
 public:
  RadarFrameCube() = default;
  RadarFrameCube(ChirpConfig config, VirtualArray array, std::size_t frames)
      : config_(std::move(config)), array_(std::move(array)), frames_(frames) {
    config_.validate();
    array_.validate();
    data_.assign(config_.num_samples * array_.size() * frames_, cplx{});
  }

  std::size_t samples() const { return config_.num_samples; }
  std::size_t antennas() const { return array_.size(); }
  std::size_t frames() const { return frames_; }
  const ChirpConfig& config() const { return config_; }
  const VirtualArray& array() const { return array_; }

  std::size_t index(std::size_t k, std::size_t m, std::size_t t) const {
    return k + samples() * (m + antennas() * t);
  }
  cplx& at(std::size_t k, std::size_t m, std::size_t t) { return data_[index(k, m, t)]; }
  const cplx& at(std::size_t k, std::size_t m, std::size_t t) const { return data_[index(k, m, t)]; }

  std::vector<cplx>& data() { return data_; }
  const std::vector<cplx>& data() const { return data_; }

 private:
  ChirpConfig config_;
  VirtualArray array_;
  std::size_t frames_ = 0;
  std::vector<cplx> data_;
};

// Monostatic virtual-element round trip: 2 * |element_m - p|.
inline double round_trip_distance(const VirtualArray& array, std::size_t m, const Vec3& p) {
  if (m >= array.size()) throw std::out_of_range("round_trip_distance: antenna index out of range");
  require(p.allFinite(), "round_trip_distance: point not finite");
  const double d = (array.element_positions[m] - p).norm();
  if (d < 1e-12) throw std::domain_error("round_trip_distance: point coincides with an array element");
  return 2.0 * d;
}

struct SynthesisOptions {
  double noise_std = 0.0;  // total std of circular complex Gaussian noise per sample
  std::uint64_t seed = 0;
};

// Each visible scatterer adds reflectivity / R^2 * exp(-j 2 pi d_m(p_t) / lambda_k),
// R being the distance from the array phase center. Noise is added last.
inline RadarFrameCube synthesize_frame_cube(const std::vector<Scatterer>& scene, const ChirpConfig& config,
                                            const VirtualArray& array, std::size_t frames,
                                            const SynthesisOptions& opts = {}) {
  require(frames >= 1, "synthesize_frame_cube: need at least one frame");
  require(opts.noise_std >= 0, "synthesize_frame_cube: noise_std must be >= 0");
  for (const auto& s : scene) {
    require(std::isfinite(s.reflectivity) && s.reflectivity >= 0, "Scatterer: reflectivity must be finite and >= 0");
    require(s.position.allFinite(), "Scatterer: position not finite");
    if (!s.trajectory.empty() && s.trajectory.size() != frames)
      throw std::invalid_argument("synthesize_frame_cube: trajectory length does not match frame count");
    if (!s.visibility.empty() && s.visibility.size() != frames)
      throw std::invalid_argument("synthesize_frame_cube: visibility length does not match frame count");
    if (s.is_static && !s.trajectory.empty())
      for (const auto& d : s.trajectory)
        require(d == s.trajectory.front(), "Scatterer: static scatterer with a moving trajectory");
  }

  RadarFrameCube cube(config, array, frames);
  const std::size_t K = cube.samples();
  const std::size_t M = cube.antennas();
  const Vec3 center = array.phase_center();

  std::vector<double> inv_lambda(K);
  for (std::size_t k = 0; k < K; ++k) inv_lambda[k] = 1.0 / config.wavelength(k);

  for (std::size_t t = 0; t < frames; ++t) {
    for (const auto& s : scene) {
      if (!s.visible_at(t)) continue;
      const Vec3 p = s.position_at(t);
      const double r = (p - center).norm();
      if (r < 1e-12) throw std::domain_error("synthesize_frame_cube: scatterer at the array phase center");
      const double amp = s.reflectivity / (r * r);
      for (std::size_t m = 0; m < M; ++m) {
        const double d = round_trip_distance(array, m, p);
        for (std::size_t k = 0; k < K; ++k)
          cube.at(k, m, t) += std::polar(amp, -2.0 * kPi * d * inv_lambda[k]);
      }
    }
  }

  if (opts.noise_std > 0) {
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> normal(0.0, opts.noise_std / std::sqrt(2.0));
    for (auto& v : cube.data()) {
      const double re = normal(rng);
      const double im = normal(rng);
      v += cplx(re, im);
    }
  }
  return cube;
}

}  // namespace rfmask
