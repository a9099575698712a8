#pragma once

// Multi-head fusion forward pass: horizontal and vertical RoI features are
// flattened into per-column vectors, passed through stacked multi-head
// attention, and the vertical-to-horizontal block of the final attention
// matrix is cropped out as the fused map.

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "rfmask/common.hpp"
#include "rfmask/mask.hpp"

namespace rfmask {

// C x H x W features; value (c, h, w) stored at w + W * (h + H * c).
struct FeatureBlock {
  std::size_t channels = 1, height = 1, width = 1;
  Orientation origin = Orientation::horizontal;
  std::vector<double> values;

  FeatureBlock() = default;
  FeatureBlock(std::size_t c, std::size_t h, std::size_t w, Orientation o = Orientation::horizontal)
      : channels(c), height(h), width(w), origin(o), values(c * h * w, 0.0) {}

  double& at(std::size_t c, std::size_t h, std::size_t w) { return values[w + width * (h + height * c)]; }
  double at(std::size_t c, std::size_t h, std::size_t w) const { return values[w + width * (h + height * c)]; }

  void validate() const {
    require(channels >= 1 && height >= 1 && width >= 1, "FeatureBlock: dimensions must be >= 1");
    require(values.size() == channels * height * width, "FeatureBlock: value count does not match shape");
    for (double v : values) require(std::isfinite(v), "FeatureBlock: values must be finite");
  }
};

struct AttentionLayer {
  Eigen::MatrixXd wq, wk, wv, wo;  // D x D, applied as x W^T + b
  Eigen::VectorXd bq, bk, bv, bo;
};

struct AttentionWeights {
  std::size_t dim = 0;
  std::size_t heads = 4;
  std::vector<AttentionLayer> layers;

  void validate() const {
    require(dim >= 1 && heads >= 1, "AttentionWeights: dim and heads must be >= 1");
    require(dim % heads == 0, "AttentionWeights: dim must be divisible by head count");
    require(!layers.empty(), "AttentionWeights: need at least one layer");
    const auto d = static_cast<Eigen::Index>(dim);
    for (const auto& l : layers) {
      for (const auto* m : {&l.wq, &l.wk, &l.wv, &l.wo})
        require(m->rows() == d && m->cols() == d, "AttentionWeights: projection must be dim x dim");
      for (const auto* b : {&l.bq, &l.bk, &l.bv, &l.bo})
        require(b->size() == d, "AttentionWeights: bias must have dim entries");
    }
  }

  // Gaussian weights with std scale / sqrt(dim); biases drawn at the same scale.
  static AttentionWeights random(std::size_t dim, std::size_t heads, std::size_t layers, std::uint64_t seed,
                                 double scale = 1.0) {
    AttentionWeights w;
    w.dim = dim;
    w.heads = heads;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale / std::sqrt(static_cast<double>(dim)));
    const auto d = static_cast<Eigen::Index>(dim);
    auto mat = [&] {
      Eigen::MatrixXd m(d, d);
      for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c < d; ++c) m(r, c) = normal(rng);
      return m;
    };
    auto vec = [&] {
      Eigen::VectorXd v(d);
      for (Eigen::Index i = 0; i < d; ++i) v(i) = normal(rng);
      return v;
    };
    for (std::size_t i = 0; i < layers; ++i) {
      AttentionLayer l;
      l.wq = mat();
      l.bq = vec();
      l.wk = mat();
      l.bk = vec();
      l.wv = mat();
      l.bv = vec();
      l.wo = mat();
      l.bo = vec();
      w.layers.push_back(std::move(l));
    }
    w.validate();
    return w;
  }
};

// Row n of the result is column n flattened over (channel, height); the
// horizontal columns come first, then the vertical ones.
inline Eigen::MatrixXd reshape_concat(const FeatureBlock& hor, const FeatureBlock& ver) {
  hor.validate();
  ver.validate();
  if (hor.channels != ver.channels || hor.height != ver.height)
    throw std::invalid_argument("reshape_concat: channel/height mismatch between horizontal and vertical features");
  const std::size_t d = hor.channels * hor.height;
  Eigen::MatrixXd seq(static_cast<Eigen::Index>(hor.width + ver.width), static_cast<Eigen::Index>(d));
  auto fill = [&](const FeatureBlock& f, std::size_t row0) {
    for (std::size_t w = 0; w < f.width; ++w)
      for (std::size_t c = 0; c < f.channels; ++c)
        for (std::size_t h = 0; h < f.height; ++h)
          seq(static_cast<Eigen::Index>(row0 + w), static_cast<Eigen::Index>(c * f.height + h)) = f.at(c, h, w);
  };
  fill(hor, 0);
  fill(ver, hor.width);
  return seq;
}

struct AttentionOutput {
  Eigen::MatrixXd output;                  // N x D
  std::vector<Eigen::MatrixXd> attention;  // per head, N x N, rows sum to 1
};

namespace detail {

inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& s) {
  Eigen::MatrixXd a(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    a.row(r) = (s.row(r).array() - mx).exp();
    a.row(r) /= a.row(r).sum();
  }
  return a;
}

inline Eigen::MatrixXd affine(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
  Eigen::MatrixXd y = x * w.transpose();
  y.rowwise() += b.transpose();
  return y;
}

struct LayerCache {
  Eigen::MatrixXd x, q, k, v;
  std::vector<Eigen::MatrixXd> attention;
};

inline AttentionOutput attention_forward(const Eigen::MatrixXd& x, const AttentionLayer& layer, std::size_t heads,
                                         LayerCache* cache = nullptr) {
  const Eigen::Index d = x.cols();
  if (layer.wq.rows() != d || layer.wq.cols() != d)
    throw std::invalid_argument("multi_head_attention: input dimension does not match weights");
  if (heads == 0 || d % static_cast<Eigen::Index>(heads) != 0)
    throw std::invalid_argument("multi_head_attention: dimension not divisible by head count");
  const Eigen::Index dh = d / static_cast<Eigen::Index>(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  const Eigen::MatrixXd q = affine(x, layer.wq, layer.bq);
  const Eigen::MatrixXd k = affine(x, layer.wk, layer.bk);
  const Eigen::MatrixXd v = affine(x, layer.wv, layer.bv);
  Eigen::MatrixXd concat(x.rows(), d);
  AttentionOutput out;
  for (std::size_t h = 0; h < heads; ++h) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
    const Eigen::MatrixXd scores = q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose() * inv_sqrt;
    Eigen::MatrixXd a = softmax_rows(scores);
    concat.middleCols(c0, dh) = a * v.middleCols(c0, dh);
    out.attention.push_back(std::move(a));
  }
  out.output = affine(concat, layer.wo, layer.bo) + x;
  if (cache) *cache = {x, q, k, v, out.attention};
  return out;
}

// Backward through one layer. d_out is dL/d(output) (may be empty when the
// loss does not read the output); d_att holds extra dL/dA per head (may be
// empty). Returns dL/dx.
inline Eigen::MatrixXd attention_backward(const LayerCache& c, const AttentionLayer& layer, std::size_t heads,
                                          const Eigen::MatrixXd* d_out, const std::vector<Eigen::MatrixXd>* d_att) {
  const Eigen::Index n = c.x.rows(), d = c.x.cols();
  const Eigen::Index dh = d / static_cast<Eigen::Index>(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(n, d);
  Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(n, d), dk = Eigen::MatrixXd::Zero(n, d), dv = Eigen::MatrixXd::Zero(n, d);
  Eigen::MatrixXd dconcat;
  if (d_out) {
    dx += *d_out;  // residual
    dconcat = *d_out * layer.wo;
  }
  for (std::size_t h = 0; h < heads; ++h) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
    const Eigen::MatrixXd& a = c.attention[h];
    Eigen::MatrixXd da = Eigen::MatrixXd::Zero(n, n);
    if (d_att) da += (*d_att)[h];
    if (d_out) {
      da += dconcat.middleCols(c0, dh) * c.v.middleCols(c0, dh).transpose();
      dv.middleCols(c0, dh) = a.transpose() * dconcat.middleCols(c0, dh);
    }
    const Eigen::VectorXd row_dot = (da.array() * a.array()).rowwise().sum();
    const Eigen::MatrixXd ds = (a.array() * (da.colwise() - row_dot).array()).matrix() * inv_sqrt;
    dq.middleCols(c0, dh) = ds * c.k.middleCols(c0, dh);
    dk.middleCols(c0, dh) = ds.transpose() * c.q.middleCols(c0, dh);
  }
  dx += dq * layer.wq + dk * layer.wk + dv * layer.wv;
  return dx;
}

}  // namespace detail

// Scaled dot-product attention per head, heads concatenated, output
// projection, residual addition.
inline AttentionOutput multi_head_attention(const Eigen::MatrixXd& seq, const AttentionLayer& layer,
                                            std::size_t heads) {
  return detail::attention_forward(seq, layer, heads);
}

struct FusionResult {
  Eigen::MatrixXd fused;                  // W_ver x W_hor
  std::vector<Eigen::MatrixXd> attention;  // head-averaged N x N per layer
};

inline Eigen::MatrixXd head_average(const std::vector<Eigen::MatrixXd>& per_head) {
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(per_head.front().rows(), per_head.front().cols());
  for (const auto& a : per_head) avg += a;
  return avg / static_cast<double>(per_head.size());
}

// Rows [W_hor, N) x columns [0, W_hor) of the last layer's head-averaged
// attention: vertical queries attending to horizontal keys.
inline FusionResult fuse_detailed(const FeatureBlock& hor, const FeatureBlock& ver, const AttentionWeights& weights) {
  weights.validate();
  Eigen::MatrixXd x = reshape_concat(hor, ver);
  if (static_cast<std::size_t>(x.cols()) != weights.dim)
    throw std::invalid_argument("fuse: feature dimension C*H does not match attention weights");
  FusionResult res;
  for (const auto& layer : weights.layers) {
    AttentionOutput o = detail::attention_forward(x, layer, weights.heads);
    res.attention.push_back(head_average(o.attention));
    x = std::move(o.output);
  }
  const auto wh = static_cast<Eigen::Index>(hor.width), wv = static_cast<Eigen::Index>(ver.width);
  res.fused = res.attention.back().block(wh, 0, wv, wh);
  return res;
}

inline Eigen::MatrixXd fuse(const FeatureBlock& hor, const FeatureBlock& ver, const AttentionWeights& weights) {
  return fuse_detailed(hor, ver, weights).fused;
}

struct FusionGradient {
  FeatureBlock d_hor, d_ver;
};

// Gradient of sum(fuse(hor, ver)) with respect to both feature blocks.
inline FusionGradient fuse_readout_gradient(const FeatureBlock& hor, const FeatureBlock& ver,
                                            const AttentionWeights& weights) {
  weights.validate();
  Eigen::MatrixXd x = reshape_concat(hor, ver);
  if (static_cast<std::size_t>(x.cols()) != weights.dim)
    throw std::invalid_argument("fuse: feature dimension C*H does not match attention weights");
  std::vector<detail::LayerCache> caches(weights.layers.size());
  for (std::size_t l = 0; l < weights.layers.size(); ++l)
    x = detail::attention_forward(x, weights.layers[l], weights.heads, &caches[l]).output;

  const Eigen::Index n = x.rows();
  const auto wh = static_cast<Eigen::Index>(hor.width), wv = static_cast<Eigen::Index>(ver.width);
  Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(n, n);
  seed.block(wh, 0, wv, wh).setConstant(1.0 / static_cast<double>(weights.heads));
  const std::vector<Eigen::MatrixXd> d_att(weights.heads, seed);

  Eigen::MatrixXd dx =
      detail::attention_backward(caches.back(), weights.layers.back(), weights.heads, nullptr, &d_att);
  for (std::size_t l = weights.layers.size() - 1; l-- > 0;)
    dx = detail::attention_backward(caches[l], weights.layers[l], weights.heads, &dx, nullptr);

  FusionGradient g{FeatureBlock(hor.channels, hor.height, hor.width, hor.origin),
                   FeatureBlock(ver.channels, ver.height, ver.width, ver.origin)};
  auto scatter = [&](FeatureBlock& f, std::size_t row0) {
    for (std::size_t w = 0; w < f.width; ++w)
      for (std::size_t c = 0; c < f.channels; ++c)
        for (std::size_t h = 0; h < f.height; ++h)
          f.at(c, h, w) = dx(static_cast<Eigen::Index>(row0 + w), static_cast<Eigen::Index>(c * f.height + h));
  };
  scatter(g.d_hor, 0);
  scatter(g.d_ver, hor.width);
  return g;
}

// Stand-in for the learned decoder: the fused block, expressed relative to
// uniform attention (entry * N), bilinearly upsampled to m x m and clamped
// to [0, 1]. Row 0 of the mask is the last (highest) vertical position.
inline MaskGrid fused_to_mask(const Eigen::MatrixXd& fused, std::size_t sequence_length, std::size_t mask_size) {
  require(fused.size() > 0 && mask_size >= 1, "fused_to_mask: empty input");
  Grid2<double> g(static_cast<std::size_t>(fused.cols()), static_cast<std::size_t>(fused.rows()));
  for (Eigen::Index r = 0; r < fused.rows(); ++r)
    for (Eigen::Index c = 0; c < fused.cols(); ++c)
      g(static_cast<std::size_t>(c), static_cast<std::size_t>(fused.rows() - 1 - r)) =
          fused(r, c) * static_cast<double>(sequence_length);
  MaskGrid m = bilinear_resize(g, mask_size, mask_size);
  for (double& v : m.values()) v = std::clamp(v, 0.0, 1.0);
  return m;
}

}  // namespace rfmask
