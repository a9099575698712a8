#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "rfmask/fusion.hpp"
#include "rfmask/io.hpp"

using namespace rfmask;

namespace {

FeatureBlock random_block(std::size_t c, std::size_t h, std::size_t w, std::mt19937& rng,
                          Orientation o = Orientation::horizontal) {
  std::normal_distribution<double> nd;
  FeatureBlock f(c, h, w, o);
  for (auto& v : f.values) v = nd(rng);
  return f;
}

std::vector<std::vector<double>> to_rows(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> r(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return r;
}

double fused_sum(const FeatureBlock& h, const FeatureBlock& v, const AttentionWeights& w) { return fuse(h, v, w).sum(); }

}  // namespace

TEST(ReshapeConcat, Layout) {
  FeatureBlock h(2, 3, 4), v(2, 3, 5, Orientation::vertical);
  for (std::size_t i = 0; i < h.values.size(); ++i) h.values[i] = static_cast<double>(i);
  for (std::size_t i = 0; i < v.values.size(); ++i) v.values[i] = 100.0 + static_cast<double>(i);
  const auto seq = reshape_concat(h, v);
  ASSERT_EQ(seq.rows(), 9);
  ASSERT_EQ(seq.cols(), 6);
  EXPECT_EQ(seq(1, 0), h.at(0, 0, 1));
  EXPECT_EQ(seq(1, 4), h.at(1, 1, 1));
  EXPECT_EQ(seq(4 + 2, 5), v.at(1, 2, 2));
  FeatureBlock bad(2, 2, 5);
  EXPECT_THROW(reshape_concat(h, bad), std::invalid_argument);
}

TEST(ReshapeConcat, SingleChannelColumns) {
  FeatureBlock h(1, 2, 1), v(1, 2, 1);
  h.values = {1, 2};
  v.values = {3, 4};
  const auto seq = reshape_concat(h, v);
  EXPECT_EQ(seq, (Eigen::MatrixXd(2, 2) << 1, 2, 3, 4).finished());
}

TEST(Attention, ZeroQueryKeyGivesUniformAttention) {
  std::mt19937 rng(1);
  auto w = AttentionWeights::random(4, 2, 1, 3);
  w.layers[0].wq.setZero();
  w.layers[0].bq.setZero();
  w.layers[0].wk.setZero();
  w.layers[0].bk.setZero();
  const auto x = reshape_concat(random_block(1, 4, 3, rng), random_block(1, 4, 2, rng));
  const auto out = multi_head_attention(x, w.layers[0], 2);
  for (const auto& a : out.attention)
    for (Eigen::Index i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data()[i], 0.2, 1e-15);
}

TEST(Attention, SingleTokenAttendsToItself) {
  const auto w = AttentionWeights::random(4, 4, 1, 9);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(1, 4);
  const auto out = multi_head_attention(x, w.layers[0], 4);
  for (const auto& a : out.attention) EXPECT_DOUBLE_EQ(a(0, 0), 1.0);
}

TEST(Attention, MatchesNaiveOracle) {
  std::mt19937 rng(4);
  for (std::size_t heads : {1u, 2u, 4u}) {
    const auto w = AttentionWeights::random(8, heads, 1, 10 + heads);
    const auto x = reshape_concat(random_block(2, 4, 5, rng), random_block(2, 4, 3, rng));
    const auto fast = multi_head_attention(x, w.layers[0], heads);
    const auto slow = oracle::naive_attention(to_rows(x), w.layers[0], heads);
    for (std::size_t h = 0; h < heads; ++h)
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < x.rows(); ++j) {
          EXPECT_NEAR(fast.attention[h](i, j), slow.attention[h][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], 1e-6);
          row += fast.attention[h](i, j);
        }
        EXPECT_NEAR(row, 1.0, 1e-12);
      }
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        EXPECT_NEAR(fast.output(i, j), slow.output[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], 1e-6);
  }
}

TEST(Attention, PermutationEquivariant) {
  std::mt19937 rng(6);
  const auto w = AttentionWeights::random(6, 3, 1, 2);
  const auto x = reshape_concat(random_block(2, 3, 4, rng), random_block(2, 3, 3, rng));
  std::vector<int> perm(static_cast<std::size_t>(x.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(x.rows());
  for (std::size_t i = 0; i < perm.size(); ++i) p.indices()[static_cast<Eigen::Index>(i)] = perm[i];
  const Eigen::MatrixXd px = p * x;
  const auto a = multi_head_attention(x, w.layers[0], 3), b = multi_head_attention(px, w.layers[0], 3);
  EXPECT_LT(((p * a.output) - b.output).cwiseAbs().maxCoeff(), 1e-9);
  for (std::size_t h = 0; h < 3; ++h) {
    const Eigen::MatrixXd expect = p * a.attention[h] * p.transpose();
    EXPECT_LT((expect - b.attention[h]).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Attention, Errors) {
  const auto w = AttentionWeights::random(4, 2, 1, 1);
  EXPECT_THROW(multi_head_attention(Eigen::MatrixXd::Zero(3, 5), w.layers[0], 2), std::invalid_argument);
  EXPECT_THROW(multi_head_attention(Eigen::MatrixXd::Zero(3, 4), w.layers[0], 3), std::invalid_argument);
  EXPECT_THROW(AttentionWeights::random(6, 4, 1, 1), std::invalid_argument);
}

TEST(Fuse, ShapeAndStochasticity) {
  std::mt19937 rng(8);
  const auto w = AttentionWeights::random(4, 4, 4, 5);
  const auto h = random_block(1, 4, 3, rng), v = random_block(1, 4, 2, rng, Orientation::vertical);
  const auto res = fuse_detailed(h, v, w);
  EXPECT_EQ(res.fused.rows(), 2);
  EXPECT_EQ(res.fused.cols(), 3);
  ASSERT_EQ(res.attention.size(), 4u);
  for (const auto& a : res.attention)
    for (Eigen::Index i = 0; i < a.rows(); ++i) EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-12);
  EXPECT_GE(res.fused.minCoeff(), 0.0);
  for (Eigen::Index i = 0; i < res.fused.rows(); ++i) EXPECT_LE(res.fused.row(i).sum(), 1.0 + 1e-12);
}

TEST(Fuse, UniformAttentionGivesOneOverN) {
  std::mt19937 rng(8);
  auto w = AttentionWeights::random(2, 1, 1, 5);
  w.layers[0].wq.setZero();
  w.layers[0].bq.setZero();
  const auto f = fuse(random_block(1, 2, 3, rng), random_block(1, 2, 2, rng), w);
  for (Eigen::Index i = 0; i < f.size(); ++i) EXPECT_NEAR(f.data()[i], 0.2, 1e-15);
  const auto mask = fused_to_mask(f, 5, 6);
  for (double m : mask.values()) EXPECT_NEAR(m, 1.0, 1e-12);
}

TEST(Fuse, DimensionMismatchThrows) {
  std::mt19937 rng(8);
  const auto w = AttentionWeights::random(4, 2, 1, 5);
  EXPECT_THROW(fuse(random_block(1, 3, 3, rng), random_block(1, 3, 2, rng), w), std::invalid_argument);
}

TEST(Fuse, BitReproducible) {
  std::mt19937 rng(8);
  const auto h = random_block(2, 4, 5, rng), v = random_block(2, 4, 3, rng);
  const auto a = fuse(h, v, AttentionWeights::random(8, 4, 4, 77));
  const auto b = fuse(h, v, AttentionWeights::random(8, 4, 4, 77));
  EXPECT_EQ(a, b);
}

TEST(Fuse, ReadoutGradientMatchesFiniteDifference) {
  for (std::size_t layers : {1u, 2u}) {
    std::mt19937 rng(30 + static_cast<unsigned>(layers));
    const auto w = AttentionWeights::random(4, 2, layers, 40 + layers);
    auto h = random_block(2, 2, 3, rng);
    auto v = random_block(2, 2, 3, rng, Orientation::vertical);
    const auto g = fuse_readout_gradient(h, v, w);
    auto check = [&](FeatureBlock& f, const FeatureBlock& grad) {
      for (std::size_t i = 0; i < f.values.size(); ++i) {
        const double fd = oracle::central_difference([&] { return fused_sum(h, v, w); }, f.values[i], 1e-5);
        EXPECT_LE(std::abs(fd - grad.values[i]), 1e-3 * std::max(std::abs(fd), 1e-3)) << "entry " << i;
      }
    };
    check(h, g.d_hor);
    check(v, g.d_ver);
  }
}

TEST(FusedToMask, FlipsRowsAndClamps) {
  Eigen::MatrixXd f(2, 2);
  f << 0.0, 0.0, 0.5, 0.5;  // top vertical position attends strongly
  const auto m = fused_to_mask(f, 4, 2);
  EXPECT_DOUBLE_EQ(m(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(m(0, 1), 0.0);
}

TEST(WeightsFile, RoundTripAfterQuantization) {
  auto w = AttentionWeights::random(8, 4, 2, 12);
  w = io::quantize_f32(w);
  const auto path = std::filesystem::temp_directory_path() / "rfmask_weights_test.bin";
  io::write_weights(path.string(), w);
  const auto r = io::read_weights(path.string());
  std::filesystem::remove(path);
  ASSERT_EQ(r.dim, w.dim);
  ASSERT_EQ(r.heads, w.heads);
  ASSERT_EQ(r.layers.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(r.layers[l].wq, w.layers[l].wq);
    EXPECT_EQ(r.layers[l].bo, w.layers[l].bo);
    EXPECT_EQ(r.layers[l].wv, w.layers[l].wv);
  }
}
