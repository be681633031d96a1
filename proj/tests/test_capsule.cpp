#include <gtest/gtest.h>

#include <cmath>

#include "capsroute/capsule.hpp"
#include "capsroute/errors.hpp"
#include "capsroute/heads.hpp"
#include "capsroute/model.hpp"
#include "capsroute/ops.hpp"
#include "capsroute/rng.hpp"

using namespace capsroute;

namespace {

Tensor random(Shape shape, std::uint64_t key, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  Rng rng(key);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

CapsuleBank digit_bank(Tensor activations) {
  CapsuleBank bank;
  bank.activations = std::move(activations);
  return bank;
}

}  // namespace

TEST(Squash, ClosedFormExamples) {
  const Tensor zero = squash(Tensor(Shape{1, 4}, 0.0));
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
  const Tensor unit = squash(Tensor(Shape{1, 2}, std::vector<double>{0.6, 0.8}));
  EXPECT_NEAR(unit[0], 0.3, 1e-12);
  EXPECT_NEAR(unit[1], 0.4, 1e-12);
  const Tensor three = squash(Tensor(Shape{1, 3}, std::vector<double>{0.0, 3.0, 0.0}));
  EXPECT_NEAR(norm(three.data()), 0.9, 1e-12);
}

TEST(Squash, NormAndDirectionOnRandomVectors) {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.below(16);
    const double scale = std::pow(10.0, rng.uniform(-3.0, 2.0));
    Tensor s(Shape{d});
    for (double& v : s.data()) v = scale * rng.normal();
    const Tensor v = squash(s);
    const double n = norm(s.data());
    EXPECT_NEAR(norm(v.data()), n * n / (1.0 + n * n), 1e-9);
    EXPECT_LT(norm(v.data()), 1.0);
    const double vn = norm(v.data());
    for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(v[k] / vn, s[k] / n, 1e-9);
  }
}

TEST(PrimaryCapsules, ReshapeArithmeticAndNormBound) {
  // 16 channels of d_primary 8 on a 4x4 grid -> 2 maps x 16 positions = 32 capsules.
  Tensor feat = random({1, 3, 10, 10}, 1);
  ConvParams conv{random({16, 3, 3, 3}, 2), Tensor(Shape{16}), 2, 0};
  const CapsuleBank bank = primary_capsules(feat, 8, conv);
  EXPECT_EQ(bank.activations.shape(), (Shape{1, 32, 8}));
  EXPECT_EQ(bank.maps, 2u);
  EXPECT_EQ(bank.grid_h, 4u);
  EXPECT_EQ(bank.grid_w, 4u);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_LT(norm(bank.activations.data().subspan(i * 8, 8)), 1.0);
}

TEST(PrimaryCapsules, CapsuleOrderingFollowsMapThenGrid) {
  Tensor feat = random({2, 2, 9, 9}, 3);
  ConvParams conv{random({8, 2, 3, 3}, 4), random({8}, 5), 2, 0};
  const CapsuleBank bank = primary_capsules(feat, 4, conv);
  Tensor raw = ops::conv2d(feat, conv.weight, 2, 0);
  const std::size_t G = 4;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t m = 0; m < 2; ++m)
      for (std::size_t y = 0; y < G; ++y)
        for (std::size_t x = 0; x < G; ++x) {
          std::vector<double> s(4);
          for (std::size_t d = 0; d < 4; ++d) {
            const std::size_t c = m * 4 + d;
            s[d] = raw[((b * 8 + c) * G + y) * G + x] + conv.bias[c];
          }
          const double n = norm(s);
          const std::size_t i = (m * G + y) * G + x;
          for (std::size_t d = 0; d < 4; ++d) {
            EXPECT_NEAR(bank.activations[(b * 32 + i) * 4 + d], n / (1.0 + n * n) * s[d], 1e-12);
          }
        }
}

TEST(PrimaryCapsules, IndivisibleChannelsIsConfigError) {
  ConvParams conv{random({10, 1, 3, 3}, 6), Tensor(Shape{10}), 1, 0};
  EXPECT_THROW(primary_capsules(random({1, 1, 5, 5}, 7), 8, conv), ConfigError);
}

TEST(PrimaryCapsules, ShiftByOneStridePermutesGridPositions) {
  // Two overlapping crops of one canvas, offset by the composite stride of
  // the front end (conv stride 1, primary stride 2): 2 pixels.
  const std::size_t H = 14, W = 16, shift = 2;
  Tensor canvas = random({1, 1, H, W + shift}, 8, 0.0, 1.0);
  auto crop = [&](std::size_t x0) {
    Tensor t(Shape{1, 1, H, W});
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) t.data()[y * W + x] = canvas[y * (W + shift) + x + x0];
    return t;
  };
  ConvParams conv1{random({4, 1, 3, 3}, 9), random({4}, 10, -0.1, 0.1), 1, 0};
  ConvParams prim{random({8, 4, 3, 3}, 11), random({8}, 12, -0.1, 0.1), 2, 0};
  auto front = [&](const Tensor& img) {
    Tensor h = ops::relu(ops::add(ops::conv2d(img, conv1.weight), ops::reshape(conv1.bias, {4, 1, 1})));
    return primary_capsules(h, 4, prim);
  };
  const CapsuleBank a = front(crop(0));
  const CapsuleBank b = front(crop(shift));
  ASSERT_EQ(a.grid_w, b.grid_w);
  for (std::size_t m = 0; m < a.maps; ++m)
    for (std::size_t y = 0; y < a.grid_h; ++y)
      for (std::size_t x = 0; x + 1 < a.grid_w; ++x) {
        const std::size_t ia = (m * a.grid_h + y) * a.grid_w + x + 1;
        const std::size_t ib = (m * b.grid_h + y) * b.grid_w + x;
        for (std::size_t d = 0; d < 4; ++d) {
          EXPECT_NEAR(a.activations[ia * 4 + d], b.activations[ib * 4 + d], 1e-9);
        }
      }
}

TEST(Votes, ConstantKindSumsComponents) {
  CapsuleBank u = digit_bank(Tensor(Shape{1, 1, 3}, std::vector<double>{1, 2, 3}));
  const Tensor votes = compute_votes(u, AffineParams{AffineKind::constant, {}, {}}, 2, 4);
  EXPECT_EQ(votes.shape(), (Shape{1, 1, 2, 4}));
  for (double v : votes.data()) EXPECT_EQ(v, 6.0);
}

TEST(Votes, IdentityBlocksReproduceInput) {
  const std::size_t n_in = 3, d = 4, n_out = 2;
  Tensor w(Shape{n_in, d, n_out * d});
  for (std::size_t i = 0; i < n_in; ++i)
    for (std::size_t j = 0; j < n_out; ++j)
      for (std::size_t k = 0; k < d; ++k) w.data()[(i * d + k) * n_out * d + j * d + k] = 1.0;
  CapsuleBank u = digit_bank(random({2, n_in, d}, 13));
  const Tensor votes = compute_votes(u, AffineParams{AffineKind::shared, w, {}}, n_out, d);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < n_in; ++i)
      for (std::size_t j = 0; j < n_out; ++j)
        for (std::size_t k = 0; k < d; ++k)
          EXPECT_EQ(votes[((b * n_in + i) * n_out + j) * d + k], u.activations[(b * n_in + i) * d + k]);
}

TEST(Votes, SharedMatchesTripleLoopOracle) {
  const std::size_t B = 2, n_in = 6, d_in = 4, n_out = 2, d_out = 5;
  CapsuleBank u = digit_bank(random({B, n_in, d_in}, 14));
  Tensor w = random({n_in, d_in, n_out * d_out}, 15);
  const Tensor votes = compute_votes(u, AffineParams{AffineKind::shared, w, {}}, n_out, d_out);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < n_in; ++i)
      for (std::size_t j = 0; j < n_out; ++j)
        for (std::size_t k = 0; k < d_out; ++k) {
          double acc = 0.0;
          for (std::size_t d = 0; d < d_in; ++d)
            acc += u.activations[(b * n_in + i) * d_in + d] * w[(i * d_in + d) * n_out * d_out + j * d_out + k];
          EXPECT_NEAR(votes[((b * n_in + i) * n_out + j) * d_out + k], acc, 1e-12);
        }
}

TEST(Votes, ConvKindMatchesLoopOracle) {
  const std::size_t B = 2, maps = 2, G = 3, d_in = 4, n_out = 2, d_out = 3, width = n_out * d_out;
  CapsuleBank u;
  u.activations = random({B, maps * G * G, d_in}, 16);
  u.role = CapsuleRole::primary;
  u.maps = maps;
  u.grid_h = u.grid_w = G;
  AffineParams affine;
  affine.kind = AffineKind::conv;
  affine.conv = {random({width, d_in, 3, 3}, 17), random({width}, 18), 1, 1};
  const Tensor votes = compute_votes(u, affine, n_out, d_out);
  const std::size_t n_in = maps * G * G;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t m = 0; m < maps; ++m)
      for (std::size_t y = 0; y < G; ++y)
        for (std::size_t x = 0; x < G; ++x)
          for (std::size_t o = 0; o < width; ++o) {
            double acc = affine.conv.bias[o];
            for (std::size_t d = 0; d < d_in; ++d)
              for (std::size_t ky = 0; ky < 3; ++ky)
                for (std::size_t kx = 0; kx < 3; ++kx) {
                  const long yy = long(y + ky) - 1, xx = long(x + kx) - 1;
                  if (yy < 0 || xx < 0 || yy >= long(G) || xx >= long(G)) continue;
                  const std::size_t src = (m * G + yy) * G + xx;
                  acc += u.activations[(b * n_in + src) * d_in + d] * affine.conv.weight[((o * d_in + d) * 3 + ky) * 3 + kx];
                }
            const std::size_t i = (m * G + y) * G + x;
            EXPECT_NEAR(votes[(b * n_in + i) * width + o], acc, 1e-12);
          }
}

TEST(Affine, ParameterCounts) {
  AffineParams shared{AffineKind::shared, Tensor(Shape{6, 4, 10}), {}};
  EXPECT_EQ(shared.learnable_parameter_count(), 6u * 4 * 10);
  EXPECT_EQ(AffineParams{AffineKind::constant}.learnable_parameter_count(), 0u);
}

TEST(Affine, ConstantModelHasFewerParameters) {
  ModelConfig shared = ModelConfig::small();
  ModelConfig constant = shared;
  constant.affine_kind = AffineKind::constant;
  EXPECT_LT(Model(constant, {1, 32, 32}, 1).parameter_count(), Model(shared, {1, 32, 32}, 1).parameter_count());
}

TEST(Model, DefaultDigitBankShape) {
  const Model model(ModelConfig::full(), {1, 32, 32}, 10);
  const ModelOutput out = model.forward(random({3, 1, 32, 32}, 19, 0.0, 1.0));
  EXPECT_EQ(out.digits.activations.shape(), (Shape{3, 2, 16}));
  EXPECT_EQ(out.norms.shape(), (Shape{3, 2}));
  EXPECT_EQ(out.regression.shape(), (Shape{3}));
  EXPECT_EQ(out.reconstruction.shape(), (Shape{3, 1024}));
}

TEST(Model, IncompatibleSpatialArithmeticReportsShapes) {
  ModelConfig c = ModelConfig::small();
  try {
    Model(c, {1, 12, 12}, 1);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("12"), std::string::npos) << e.what();
  }
}

TEST(Model, ConvAffineVariantRuns) {
  ModelConfig c = ModelConfig::small();
  c.affine_kind = AffineKind::conv;
  const Model model(c, {1, 32, 32}, 2);
  EXPECT_EQ(model.forward(random({2, 1, 32, 32}, 20, 0.0, 1.0)).digits.activations.shape(), (Shape{2, 2, 16}));
}

TEST(Decoder, RangeAndLength) {
  CapsuleBank v = digit_bank(random({3, 2, 4}, 21));
  FcDecoder dec{{random({8, 6}, 22), random({6}, 23)}, {random({6, 5}, 24), random({5}, 25)},
                {random({5, 12}, 26), random({12}, 27)}};
  const Tensor out = fc_decoder(v, dec);
  EXPECT_EQ(out.shape(), (Shape{3, 12}));
  for (double x : out.data()) {
    EXPECT_GT(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
}

TEST(RegressionHead, ZeroWeightsGiveBias) {
  CapsuleBank v = digit_bank(random({4, 2, 3}, 28));
  const Tensor y = regression_head(v, Linear{Tensor(Shape{6, 1}), Tensor(Shape{1}, 0.37)});
  EXPECT_EQ(y.shape(), (Shape{4}));
  for (double x : y.data()) EXPECT_EQ(x, 0.37);
}

TEST(Classify, ArgmaxScoreAndTieRule) {
  CapsuleBank v = digit_bank(Tensor(Shape{2, 2, 2}, std::vector<double>{0.2, 0.0, 0.0, 0.8, 0.3, 0.4, 0.4, 0.3}));
  const auto preds = classify(v);
  EXPECT_EQ(preds[0].label, 1u);
  EXPECT_NEAR(preds[0].score, 0.8, 1e-12);
  EXPECT_EQ(preds[1].label, 0u);
}

TEST(Classify, MatchesLoopOracle) {
  const CapsuleBank v = digit_bank(random({5, 3, 4}, 29));
  const auto preds = classify(v, 1);
  for (std::size_t b = 0; b < 5; ++b) {
    std::size_t best = 0;
    double best_norm = -1.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double n = norm(v.activations.data().subspan((b * 3 + k) * 4, 4));
      if (n > best_norm) {
        best_norm = n;
        best = k;
      }
    }
    EXPECT_EQ(preds[b].label, best);
    EXPECT_NEAR(preds[b].score, norm(v.activations.data().subspan((b * 3 + 1) * 4, 4)), 1e-6);
  }
}
