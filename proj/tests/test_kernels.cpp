#include <gtest/gtest.h>

#include <vector>

#include "capsroute/kernels.hpp"
#include "capsroute/rng.hpp"

using namespace capsroute;
namespace k = capsroute::kernels;

namespace {

std::vector<double> random(std::size_t n, std::uint64_t key) {
  Rng rng(key);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

k::ConvGeometry geometry(std::size_t b, std::size_t c, std::size_t h, std::size_t w, std::size_t kernel,
                         std::size_t stride, std::size_t pad) {
  return {b, c, h, w, kernel, stride, pad, (h + 2 * pad - kernel) / stride + 1, (w + 2 * pad - kernel) / stride + 1};
}

}  // namespace

// Sizes large enough to cross the parallel threshold as well as tiny ones.
class GemmSizes : public ::testing::TestWithParam<std::array<std::size_t, 3>> {};

TEST_P(GemmSizes, SerialMatchesNaiveAndParallelBitwise) {
  const auto [m, n, kk] = GetParam();
  const auto a = random(m * kk, 1), b = random(kk * n, 2), bt = random(n * kk, 3), at = random(kk * m, 4);
  const auto c0 = random(m * n, 5);

  std::vector<double> naive = c0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < kk; ++p) naive[i * n + j] += a[i * kk + p] * b[p * n + j];
  std::vector<double> s = c0, p = c0;
  k::serial::gemm_nn(m, n, kk, a.data(), b.data(), s.data());
  k::parallel::gemm_nn(m, n, kk, a.data(), b.data(), p.data());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s[i], naive[i], 1e-12);
  EXPECT_EQ(s, p);

  s = c0;
  p = c0;
  k::serial::gemm_nt(m, n, kk, a.data(), bt.data(), s.data());
  k::parallel::gemm_nt(m, n, kk, a.data(), bt.data(), p.data());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = c0[i * n + j];
      for (std::size_t q = 0; q < kk; ++q) acc += a[i * kk + q] * bt[j * kk + q];
      EXPECT_NEAR(s[i * n + j], acc, 1e-12);
    }
  EXPECT_EQ(s, p);

  s = c0;
  p = c0;
  k::serial::gemm_tn(m, n, kk, at.data(), b.data(), s.data());
  k::parallel::gemm_tn(m, n, kk, at.data(), b.data(), p.data());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = c0[i * n + j];
      for (std::size_t q = 0; q < kk; ++q) acc += at[q * m + i] * b[q * n + j];
      EXPECT_NEAR(s[i * n + j], acc, 1e-12);
    }
  EXPECT_EQ(s, p);
}

INSTANTIATE_TEST_SUITE_P(Shapes, GemmSizes,
                         ::testing::Values(std::array<std::size_t, 3>{1, 1, 1}, std::array<std::size_t, 3>{3, 5, 7},
                                           std::array<std::size_t, 3>{64, 96, 80},
                                           std::array<std::size_t, 3>{17, 300, 129}));

TEST(Transpose, SerialMatchesParallel) {
  const std::size_t r = 123, c = 77;
  const auto src = random(r * c, 6);
  std::vector<double> s(r * c), p(r * c);
  k::serial::transpose(r, c, src.data(), s.data());
  k::parallel::transpose(r, c, src.data(), p.data());
  EXPECT_EQ(s, p);
  EXPECT_EQ(s[5 * r + 2], src[2 * c + 5]);
}

TEST(Im2col, SerialMatchesParallelAndRoundTripsAdjoint) {
  for (const auto& g : {geometry(2, 3, 9, 8, 3, 2, 1), geometry(4, 16, 24, 24, 9, 2, 0), geometry(1, 1, 5, 5, 5, 1, 0)}) {
    const auto x = random(g.batch * g.channels * g.height * g.width, 7);
    const std::size_t cols = g.patch_size() * g.batch * g.positions();
    std::vector<double> cs(cols), cp(cols);
    k::serial::im2col(g, x.data(), cs.data());
    k::parallel::im2col(g, x.data(), cp.data());
    EXPECT_EQ(cs, cp);

    // col2im is the adjoint of im2col: <im2col(x), y> == <x, col2im(y)>.
    const auto y = random(cols, 8);
    std::vector<double> xs(x.size(), 0.0), xp(x.size(), 0.0);
    k::serial::col2im(g, y.data(), xs.data());
    k::parallel::col2im(g, y.data(), xp.data());
    EXPECT_EQ(xs, xp);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < cols; ++i) lhs += cs[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * xs[i];
    EXPECT_NEAR(lhs, rhs, 1e-9 * (1.0 + std::abs(lhs)));
  }
}
