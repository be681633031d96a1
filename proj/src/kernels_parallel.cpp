#include "capsroute/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace capsroute::kernels {

namespace {
// Minimum work (multiply-adds or copies) before a kernel forks threads.
constexpr std::size_t kParallelWork = 1u << 15;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace parallel {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (long i = 0; i < rows; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (long i = 0; i < rows; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (long i = 0; i < rows; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst) {
  const long n = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (long r = 0; r < n; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

void im2col(const ConvGeometry& g, const double* x, double* col) {
  const std::size_t positions = g.positions();
  const std::size_t row_len = g.batch * positions;
  const long h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  const long patch = static_cast<long>(g.patch_size());
#pragma omp parallel for schedule(static) if (patch * row_len > kParallelWork)
  for (long q = 0; q < patch; ++q) {
    const std::size_t c = q / (g.kernel * g.kernel);
    const std::size_t ky = (q / g.kernel) % g.kernel;
    const std::size_t kx = q % g.kernel;
    double* dst = col + q * row_len;
    for (std::size_t b = 0; b < g.batch; ++b) {
      const double* plane = x + (b * g.channels + c) * g.height * g.width;
      for (std::size_t oy = 0; oy < g.out_height; ++oy) {
        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
        for (std::size_t ox = 0; ox < g.out_width; ++ox) {
          const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
          const bool inside = iy >= 0 && iy < h && ix >= 0 && ix < w;
          dst[b * positions + oy * g.out_width + ox] = inside ? plane[iy * w + ix] : 0.0;
        }
      }
    }
  }
}

// Threads own whole (sample, channel) planes so scatter-adds never race and
// each pixel receives its contributions in the serial order.
void col2im(const ConvGeometry& g, const double* col, double* x) {
  const std::size_t positions = g.positions();
  const std::size_t row_len = g.batch * positions;
  const std::size_t kk = g.kernel * g.kernel;
  const long h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  const long planes = static_cast<long>(g.batch * g.channels);
#pragma omp parallel for schedule(static) if (g.patch_size() * row_len > kParallelWork)
  for (long bc = 0; bc < planes; ++bc) {
    const std::size_t b = bc / g.channels;
    const std::size_t c = bc % g.channels;
    double* plane = x + bc * g.height * g.width;
    for (std::size_t local = 0; local < kk; ++local) {
      const std::size_t q = c * kk + local;
      const std::size_t ky = local / g.kernel;
      const std::size_t kx = local % g.kernel;
      const double* src = col + q * row_len + b * positions;
      for (std::size_t oy = 0; oy < g.out_height; ++oy) {
        const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.padding);
        if (iy < 0 || iy >= h) continue;
        for (std::size_t ox = 0; ox < g.out_width; ++ox) {
          const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.padding);
          if (ix < 0 || ix >= w) continue;
          plane[iy * w + ix] += src[oy * g.out_width + ox];
        }
      }
    }
  }
}

}  // namespace parallel
}  // namespace capsroute::kernels
