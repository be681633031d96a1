#include "capsroute/kernels.hpp"

namespace capsroute::kernels::serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
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
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

void im2col(const ConvGeometry& g, const double* x, double* col) {
  const std::size_t positions = g.positions();
  const std::size_t row_len = g.batch * positions;
  const long h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  for (std::size_t q = 0; q < g.patch_size(); ++q) {
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

void col2im(const ConvGeometry& g, const double* col, double* x) {
  const std::size_t positions = g.positions();
  const std::size_t row_len = g.batch * positions;
  const long h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t q = 0; q < g.patch_size(); ++q) {
      const std::size_t c = q / (g.kernel * g.kernel);
      const std::size_t ky = (q / g.kernel) % g.kernel;
      const std::size_t kx = q % g.kernel;
      const double* src = col + q * row_len + b * positions;
      double* plane = x + (b * g.channels + c) * g.height * g.width;
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

}  // namespace capsroute::kernels::serial
