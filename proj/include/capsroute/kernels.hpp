#pragma once

#include <cstddef>

// Dense contraction and patch-gather kernels. Every kernel exists twice:
// `serial` is the plain reference and `parallel` distributes independent
// output rows over OpenMP threads. Each output element is reduced in the
// same order in both, so the two variants agree bit-for-bit.
//
// All matrices are row-major; gemm kernels accumulate into c.
namespace capsroute::kernels {

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t kernel, stride, padding;
  std::size_t out_height, out_width;

  std::size_t patch_size() const { return channels * kernel * kernel; }
  std::size_t positions() const { return out_height * out_width; }
};

namespace serial {

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
// c[m,n] += a[k,m]^T * b[k,n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);

void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst);

// col[q, b*P + p] for patch element q and output position p of sample b; zero outside the padded input.
void im2col(const ConvGeometry& g, const double* x, double* col);
// Scatter-add of im2col's layout back into x.
void col2im(const ConvGeometry& g, const double* col, double* x);

}  // namespace serial

namespace parallel {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst);
void im2col(const ConvGeometry& g, const double* x, double* col);
void col2im(const ConvGeometry& g, const double* col, double* x);

}  // namespace parallel

// Number of OpenMP threads the parallel kernels use (1 without OpenMP).
int max_threads();

}  // namespace capsroute::kernels
