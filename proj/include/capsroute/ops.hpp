#pragma once

#include <cstddef>
#include <vector>

#include "capsroute/tensor.hpp"

// Differentiable tensor operations. Each op computes its forward value and,
// when a tape is active and an input requires a gradient, records a backward
// rule. Binary elementwise ops broadcast numpy-style: shapes are aligned at
// the trailing axis and a size-1 extent stretches.
namespace capsroute::ops {

enum class ElementwiseOp { add, sub, mul, relu, square, sqrt, exp, scale };

// Dispatching form; `b` is required for add/sub/mul, `factor` is used by scale.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b = nullptr, double factor = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);  // subgradient 0 at exactly 0
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor sum(const Tensor& a, int axis, bool keepdim = false);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& order);

// a[..., M, K] x b[..., K, P] -> [..., M, P]; leading (batch) axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

// Cross-correlation of x[B, C, H, W] with w[Co, C, k, k]; no bias.
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride = 1, std::size_t padding = 0);
// Non-overlapping max pooling with window = stride = `window`; trailing rows/cols are dropped.
Tensor max_pool2d(const Tensor& x, std::size_t window);

Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);

// sqrt(sum(x^2, last axis) + eps); the last axis is removed.
Tensor vector_norm(const Tensor& x, double eps = 1e-12);

// x[B, in] @ weight[in, out] + bias[out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

}  // namespace capsroute::ops
