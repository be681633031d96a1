#include "capsroute/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "capsroute/errors.hpp"
#include "capsroute/kernels.hpp"

namespace capsroute::ops {

namespace {

using detail::TensorImpl;
using Index = std::vector<std::size_t>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t != nullptr && t->requires_grad(); });
}

std::size_t normalize_axis(int axis, std::size_t rank, const Shape& shape) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  return static_cast<std::size_t>(a);
}

// Flat index into `in` for every flat index of `out`, where `in` broadcasts to `out`.
Index broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  const std::size_t offset = r - in.size();
  std::vector<std::size_t> stride(r, 0);
  std::size_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    if (in[i] != 1) stride[i + offset] = s;
    s *= in[i];
  }
  const std::size_t n = shape_numel(out);
  Index idx(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t cur = 0;
  for (std::size_t k = 0; k < n; ++k) {
    idx[k] = cur;
    for (std::size_t d = r; d-- > 0;) {
      ++counter[d];
      cur += stride[d];
      if (counter[d] < out[d]) break;
      cur -= stride[d] * out[d];
      counter[d] = 0;
    }
  }
  return idx;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da == db || db == 1) {
      out[i] = da;
    } else if (da == 1) {
      out[i] = db;
    } else {
      throw DimensionError("shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcastable");
    }
  }
  return out;
}

// f(x, y) -> z; dfa(x, y, z) and dfb(x, y, z) are the partials.
template <typename F, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  auto ia = std::make_shared<Index>();
  auto ib = std::make_shared<Index>();
  if (a.shape() != out_shape) *ia = broadcast_index(a.shape(), out_shape);
  if (b.shape() != out_shape) *ib = broadcast_index(b.shape(), out_shape);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> z(n);
  if (ia->empty() && ib->empty()) {
    for (std::size_t k = 0; k < n; ++k) z[k] = f(ad[k], bd[k]);
  } else {
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = ia->empty() ? k : (*ia)[k];
      const std::size_t j = ib->empty() ? k : (*ib)[k];
      z[k] = f(ad[i], bd[j]);
    }
  }
  const bool track = tracking({&a, &b});
  Tensor out(std::move(out_shape), std::move(z), track);
  if (track) {
    TensorImpl* A = a.impl();
    TensorImpl* B = b.impl();
    TensorImpl* O = out.impl();
    active_tape()->record({a.handle(), b.handle()}, out.handle(), [A, B, O, ia, ib, dfa, dfb] {
      const std::size_t count = O->data.size();
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t i = ia->empty() ? k : (*ia)[k];
        const std::size_t j = ib->empty() ? k : (*ib)[k];
        const double g = O->grad[k];
        if (A->requires_grad) A->grad[i] += g * dfa(A->data[i], B->data[j], O->data[k]);
        if (B->requires_grad) B->grad[j] += g * dfb(A->data[i], B->data[j], O->data[k]);
      }
    });
  }
  return out;
}

// f(x) -> y; df(x, y) is the derivative.
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  const auto ad = a.data();
  std::vector<double> y(ad.size());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = f(ad[k]);
  const bool track = tracking({&a});
  Tensor out(a.shape(), std::move(y), track);
  if (track) {
    TensorImpl* A = a.impl();
    TensorImpl* O = out.impl();
    active_tape()->record({a.handle()}, out.handle(), [A, O, df] {
      for (std::size_t k = 0; k < O->data.size(); ++k) A->grad[k] += O->grad[k] * df(A->data[k], O->data[k]);
    });
  }
  return out;
}

struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b, double factor) {
  const bool binary_op = op == ElementwiseOp::add || op == ElementwiseOp::sub || op == ElementwiseOp::mul;
  if (binary_op && b == nullptr) throw ContractError("binary elementwise op requires a second operand");
  switch (op) {
    case ElementwiseOp::add: return add(a, *b);
    case ElementwiseOp::sub: return sub(a, *b);
    case ElementwiseOp::mul: return mul(a, *b);
    case ElementwiseOp::relu: return relu(a);
    case ElementwiseOp::square: return square(a);
    case ElementwiseOp::sqrt: return sqrt(a);
    case ElementwiseOp::exp: return exp(a);
    case ElementwiseOp::scale: return scale(a, factor);
  }
  throw ContractError("unknown elementwise op");
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor sum(const Tensor& a, int axis, bool keepdim) {
  const std::size_t ax = normalize_axis(axis, a.rank(), a.shape());
  const AxisSplit s = split_axis(a.shape(), ax);
  Shape out_shape = a.shape();
  if (keepdim) {
    out_shape[ax] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  const auto ad = a.data();
  std::vector<double> z(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.extent; ++j) {
      const double* src = ad.data() + (o * s.extent + j) * s.inner;
      double* dst = z.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  const bool track = tracking({&a});
  Tensor out(std::move(out_shape), std::move(z), track);
  if (track) {
    TensorImpl* A = a.impl();
    TensorImpl* O = out.impl();
    active_tape()->record({a.handle()}, out.handle(), [A, O, s] {
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t j = 0; j < s.extent; ++j) {
          double* dst = A->grad.data() + (o * s.extent + j) * s.inner;
          const double* g = O->grad.data() + o * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[i];
        }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  const auto ad = a.data();
  double total = 0.0;
  for (double v : ad) total += v;
  const bool track = tracking({&a});
  Tensor out(Shape{}, std::vector<double>{total}, track);
  if (track) {
    TensorImpl* A = a.impl();
    TensorImpl* O = out.impl();
    active_tape()->record({a.handle()}, out.handle(), [A, O] {
      const double g = O->grad[0];
      for (double& v : A->grad) v += g;
    });
  }
  return out;
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  const auto ad = a.data();
  const bool track = tracking({&a});
  Tensor out(std::move(shape), std::vector<double>(ad.begin(), ad.end()), track);
  if (track) {
    TensorImpl* A = a.impl();
    TensorImpl* O = out.impl();
    active_tape()->record({a.handle()}, out.handle(), [A, O] {
      for (std::size_t k = 0; k < O->grad.size(); ++k) A->grad[k] += O->grad[k];
    });
  }
  return out;
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& order) {
  const std::size_t r = a.rank();
  if (order.size() != r) throw DimensionError("permutation rank mismatch for shape " + shape_str(a.shape()));
  std::vector<bool> seen(r, false);
  for (auto o : order) {
    if (o >= r || seen[o]) throw DimensionError("invalid permutation for shape " + shape_str(a.shape()));
    seen[o] = true;
  }
  Shape in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.shape()[i];
  Shape out_shape(r), stride(r);
  for (std::size_t d = 0; d < r; ++d) {
    out_shape[d] = a.shape()[order[d]];
    stride[d] = in_strides[order[d]];
  }
  const std::size_t n = a.numel();
  auto idx = std::make_shared<Index>(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t cur = 0;
  for (std::size_t k = 0; k < n; ++k) {
    (*idx)[k] = cur;
    for (std::size_t d = r; d-- > 0;) {
      ++counter[d];
      cur += stride[d];
      if (counter[d] < out_shape[d]) break;
      cur -= stride[d] * out_shape[d];
      counter[d] = 0;
    }
  }
  const auto ad = a.data();
  std::vector<double> z(n);
  for (std::size_t k = 0; k < n; ++k) z[k] = ad[(*idx)[k]];
  const bool track = tracking({&a});
  Tensor out(std::move(out_shape), std::move(z), track);
  if (track) {
    TensorImpl* A = a.impl();
    TensorImpl* O = out.impl();
    active_tape()->record({a.handle()}, out.handle(), [A, O, idx] {
      for (std::size_t k = 0; k < O->grad.size(); ++k) A->grad[(*idx)[k]] += O->grad[k];
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(-2), k = a.dim(-1), kb = b.dim(-2), p = b.dim(-1);
  if (k != kb) {
    throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
  const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
  Shape out_batch = broadcast_shape(a_batch, b_batch);
  const std::size_t batches = shape_numel(out_batch);
  auto ia = std::make_shared<Index>(broadcast_index(a_batch, out_batch));
  auto ib = std::make_shared<Index>(broadcast_index(b_batch, out_batch));
  std::vector<double> z(batches * m * p, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t n = 0; n < batches; ++n) {
    kernels::parallel::gemm_nn(m, p, k, ad + (*ia)[n] * m * k, bd + (*ib)[n] * k * p, z.data() + n * m * p);
  }
  Shape out_shape = out_batch;
  out_shape.push_back(m);
  out_shape.push_back(p);
  const bool track = tracking({&a, &b});
  Tensor out(std::move(out_shape), std::move(z), track);
  if (track) {
    TensorImpl* A = a.impl();
    TensorImpl* B = b.impl();
    TensorImpl* O = out.impl();
    active_tape()->record({a.handle(), b.handle()}, out.handle(), [A, B, O, ia, ib, m, k, p, batches] {
      for (std::size_t n = 0; n < batches; ++n) {
        const double* g = O->grad.data() + n * m * p;
        if (A->requires_grad) {
          kernels::parallel::gemm_nt(m, k, p, g, B->data.data() + (*ib)[n] * k * p, A->grad.data() + (*ia)[n] * m * k);
        }
        if (B->requires_grad) {
          kernels::parallel::gemm_tn(k, p, m, A->data.data() + (*ia)[n] * m * k, g, B->grad.data() + (*ib)[n] * k * p);
        }
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding) {
  if (x.rank() != 4 || w.rank() != 4 || w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3)) {
    throw DimensionError("conv2d expects x[B,C,H,W] and w[Co,C,k,k], got " + shape_str(x.shape()) + " and " +
                         shape_str(w.shape()));
  }
  if (stride == 0) throw DimensionError("conv2d stride must be positive");
  kernels::ConvGeometry g{};
  g.batch = x.dim(0);
  g.channels = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.kernel = w.dim(2);
  g.stride = stride;
  g.padding = padding;
  if (g.kernel > g.height + 2 * padding || g.kernel > g.width + 2 * padding) {
    throw DimensionError("conv2d kernel " + std::to_string(g.kernel) + " larger than padded input " +
                         shape_str(x.shape()) + " (padding " + std::to_string(padding) + ")");
  }
  g.out_height = (g.height + 2 * padding - g.kernel) / stride + 1;
  g.out_width = (g.width + 2 * padding - g.kernel) / stride + 1;
  const std::size_t co = w.dim(0);
  const std::size_t q = g.patch_size();
  const std::size_t positions = g.positions();
  const std::size_t row_len = g.batch * positions;

  auto col = std::make_shared<std::vector<double>>(q * row_len);
  kernels::parallel::im2col(g, x.data().data(), col->data());
  std::vector<double> tmp(co * row_len, 0.0);
  kernels::parallel::gemm_nn(co, row_len, q, w.data().data(), col->data(), tmp.data());
  std::vector<double> z(g.batch * co * positions);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t c = 0; c < co; ++c)
      std::copy_n(tmp.data() + c * row_len + b * positions, positions, z.data() + (b * co + c) * positions);

  const bool track = tracking({&x, &w});
  Tensor out(Shape{g.batch, co, g.out_height, g.out_width}, std::move(z), track);
  if (track) {
    TensorImpl* X = x.impl();
    TensorImpl* W = w.impl();
    TensorImpl* O = out.impl();
    active_tape()->record({x.handle(), w.handle()}, out.handle(), [X, W, O, g, co, q, col] {
      const std::size_t positions = g.positions();
      const std::size_t row_len = g.batch * positions;
      std::vector<double> gtmp(co * row_len);
      for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t c = 0; c < co; ++c)
          std::copy_n(O->grad.data() + (b * co + c) * positions, positions, gtmp.data() + c * row_len + b * positions);
      if (W->requires_grad) {
        std::vector<double> col_t(row_len * q);
        kernels::parallel::transpose(q, row_len, col->data(), col_t.data());
        kernels::parallel::gemm_nn(co, q, row_len, gtmp.data(), col_t.data(), W->grad.data());
      }
      if (X->requires_grad) {
        std::vector<double> dcol(q * row_len, 0.0);
        kernels::parallel::gemm_tn(q, row_len, co, W->data.data(), gtmp.data(), dcol.data());
        kernels::parallel::col2im(g, dcol.data(), X->grad.data());
      }
    });
  }
  return out;
}

Tensor max_pool2d(const Tensor& x, std::size_t window) {
  if (x.rank() != 4) throw DimensionError("max_pool2d expects [B,C,H,W], got " + shape_str(x.shape()));
  if (window == 0 || window > x.dim(2) || window > x.dim(3)) {
    throw DimensionError("max_pool2d window " + std::to_string(window) + " does not fit " + shape_str(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / window, ow = w / window;
  auto arg = std::make_shared<Index>(planes * oh * ow);
  std::vector<double> z(planes * oh * ow);
  const auto xd = x.data();
  for (std::size_t pl = 0; pl < planes; ++pl)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = pl * h * w + oy * window * w + ox * window;
        for (std::size_t dy = 0; dy < window; ++dy)
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t i = pl * h * w + (oy * window + dy) * w + ox * window + dx;
            if (xd[i] > xd[best]) best = i;
          }
        const std::size_t o = (pl * oh + oy) * ow + ox;
        (*arg)[o] = best;
        z[o] = xd[best];
      }
  const bool track = tracking({&x});
  Tensor out(Shape{x.dim(0), x.dim(1), oh, ow}, std::move(z), track);
  if (track) {
    TensorImpl* X = x.impl();
    TensorImpl* O = out.impl();
    active_tape()->record({x.handle()}, out.handle(), [X, O, arg] {
      for (std::size_t o = 0; o < O->grad.size(); ++o) X->grad[(*arg)[o]] += O->grad[o];
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank(), x.shape());
  const AxisSplit s = split_axis(x.shape(), ax);
  const auto xd = x.data();
  std::vector<double> y(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.extent; ++j) mx = std::max(mx, xd[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) {
        const double e = std::exp(xd[base + j * s.inner] - mx);
        y[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.extent; ++j) y[base + j * s.inner] /= total;
    }
  const bool track = tracking({&x});
  Tensor out(x.shape(), std::move(y), track);
  if (track) {
    TensorImpl* X = x.impl();
    TensorImpl* O = out.impl();
    active_tape()->record({x.handle()}, out.handle(), [X, O, s] {
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.extent * s.inner + i;
          double dot = 0.0;
          for (std::size_t j = 0; j < s.extent; ++j) dot += O->grad[base + j * s.inner] * O->data[base + j * s.inner];
          for (std::size_t j = 0; j < s.extent; ++j) {
            const std::size_t t = base + j * s.inner;
            X->grad[t] += O->data[t] * (O->grad[t] - dot);
          }
        }
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank(), x.shape());
  const AxisSplit s = split_axis(x.shape(), ax);
  const auto xd = x.data();
  std::vector<double> y(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.extent; ++j) mx = std::max(mx, xd[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) total += std::exp(xd[base + j * s.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t j = 0; j < s.extent; ++j) y[base + j * s.inner] = xd[base + j * s.inner] - lse;
    }
  const bool track = tracking({&x});
  Tensor out(x.shape(), std::move(y), track);
  if (track) {
    TensorImpl* X = x.impl();
    TensorImpl* O = out.impl();
    active_tape()->record({x.handle()}, out.handle(), [X, O, s] {
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.extent * s.inner + i;
          double gsum = 0.0;
          for (std::size_t j = 0; j < s.extent; ++j) gsum += O->grad[base + j * s.inner];
          for (std::size_t j = 0; j < s.extent; ++j) {
            const std::size_t t = base + j * s.inner;
            X->grad[t] += O->grad[t] - std::exp(O->data[t]) * gsum;
          }
        }
    });
  }
  return out;
}

Tensor vector_norm(const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw ContractError("vector_norm eps must be positive");
  if (x.rank() == 0) throw DimensionError("vector_norm needs at least one axis");
  const std::size_t d = x.dim(-1);
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data();
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += xd[r * d + i] * xd[r * d + i];
    y[r] = std::sqrt(acc + eps);
  }
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  const bool track = tracking({&x});
  Tensor out(std::move(out_shape), std::move(y), track);
  if (track) {
    TensorImpl* X = x.impl();
    TensorImpl* O = out.impl();
    active_tape()->record({x.handle()}, out.handle(), [X, O, d, rows] {
      for (std::size_t r = 0; r < rows; ++r) {
        const double g = O->grad[r] / O->data[r];
        for (std::size_t i = 0; i < d; ++i) X->grad[r * d + i] += g * X->data[r * d + i];
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add(matmul(x, weight), bias);
}

}  // namespace capsroute::ops
