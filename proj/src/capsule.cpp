#include "capsroute/capsule.hpp"

#include "capsroute/errors.hpp"
#include "capsroute/ops.hpp"

namespace capsroute {

std::size_t AffineParams::learnable_parameter_count() const {
  switch (kind) {
    case AffineKind::shared: return weight.defined() ? weight.numel() : 0;
    case AffineKind::conv:
      return (conv.weight.defined() ? conv.weight.numel() : 0) + (conv.bias.defined() ? conv.bias.numel() : 0);
    case AffineKind::constant: return 0;
  }
  return 0;
}

Tensor squash(const Tensor& s, double eps) {
  // eps only guards the direction; the length factor uses the exact squared norm.
  Tensor norm = ops::vector_norm(s, eps);
  Tensor sq = ops::sum(ops::square(s), static_cast<int>(s.rank()) - 1);
  Tensor factor = ops::div(sq, ops::mul(ops::add_scalar(sq, 1.0), norm));
  Shape keep = s.shape();
  keep.back() = 1;
  return ops::mul(s, ops::reshape(factor, keep));
}

namespace {

Tensor conv_with_bias(const Tensor& x, const ConvParams& conv) {
  Tensor y = ops::conv2d(x, conv.weight, conv.stride, conv.padding);
  if (!conv.bias.defined()) return y;
  return ops::add(y, ops::reshape(conv.bias, Shape{1, conv.bias.numel(), 1, 1}));
}

}  // namespace

CapsuleBank primary_capsules(const Tensor& features, std::size_t d_primary, const ConvParams& conv) {
  if (d_primary == 0) throw ConfigError("primary capsule dimension must be positive");
  const std::size_t channels = conv.weight.dim(0);
  if (channels % d_primary != 0) {
    throw ConfigError("primary conv emits " + std::to_string(channels) + " channels, not divisible by d_primary=" +
                      std::to_string(d_primary));
  }
  Tensor y = conv_with_bias(features, conv);
  const std::size_t batch = y.dim(0), gh = y.dim(2), gw = y.dim(3);
  const std::size_t maps = channels / d_primary;
  Tensor grouped = ops::reshape(y, Shape{batch, maps, d_primary, gh * gw});
  Tensor caps = ops::reshape(ops::permute(grouped, {0, 1, 3, 2}), Shape{batch, maps * gh * gw, d_primary});
  CapsuleBank bank;
  bank.activations = squash(caps);
  bank.role = CapsuleRole::primary;
  bank.maps = maps;
  bank.grid_h = gh;
  bank.grid_w = gw;
  return bank;
}

Tensor compute_votes(const CapsuleBank& u, const AffineParams& affine, std::size_t n_out, std::size_t d_out) {
  const std::size_t batch = u.batch(), n_in = u.count(), d_in = u.dim();
  const std::size_t width = n_out * d_out;
  switch (affine.kind) {
    case AffineKind::shared: {
      const Tensor& w = affine.weight;
      if (w.rank() != 3 || w.dim(0) != n_in || w.dim(1) != d_in || w.dim(2) != width) {
        throw DimensionError("shared affine weight " + shape_str(w.shape()) + " does not fit capsules " +
                             shape_str(u.activations.shape()) + " with N_out*D_out=" + std::to_string(width));
      }
      Tensor rows = ops::reshape(u.activations, Shape{batch, n_in, 1, d_in});
      return ops::reshape(ops::matmul(rows, w), Shape{batch, n_in, n_out, d_out});
    }
    case AffineKind::constant: {
      Tensor ones(Shape{d_in, width}, 1.0);
      return ops::reshape(ops::matmul(u.activations, ones), Shape{batch, n_in, n_out, d_out});
    }
    case AffineKind::conv: {
      if (u.role != CapsuleRole::primary || u.maps * u.grid_h * u.grid_w != n_in) {
        throw DimensionError("conv affine needs a primary capsule bank with grid information");
      }
      if (affine.conv.weight.dim(0) != width || affine.conv.weight.dim(1) != d_in) {
        throw DimensionError("conv affine kernel " + shape_str(affine.conv.weight.shape()) + " must map " +
                             std::to_string(d_in) + " to " + std::to_string(width) + " channels");
      }
      const std::size_t grid = u.grid_h * u.grid_w;
      const std::size_t planes = batch * u.maps;
      Tensor per_map = ops::permute(ops::reshape(u.activations, Shape{planes, grid, d_in}), {0, 2, 1});
      Tensor image = ops::reshape(per_map, Shape{planes, d_in, u.grid_h, u.grid_w});
      Tensor out = conv_with_bias(image, affine.conv);
      Tensor flat = ops::permute(ops::reshape(out, Shape{planes, width, grid}), {0, 2, 1});
      return ops::reshape(flat, Shape{batch, n_in, n_out, d_out});
    }
  }
  throw ConfigError("unknown affine kind");
}

Tensor linear(const Tensor& x, const Linear& layer) { return ops::linear(x, layer.weight, layer.bias); }

}  // namespace capsroute
