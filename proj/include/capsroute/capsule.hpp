#pragma once

#include <cstddef>
#include <vector>

#include "capsroute/tensor.hpp"

namespace capsroute {

enum class CapsuleRole { primary, digit };

/// Activations of one capsule layer, [batch, n_caps, d_caps]. Primary banks
/// also remember the spatial grid they were reshaped from: capsule index
/// i = (map * grid_h + y) * grid_w + x.
struct CapsuleBank {
  Tensor activations;
  CapsuleRole role = CapsuleRole::digit;
  std::size_t maps = 0;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;

  std::size_t batch() const { return activations.dim(0); }
  std::size_t count() const { return activations.dim(1); }
  std::size_t dim() const { return activations.dim(2); }
};

struct ConvParams {
  Tensor weight;  // [C_out, C_in, k, k]
  Tensor bias;    // [C_out]
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

enum class AffineKind { shared, conv, constant };

/// Vote transform parameters. shared: one learnable [D_in, N_out*D_out] matrix
/// per input capsule. conv: a learnable 3x3 convolution over the primary grid
/// (applied per capsule map) emitting N_out*D_out channels. constant: fixed
/// all-ones weights, nothing to learn.
struct AffineParams {
  AffineKind kind = AffineKind::shared;
  Tensor weight;  // shared only: [N_in, D_in, N_out*D_out]
  ConvParams conv;  // conv only

  std::size_t learnable_parameter_count() const;
};

// v = |s|^2 / (1 + |s|^2) * s / |s| along the last axis, with the norm eps-guarded.
Tensor squash(const Tensor& s, double eps = 1e-12);

// Convolution + reshape of channels into (maps, d_primary) capsules + squash.
CapsuleBank primary_capsules(const Tensor& features, std::size_t d_primary, const ConvParams& conv);

// votes: [batch, N_in, N_out, D_out]
Tensor compute_votes(const CapsuleBank& u, const AffineParams& affine, std::size_t n_out, std::size_t d_out);

Tensor linear(const Tensor& x, const Linear& layer);

}  // namespace capsroute
