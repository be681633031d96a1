#pragma once

#include <cstddef>
#include <vector>

#include "capsroute/capsule.hpp"

namespace capsroute {

// Three fully connected layers: two ReLU hidden layers and a sigmoid output
// sized to the flattened image.
struct FcDecoder {
  Linear hidden1;
  Linear hidden2;
  Linear output;
};

// All digit capsules concatenated (no class masking) -> [B, C_img*H*W] in (0, 1).
Tensor fc_decoder(const CapsuleBank& digits, const FcDecoder& decoder);

// Linear map of the concatenated digit capsules to one scalar per sample, [B].
Tensor regression_head(const CapsuleBank& digits, const Linear& head);

struct Prediction {
  std::size_t label = 0;
  double score = 0.0;  // norm of the positive-class capsule
};

// argmax_k |v_k|, ties resolved toward the lower index.
std::vector<Prediction> classify(const CapsuleBank& digits, std::size_t positive_index = 1);

}  // namespace capsroute
