#include "capsroute/heads.hpp"

#include <cmath>

#include "capsroute/errors.hpp"
#include "capsroute/ops.hpp"

namespace capsroute {

namespace {

Tensor flatten_digits(const CapsuleBank& digits) {
  return ops::reshape(digits.activations, Shape{digits.batch(), digits.count() * digits.dim()});
}

}  // namespace

Tensor fc_decoder(const CapsuleBank& digits, const FcDecoder& decoder) {
  Tensor h = ops::relu(linear(flatten_digits(digits), decoder.hidden1));
  h = ops::relu(linear(h, decoder.hidden2));
  return ops::sigmoid(linear(h, decoder.output));
}

Tensor regression_head(const CapsuleBank& digits, const Linear& head) {
  if (head.weight.dim(1) != 1) throw DimensionError("regression head must produce one output per sample");
  return ops::reshape(linear(flatten_digits(digits), head), Shape{digits.batch()});
}

std::vector<Prediction> classify(const CapsuleBank& digits, std::size_t positive_index) {
  const std::size_t batch = digits.batch(), classes = digits.count(), dim = digits.dim();
  if (classes < 2) throw ContractError("classify needs at least two digit capsules");
  if (positive_index >= classes) throw ContractError("positive class index out of range");
  const auto v = digits.activations.data();
  std::vector<Prediction> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    double best = -1.0;
    for (std::size_t k = 0; k < classes; ++k) {
      double acc = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double x = v[(b * classes + k) * dim + d];
        acc += x * x;
      }
      const double norm = std::sqrt(acc);
      if (norm > best) {
        best = norm;
        out[b].label = k;
      }
      if (k == positive_index) out[b].score = norm;
    }
  }
  return out;
}

}  // namespace capsroute
