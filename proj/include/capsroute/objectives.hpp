#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "capsroute/tensor.hpp"

namespace capsroute {

struct MarginLossParams {
  double m_plus = 0.9;
  double m_minus = 0.1;
  double lambda_neg = 0.5;

  void validate() const;
};

// none: every class weighs 1 (plain margin loss); literal: w_k = p_k;
// inverse: w_k = 1 - p_k.
enum class WeightMode { none, literal, inverse };

struct WeightedLossParams {
  std::vector<double> class_proportions{0.5, 0.5};  // p_k = c_k / N
  WeightMode weight_mode = WeightMode::inverse;
  double lambda_reg = 0.05;
  double lambda_recon = 0.0005;

  std::vector<double> class_weights() const;
  void validate() const;
};

// p_k = c_k / N over the given labels.
std::vector<double> class_proportions(std::span<const int> labels, std::size_t classes = 2);

Tensor one_hot(std::span<const int> labels, std::size_t classes);

// L_k averaged over the batch, [C]:
// T_k max(0, m+ - |v_k|)^2 + lambda (1 - T_k) max(0, |v_k| - m-)^2
Tensor margin_terms(const Tensor& norms, const Tensor& targets, const MarginLossParams& params);

// Batch mean of the summed per-class margin terms.
Tensor margin_loss(const Tensor& norms, const Tensor& targets, const MarginLossParams& params);

struct LossTerms {
  Tensor total;
  double classification = 0.0;  // weighted margin term
  double regression = 0.0;      // mean squared error, before lambda_reg
  double reconstruction = 0.0;  // mean squared error, before lambda_recon; 0 when disabled
};

// sum_k w_k L_k + lambda_reg * MSE(reg) + lambda_recon * MSE(recon).
// `reconstruction` may be undefined, in which case that term is skipped.
LossTerms cardiocaps_loss(const Tensor& norms, const Tensor& targets, const Tensor& reg_pred, const Tensor& reg_target,
                          const Tensor& reconstruction, const Tensor& images, const WeightedLossParams& weighted,
                          const MarginLossParams& margin = {});

// -sum_b w_{y_b} log softmax(logits)_{b, y_b} / sum_b w_{y_b}
Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> labels, std::span<const double> class_weights);

}  // namespace capsroute
