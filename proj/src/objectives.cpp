#include "capsroute/objectives.hpp"

#include <cmath>
#include <numeric>

#include "capsroute/errors.hpp"
#include "capsroute/ops.hpp"

namespace capsroute {

void MarginLossParams::validate() const {
  if (!(0.0 <= m_minus && m_minus < m_plus && m_plus <= 1.0)) {
    throw ConfigError("margin loss needs 0 <= m_minus < m_plus <= 1");
  }
  if (lambda_neg < 0.0) throw ConfigError("margin loss lambda must be non-negative");
}

std::vector<double> WeightedLossParams::class_weights() const {
  std::vector<double> w(class_proportions.size(), 1.0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (weight_mode == WeightMode::literal) w[k] = class_proportions[k];
    if (weight_mode == WeightMode::inverse) w[k] = 1.0 - class_proportions[k];
  }
  return w;
}

void WeightedLossParams::validate() const {
  if (lambda_reg < 0.0) throw ConfigError("lambda_reg must be non-negative");
  if (lambda_recon < 0.0) throw ConfigError("lambda_recon must be non-negative");
  const double total = std::accumulate(class_proportions.begin(), class_proportions.end(), 0.0);
  if (class_proportions.empty() || std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("class proportions must sum to 1");
  }
  for (double p : class_proportions) {
    if (p < 0.0) throw ConfigError("class proportions must be non-negative");
  }
}

std::vector<double> class_proportions(std::span<const int> labels, std::size_t classes) {
  if (labels.empty()) throw ContractError("class proportions of an empty label set");
  std::vector<double> counts(classes, 0.0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw ContractError("label out of range");
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(labels.size());
  return counts;
}

Tensor one_hot(std::span<const int> labels, std::size_t classes) {
  Tensor t(Shape{labels.size(), classes}, 0.0);
  auto d = t.data();
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes) throw ContractError("label out of range");
    d[b * classes + static_cast<std::size_t>(labels[b])] = 1.0;
  }
  return t;
}

namespace {

void check_one_hot(const Tensor& norms, const Tensor& targets) {
  if (norms.rank() != 2 || targets.shape() != norms.shape()) {
    throw ContractError("targets " + shape_str(targets.shape()) + " must match norms " + shape_str(norms.shape()));
  }
  const std::size_t classes = norms.dim(1);
  const auto t = targets.data();
  for (std::size_t b = 0; b < norms.dim(0); ++b) {
    double row = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      const double v = t[b * classes + k];
      if (v != 0.0 && v != 1.0) throw ContractError("targets are not one-hot");
      row += v;
    }
    if (row != 1.0) throw ContractError("targets are not one-hot");
  }
}

}  // namespace

Tensor margin_terms(const Tensor& norms, const Tensor& targets, const MarginLossParams& params) {
  params.validate();
  check_one_hot(norms, targets);
  const Tensor present = ops::square(ops::relu(ops::add_scalar(ops::scale(norms, -1.0), params.m_plus)));
  const Tensor absent = ops::square(ops::relu(ops::add_scalar(norms, -params.m_minus)));
  const Tensor not_targets = ops::add_scalar(ops::scale(targets, -1.0), 1.0);
  const Tensor per_sample =
      ops::add(ops::mul(targets, present), ops::scale(ops::mul(not_targets, absent), params.lambda_neg));
  return ops::scale(ops::sum(per_sample, 0), 1.0 / static_cast<double>(norms.dim(0)));
}

Tensor margin_loss(const Tensor& norms, const Tensor& targets, const MarginLossParams& params) {
  return ops::sum_all(margin_terms(norms, targets, params));
}

LossTerms cardiocaps_loss(const Tensor& norms, const Tensor& targets, const Tensor& reg_pred, const Tensor& reg_target,
                          const Tensor& reconstruction, const Tensor& images, const WeightedLossParams& weighted,
                          const MarginLossParams& margin) {
  weighted.validate();
  if (weighted.class_proportions.size() != norms.dim(1)) {
    throw ConfigError("class proportions cover " + std::to_string(weighted.class_proportions.size()) +
                      " classes, norms have " + std::to_string(norms.dim(1)));
  }
  if (reg_pred.shape() != reg_target.shape() || reg_pred.dim(0) != norms.dim(0)) {
    throw DimensionError("regression prediction " + shape_str(reg_pred.shape()) + " vs target " +
                         shape_str(reg_target.shape()));
  }
  const std::vector<double> w = weighted.class_weights();
  const Tensor weights(Shape{w.size()}, w);
  LossTerms terms;
  Tensor classification = ops::sum_all(ops::mul(margin_terms(norms, targets, margin), weights));
  Tensor regression = ops::mean_all(ops::square(ops::sub(reg_pred, reg_target)));
  terms.classification = classification.item();
  terms.regression = regression.item();
  Tensor total = ops::add(classification, ops::scale(regression, weighted.lambda_reg));
  if (reconstruction.defined() && weighted.lambda_recon > 0.0) {
    const Tensor flat = ops::reshape(images, reconstruction.shape());
    Tensor recon = ops::mean_all(ops::square(ops::sub(reconstruction, flat)));
    terms.reconstruction = recon.item();
    total = ops::add(total, ops::scale(recon, weighted.lambda_recon));
  }
  terms.total = total;
  return terms;
}

Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> labels, std::span<const double> class_weights) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || logits.dim(1) != class_weights.size()) {
    throw DimensionError("weighted cross-entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels and " + std::to_string(class_weights.size()) +
                         " class weights");
  }
  const std::size_t classes = class_weights.size();
  Tensor mask(logits.shape(), 0.0);
  auto m = mask.data();
  double norm = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const auto y = static_cast<std::size_t>(labels[b]);
    if (labels[b] < 0 || y >= classes) throw ContractError("label out of range");
    m[b * classes + y] = class_weights[y];
    norm += class_weights[y];
  }
  if (!(norm > 0.0)) throw ConfigError("class weights of the batch sum to zero");
  return ops::scale(ops::sum_all(ops::mul(mask, ops::log_softmax(logits, 1))), -1.0 / norm);
}

}  // namespace capsroute
