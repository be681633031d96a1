#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "capsroute/capsule.hpp"

namespace capsroute {

enum class RoutingMethod { dynamic, attention };
enum class SoftmaxAxis { input_caps, output_caps };

/// Shared 1x1 projection of a D_out-dim vote to a scalar logit.
struct AttentionProjection {
  Tensor weight;  // [D_out]
  Tensor bias;    // [1]
};

struct RoutingSpec {
  RoutingMethod method = RoutingMethod::attention;
  int iterations = 3;  // dynamic only
  AttentionProjection projection;
  SoftmaxAxis softmax_axis = SoftmaxAxis::input_caps;
  bool scale_by_sqrt_d = false;
};

/// Routing logits and coefficients, each [batch, N_in, N_out]. For dynamic
/// routing `coefficient_history[t]` / `output_history[t]` hold c and v of
/// iteration t; `logits` is b after the final update.
struct RoutingState {
  Tensor logits;
  Tensor coefficients;
  std::vector<Tensor> coefficient_history;
  std::vector<Tensor> output_history;
};

std::pair<CapsuleBank, RoutingState> dynamic_routing(const Tensor& votes, int iterations);
std::pair<CapsuleBank, RoutingState> attention_routing(const Tensor& votes, const RoutingSpec& spec);
std::pair<CapsuleBank, RoutingState> route(const Tensor& votes, const RoutingSpec& spec);

}  // namespace capsroute
