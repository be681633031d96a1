#include "capsroute/routing.hpp"

#include <cmath>

#include "capsroute/errors.hpp"
#include "capsroute/ops.hpp"

namespace capsroute {

namespace {

void check_votes(const Tensor& votes) {
  if (votes.rank() != 4) throw DimensionError("votes must be [batch, N_in, N_out, D_out], got " + shape_str(votes.shape()));
}

// s_j = sum_i c_ij * u_hat_{j|i}
Tensor weighted_vote_sum(const Tensor& coefficients, const Tensor& votes) {
  const Shape& v = votes.shape();
  Tensor c = ops::reshape(coefficients, Shape{v[0], v[1], v[2], 1});
  return ops::sum(ops::mul(c, votes), 1);
}

CapsuleBank digit_bank(Tensor v) {
  CapsuleBank bank;
  bank.activations = std::move(v);
  bank.role = CapsuleRole::digit;
  return bank;
}

}  // namespace

std::pair<CapsuleBank, RoutingState> dynamic_routing(const Tensor& votes, int iterations) {
  if (iterations < 1) throw ConfigError("dynamic routing needs r >= 1, got " + std::to_string(iterations));
  check_votes(votes);
  const Shape& s = votes.shape();
  RoutingState state;
  Tensor b(Shape{s[0], s[1], s[2]}, 0.0);
  Tensor v;
  for (int t = 0; t < iterations; ++t) {
    Tensor c = ops::softmax(b, 2);
    v = squash(weighted_vote_sum(c, votes));
    Tensor agreement = ops::sum(ops::mul(votes, ops::reshape(v, Shape{s[0], 1, s[2], s[3]})), 3);
    b = ops::add(b, agreement);
    state.coefficient_history.push_back(c);
    state.output_history.push_back(v);
  }
  state.logits = b;
  state.coefficients = state.coefficient_history.back();
  return {digit_bank(v), std::move(state)};
}

std::pair<CapsuleBank, RoutingState> attention_routing(const Tensor& votes, const RoutingSpec& spec) {
  if (spec.method != RoutingMethod::attention) throw ContractError("attention_routing called with a dynamic spec");
  check_votes(votes);
  const Shape& s = votes.shape();
  const AttentionProjection& proj = spec.projection;
  if (!proj.weight.defined() || proj.weight.numel() != s[3] || !proj.bias.defined() || proj.bias.numel() != 1) {
    throw DimensionError("attention projection must be weight[" + std::to_string(s[3]) + "] and bias[1]");
  }
  Tensor logits = ops::sum(ops::mul(votes, ops::reshape(proj.weight, Shape{1, 1, 1, s[3]})), 3);
  logits = ops::add(logits, proj.bias);
  if (spec.scale_by_sqrt_d) logits = ops::scale(logits, 1.0 / std::sqrt(static_cast<double>(s[3])));
  Tensor a = ops::softmax(logits, spec.softmax_axis == SoftmaxAxis::input_caps ? 1 : 2);
  Tensor v = squash(weighted_vote_sum(a, votes));
  RoutingState state;
  state.logits = logits;
  state.coefficients = a;
  state.coefficient_history.push_back(a);
  state.output_history.push_back(v);
  return {digit_bank(v), std::move(state)};
}

std::pair<CapsuleBank, RoutingState> route(const Tensor& votes, const RoutingSpec& spec) {
  if (spec.method == RoutingMethod::dynamic) return dynamic_routing(votes, spec.iterations);
  return attention_routing(votes, spec);
}

}  // namespace capsroute
