#include "capsroute/grad_suite.hpp"

#include <cmath>
#include <functional>
#include <map>

#include "capsroute/capsule.hpp"
#include "capsroute/heads.hpp"
#include "capsroute/model.hpp"
#include "capsroute/objectives.hpp"
#include "capsroute/ops.hpp"
#include "capsroute/rng.hpp"
#include "capsroute/routing.hpp"

namespace capsroute {

namespace {

constexpr double kOpTolerance = 1e-6;
constexpr double kModelTolerance = 1e-4;

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : seed_(seed) {}

  // Uniform in [lo, hi].
  Tensor uniform(Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    Rng rng(stream_key(seed_, 0x7375697465, counter_++));
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
  }

  // Magnitudes in [0.2, 1] with random sign; keeps relu away from its kink.
  Tensor off_zero(Shape shape) {
    Tensor t = uniform(std::move(shape), 0.2, 1.0);
    Rng rng(stream_key(seed_, 0x7369676e, counter_++));
    for (double& v : t.data()) v = rng.uniform() < 0.5 ? -v : v;
    return t;
  }

  // Contracts an arbitrary output with fixed random weights into a scalar.
  Tensor project(const Tensor& y) {
    auto it = weights_.find(y.numel());
    if (it == weights_.end()) it = weights_.emplace(y.numel(), uniform(Shape{y.numel()})).first;
    return ops::sum_all(ops::mul(ops::reshape(y, Shape{y.numel()}), it->second));
  }

  void check(const std::string& name, const std::function<Tensor()>& fn, std::vector<Tensor> inputs,
             double tolerance = kOpTolerance, std::size_t samples = 0) {
    GradCheckOptions opts;
    opts.sample_count = samples;
    opts.seed = seed_;
    entries_.push_back({name, tolerance, check_gradients(fn, std::move(inputs), opts)});
  }

  std::vector<GradSuiteEntry> take() { return std::move(entries_); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::map<std::size_t, Tensor> weights_;
  std::vector<GradSuiteEntry> entries_;
};

void elementwise_cases(Suite& s) {
  Tensor a = s.uniform({3, 4});
  Tensor b = s.uniform({4});
  Tensor c = s.uniform({3, 1});
  Tensor pos = s.uniform({3, 4}, 0.5, 2.0);
  Tensor pos_row = s.uniform({1, 4}, 0.5, 2.0);
  Tensor nz = s.off_zero({3, 4});
  s.check("add (broadcast)", [&] { return s.project(ops::add(a, b)); }, {a, b});
  s.check("sub (broadcast)", [&] { return s.project(ops::sub(c, a)); }, {a, c});
  s.check("mul (broadcast)", [&] { return s.project(ops::mul(a, c)); }, {a, c});
  s.check("div (broadcast)", [&] { return s.project(ops::div(a, pos_row)); }, {a, pos_row});
  s.check("relu", [&] { return s.project(ops::relu(nz)); }, {nz});
  s.check("square", [&] { return s.project(ops::square(a)); }, {a});
  s.check("sqrt", [&] { return s.project(ops::sqrt(pos)); }, {pos});
  s.check("exp", [&] { return s.project(ops::exp(a)); }, {a});
  s.check("log", [&] { return s.project(ops::log(pos)); }, {pos});
  s.check("sigmoid", [&] { return s.project(ops::sigmoid(a)); }, {a});
  s.check("scale", [&] { return s.project(ops::scale(a, -2.5)); }, {a});
  s.check("add_scalar", [&] { return s.project(ops::square(ops::add_scalar(a, 0.3))); }, {a});
}

void structural_cases(Suite& s) {
  Tensor a = s.uniform({2, 3, 4});
  s.check("sum axis 1", [&] { return s.project(ops::sum(a, 1)); }, {a});
  s.check("sum axis -1 keepdim", [&] { return s.project(ops::sum(a, -1, true)); }, {a});
  s.check("sum_all", [&] { return ops::square(ops::sum_all(a)); }, {a});
  s.check("mean_all", [&] { return ops::square(ops::mean_all(a)); }, {a});
  s.check("reshape", [&] { return s.project(ops::square(ops::reshape(a, {6, 4}))); }, {a});
  s.check("permute", [&] { return s.project(ops::square(ops::permute(a, {2, 0, 1}))); }, {a});
  Tensor m1 = s.uniform({2, 3, 4});
  Tensor m2 = s.uniform({4, 5});
  s.check("matmul (broadcast batch)", [&] { return s.project(ops::matmul(m1, m2)); }, {m1, m2});
  Tensor x = s.uniform({2, 2, 7, 7});
  Tensor w = s.uniform({3, 2, 3, 3});
  s.check("conv2d stride 1", [&] { return s.project(ops::conv2d(x, w)); }, {x, w});
  s.check("conv2d stride 2 pad 1", [&] { return s.project(ops::conv2d(x, w, 2, 1)); }, {x, w});
  Tensor p(Shape{2, 2, 4, 4});
  {
    // Distinct values separated by far more than the step keep max-pool differentiable.
    Rng rng(stream_key(1, 2));
    auto d = p.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = 0.05 * static_cast<double>(i);
    rng.shuffle(d);
  }
  s.check("max_pool2d", [&] { return s.project(ops::max_pool2d(p, 2)); }, {p});
  Tensor z = s.uniform({3, 5}, -2.0, 2.0);
  s.check("softmax axis 1", [&] { return s.project(ops::softmax(z, 1)); }, {z});
  s.check("softmax axis 0", [&] { return s.project(ops::softmax(z, 0)); }, {z});
  s.check("log_softmax", [&] { return s.project(ops::log_softmax(z, -1)); }, {z});
  s.check("vector_norm", [&] { return s.project(ops::vector_norm(a)); }, {a});
  Tensor lx = s.uniform({4, 6});
  Tensor lw = s.uniform({6, 3});
  Tensor lb = s.uniform({3});
  s.check("linear", [&] { return s.project(ops::linear(lx, lw, lb)); }, {lx, lw, lb});
}

void capsule_cases(Suite& s) {
  Tensor v = s.uniform({2, 5, 4}, -2.0, 2.0);
  s.check("squash", [&] { return s.project(squash(v)); }, {v});

  Tensor feat = s.uniform({2, 3, 7, 7});
  ConvParams conv{s.uniform({8, 3, 3, 3}, -0.5, 0.5), s.uniform({8}, -0.1, 0.1), 2, 0};
  s.check("primary_capsules", [&] { return s.project(primary_capsules(feat, 4, conv).activations); },
          {feat, conv.weight, conv.bias});

  const CapsuleBank bank = primary_capsules(feat, 4, conv);
  Tensor u = s.uniform({2, bank.count(), 4});
  CapsuleBank ub = bank;
  ub.activations = u;
  AffineParams shared{AffineKind::shared, s.uniform({bank.count(), 4, 2 * 3}), {}};
  s.check("votes (shared affine)", [&] { return s.project(compute_votes(ub, shared, 2, 3)); }, {u, shared.weight});
  AffineParams convaff;
  convaff.kind = AffineKind::conv;
  convaff.conv = {s.uniform({2 * 3, 4, 3, 3}, -0.5, 0.5), s.uniform({6}, -0.1, 0.1), 1, 1};
  s.check("votes (conv affine)", [&] { return s.project(compute_votes(ub, convaff, 2, 3)); },
          {u, convaff.conv.weight, convaff.conv.bias});
  AffineParams constant;
  constant.kind = AffineKind::constant;
  s.check("votes (constant affine)", [&] { return s.project(compute_votes(ub, constant, 2, 3)); }, {u});

  Tensor votes = s.uniform({2, 6, 3, 4}, -0.5, 0.5);
  for (int r : {1, 3}) {
    s.check("dynamic routing r=" + std::to_string(r),
            [&, r] { return s.project(dynamic_routing(votes, r).first.activations); }, {votes});
  }
  RoutingSpec spec;
  spec.projection = {s.uniform({4}), s.uniform({1})};
  for (auto axis : {SoftmaxAxis::input_caps, SoftmaxAxis::output_caps}) {
    for (bool scaled : {false, true}) {
      RoutingSpec sp = spec;
      sp.softmax_axis = axis;
      sp.scale_by_sqrt_d = scaled;
      const std::string name = std::string("attention routing ") +
                               (axis == SoftmaxAxis::input_caps ? "input axis" : "output axis") +
                               (scaled ? " scaled" : "");
      s.check(name, [&, sp] { return s.project(attention_routing(votes, sp).first.activations); },
              {votes, spec.projection.weight, spec.projection.bias});
    }
  }

  CapsuleBank digits;
  digits.activations = s.uniform({2, 2, 4}, -0.5, 0.5);
  FcDecoder dec{{s.uniform({8, 5}), s.uniform({5})}, {s.uniform({5, 6}), s.uniform({6})},
                {s.uniform({6, 9}), s.uniform({9})}};
  s.check("fc_decoder", [&] { return s.project(fc_decoder(digits, dec)); },
          {digits.activations, dec.hidden1.weight, dec.hidden2.weight, dec.output.weight, dec.output.bias});
  Linear head{s.uniform({8, 1}), s.uniform({1})};
  s.check("regression_head", [&] { return s.project(regression_head(digits, head)); },
          {digits.activations, head.weight, head.bias});
}

void loss_cases(Suite& s) {
  // Norms kept clear of the 0.1 and 0.9 margins.
  Tensor norms(Shape{4, 2}, std::vector<double>{0.35, 0.62, 0.95, 0.05, 0.5, 0.7, 0.2, 0.45});
  const std::vector<int> labels{1, 0, 0, 1};
  const Tensor targets = one_hot(labels, 2);
  s.check("margin loss", [&] { return margin_loss(norms, targets, {}); }, {norms});
  WeightedLossParams wl;
  wl.class_proportions = {0.8, 0.2};
  wl.lambda_recon = 0.01;
  Tensor reg = s.uniform({4});
  Tensor reg_t = s.uniform({4});
  Tensor recon = s.uniform({4, 6}, 0.1, 0.9);
  Tensor img = s.uniform({4, 1, 2, 3}, 0.0, 1.0);
  for (auto mode : {WeightMode::none, WeightMode::literal, WeightMode::inverse}) {
    wl.weight_mode = mode;
    const std::string name = std::string("weighted margin + aux loss (") +
                             (mode == WeightMode::none ? "none" : mode == WeightMode::literal ? "literal" : "inverse") +
                             ")";
    s.check(name, [&, wl] { return cardiocaps_loss(norms, targets, reg, reg_t, recon, img, wl).total; },
            {norms, reg, recon});
  }
  Tensor logits = s.uniform({4, 2}, -2.0, 2.0);
  const std::vector<double> w{0.2, 0.8};
  s.check("weighted cross-entropy", [&] { return weighted_cross_entropy(logits, labels, w); }, {logits});
}

void model_cases(Suite& s, std::uint64_t seed) {
  const Shape input{1, 24, 24};
  Tensor images = s.uniform({2, 1, 24, 24}, 0.0, 1.0);
  Tensor y_reg = s.uniform({2}, 0.2, 0.5);
  for (auto routing : {RoutingMethod::attention, RoutingMethod::dynamic}) {
    ModelConfig mc = ModelConfig::small();
    mc.routing = routing;
    mc.loss.class_proportions = {0.8, 0.2};
    Model model(mc, input, seed);
    Batch batch{images, {0, 1}, y_reg};
    std::vector<Tensor> params;
    for (auto& p : model.parameters()) params.push_back(p.value);
    params.push_back(images);
    const std::string name = std::string("end-to-end CardioCaps-small (") +
                             (routing == RoutingMethod::attention ? "attention" : "dynamic r=3") + ")";
    s.check(name, [&] { return model.loss(model.forward(images, true), batch).total; }, params, kModelTolerance, 400);
  }
  for (auto arch : {Architecture::cnn1, Architecture::cnn2}) {
    ModelConfig mc = ModelConfig::small();
    mc.architecture = arch;
    mc.conv_kernel = 5;
    Model model(mc, input, seed);
    Batch batch{images, {0, 1}, y_reg};
    std::vector<Tensor> params;
    for (auto& p : model.parameters()) params.push_back(p.value);
    s.check(arch == Architecture::cnn1 ? "end-to-end CNN1" : "end-to-end CNN2",
            [&] { return model.loss(model.forward(images, true), batch).total; }, params, kModelTolerance, 400);
  }
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed) {
  Suite s(seed);
  elementwise_cases(s);
  structural_cases(s);
  capsule_cases(s);
  loss_cases(s);
  model_cases(s, seed);
  return s.take();
}

}  // namespace capsroute
