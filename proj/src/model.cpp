#include "capsroute/model.hpp"

#include <cmath>
#include <sstream>

#include "capsroute/errors.hpp"
#include "capsroute/ops.hpp"
#include "capsroute/rng.hpp"

namespace capsroute {

namespace {

std::size_t conv_out(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

Tensor conv_bias_relu(const Tensor& x, const ConvParams& conv) {
  Tensor y = ops::conv2d(x, conv.weight, conv.stride, conv.padding);
  y = ops::add(y, ops::reshape(conv.bias, Shape{1, conv.bias.numel(), 1, 1}));
  return ops::relu(y);
}

}  // namespace

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  Batch batch;
  const std::size_t per = data.sample_size();
  std::vector<double> pixels;
  pixels.reserve(indices.size() * per);
  std::vector<double> targets;
  for (std::size_t i : indices) {
    const auto img = data.image(i);
    pixels.insert(pixels.end(), img.begin(), img.end());
    batch.labels.push_back(data.labels[i]);
    targets.push_back(data.y_reg[i]);
  }
  batch.images = Tensor(Shape{indices.size(), data.channels, data.height, data.width}, std::move(pixels));
  batch.y_reg = Tensor(Shape{indices.size()}, std::move(targets));
  return batch;
}

Tensor& Model::add_param(const std::string& name, Shape shape, double bound, std::uint64_t seed) {
  Tensor t(std::move(shape), 0.0, true);
  if (bound > 0.0) {
    Rng rng(stream_key(seed, 0x706172616d, params_.size()));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
  }
  params_.push_back(NamedParameter{name, t});
  return params_.back().value;
}

Model::Model(ModelConfig config, Shape input_shape, std::uint64_t seed)
    : config_(std::move(config)), input_shape_(std::move(input_shape)) {
  require(input_shape_.size() == 3, "input shape must be [C, H, W]");
  const std::size_t channels = input_shape_[0], h = input_shape_[1], w = input_shape_[2];
  const std::size_t k = config_.conv_kernel;
  const std::size_t hidden = config_.hidden_dim;
  require(k >= 1 && hidden >= 1, "conv_kernel and hidden_dim must be positive");
  require(config_.num_classes >= 2, "num_classes must be at least 2");
  config_.margin.validate();
  config_.loss.validate();
  std::ostringstream summary;

  auto make_conv = [&](const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                       std::size_t stride, std::size_t padding) {
    ConvParams p;
    const double bound = std::sqrt(6.0 / static_cast<double>(in * kernel * kernel));
    p.weight = add_param(name + ".weight", Shape{out, in, kernel, kernel}, bound, seed);
    p.bias = add_param(name + ".bias", Shape{out}, 0.0, seed);
    p.stride = stride;
    p.padding = padding;
    return p;
  };
  auto make_linear = [&](const std::string& name, std::size_t in, std::size_t out) {
    Linear l;
    l.weight = add_param(name + ".weight", Shape{in, out}, std::sqrt(6.0 / static_cast<double>(in)), seed);
    l.bias = add_param(name + ".bias", Shape{out}, 0.0, seed);
    return l;
  };

  require(k <= h && k <= w, "conv kernel " + std::to_string(k) + " exceeds input " + shape_str(input_shape_));
  const std::size_t h1 = conv_out(h, k, 1, 0), w1 = conv_out(w, k, 1, 0);
  conv1_ = make_conv("conv1", channels, hidden, k, 1, 0);
  summary << "input " << channels << "x" << h << "x" << w << " -> conv " << hidden << "x" << h1 << "x" << w1;

  if (config_.architecture == Architecture::cardiocaps) {
    require(config_.d_primary >= 1 && config_.d_digit >= 1, "capsule dimensions must be positive");
    require(hidden % config_.d_primary == 0, "hidden_dim " + std::to_string(hidden) +
                                                 " not divisible by d_primary " + std::to_string(config_.d_primary));
    require(k <= h1 && k <= w1, "primary capsule kernel " + std::to_string(k) + " exceeds conv output " +
                                    std::to_string(h1) + "x" + std::to_string(w1) + " of input " +
                                    shape_str(input_shape_));
    require(config_.primary_stride >= 1, "primary_stride must be positive");
    const std::size_t gh = conv_out(h1, k, config_.primary_stride, 0);
    const std::size_t gw = conv_out(w1, k, config_.primary_stride, 0);
    const std::size_t maps = hidden / config_.d_primary;
    const std::size_t n_in = maps * gh * gw;
    const std::size_t n_out = config_.num_classes, d_out = config_.d_digit;
    primary_ = make_conv("primary", hidden, hidden, k, config_.primary_stride, 0);
    summary << " -> primary " << n_in << " caps (" << maps << " maps of " << gh << "x" << gw << ") x" << config_.d_primary;

    affine_.kind = config_.affine_kind;
    if (affine_.kind == AffineKind::shared) {
      affine_.weight = add_param("affine.weight", Shape{n_in, config_.d_primary, n_out * d_out},
                                 std::sqrt(6.0 / static_cast<double>(config_.d_primary)), seed);
    } else if (affine_.kind == AffineKind::conv) {
      affine_.conv = make_conv("affine.conv", config_.d_primary, n_out * d_out, 3, 1, 1);
    }

    routing_.method = config_.routing;
    routing_.iterations = config_.routing_iterations;
    routing_.softmax_axis = config_.attention_axis;
    routing_.scale_by_sqrt_d = config_.attention_scale;
    if (routing_.method == RoutingMethod::attention) {
      routing_.projection.weight =
          add_param("attention.weight", Shape{d_out}, std::sqrt(1.0 / static_cast<double>(d_out)), seed);
      routing_.projection.bias = add_param("attention.bias", Shape{1}, 0.0, seed);
    } else {
      require(routing_.iterations >= 1, "routing_iterations must be >= 1");
    }
    regression_ = make_linear("regression", n_out * d_out, 1);
    decoder_.hidden1 = make_linear("decoder.fc1", n_out * d_out, config_.decoder_hidden1);
    decoder_.hidden2 = make_linear("decoder.fc2", config_.decoder_hidden1, config_.decoder_hidden2);
    decoder_.output = make_linear("decoder.fc3", config_.decoder_hidden2, channels * h * w);
    summary << " -> digits " << n_out << "x" << d_out;
  } else {
    std::size_t h2 = h1, w2 = w1;
    if (config_.architecture == Architecture::cnn1) {
      require(h2 >= 2 && w2 >= 2, "cnn1 pooling does not fit " + std::to_string(h2) + "x" + std::to_string(w2));
      h2 /= 2;
      w2 /= 2;
      summary << " -> pool " << h2 << "x" << w2;
    }
    require(k <= h2 && k <= w2, "second conv kernel " + std::to_string(k) + " exceeds " + std::to_string(h2) + "x" +
                                    std::to_string(w2));
    h2 = conv_out(h2, k, 1, 0);
    w2 = conv_out(w2, k, 1, 0);
    summary << " -> conv " << h2 << "x" << w2;
    require(h2 >= 2 && w2 >= 2, "final pooling does not fit " + std::to_string(h2) + "x" + std::to_string(w2));
    h2 /= 2;
    w2 /= 2;
    summary << " -> pool " << h2 << "x" << w2;
    cnn_conv2_ = make_conv("conv2", hidden, hidden, k, 1, 0);
    classifier_ = make_linear("classifier", hidden * h2 * w2, config_.num_classes);
    summary << " -> logits " << config_.num_classes;
  }
  shape_summary_ = summary.str();
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void Model::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

ModelOutput Model::forward(const Tensor& images, bool with_reconstruction) const {
  if (images.rank() != 4 || Shape(images.shape().begin() + 1, images.shape().end()) != input_shape_) {
    throw DimensionError("model expects [B]+" + shape_str(input_shape_) + ", got " + shape_str(images.shape()));
  }
  ModelOutput out;
  Tensor features = conv_bias_relu(images, conv1_);
  if (config_.architecture == Architecture::cardiocaps) {
    CapsuleBank primary = primary_capsules(features, config_.d_primary, primary_);
    Tensor votes = compute_votes(primary, affine_, config_.num_classes, config_.d_digit);
    auto [digits, state] = route(votes, routing_);
    out.digits = digits;
    out.routing = std::move(state);
    out.norms = ops::vector_norm(digits.activations);
    out.regression = regression_head(digits, regression_);
    if (with_reconstruction && config_.loss.lambda_recon > 0.0) out.reconstruction = fc_decoder(digits, decoder_);
    return out;
  }
  if (config_.architecture == Architecture::cnn1) features = ops::max_pool2d(features, 2);
  features = ops::max_pool2d(conv_bias_relu(features, cnn_conv2_), 2);
  const std::size_t batch = images.dim(0);
  Tensor flat = ops::reshape(features, Shape{batch, features.numel() / batch});
  out.logits = linear(flat, classifier_);
  return out;
}

LossTerms Model::loss(const ModelOutput& output, const Batch& batch) const {
  if (config_.architecture == Architecture::cardiocaps) {
    const Tensor targets = one_hot(batch.labels, config_.num_classes);
    return cardiocaps_loss(output.norms, targets, output.regression, batch.y_reg, output.reconstruction, batch.images,
                           config_.loss, config_.margin);
  }
  const std::vector<double> weights = config_.loss.class_weights();
  LossTerms terms;
  terms.total = weighted_cross_entropy(output.logits, batch.labels, weights);
  terms.classification = terms.total.item();
  return terms;
}

std::vector<Prediction> Model::predict(const ModelOutput& output) const {
  if (config_.architecture == Architecture::cardiocaps) return classify(output.digits, 1);
  const Tensor probs = ops::softmax(output.logits, 1);
  const std::size_t batch = probs.dim(0), classes = probs.dim(1);
  const auto p = probs.data();
  std::vector<Prediction> preds(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 1; k < classes; ++k) {
      if (p[b * classes + k] > p[b * classes + preds[b].label]) preds[b].label = k;
    }
    preds[b].score = p[b * classes + 1];
  }
  return preds;
}

Model build_model(const ModelConfig& config, const Shape& input_shape, std::uint64_t seed) {
  return Model(config, input_shape, seed);
}

}  // namespace capsroute
