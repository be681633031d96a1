#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "capsroute/capsule.hpp"
#include "capsroute/heads.hpp"
#include "capsroute/objectives.hpp"
#include "capsroute/routing.hpp"
#include "capsroute/synth.hpp"

namespace capsroute {

enum class Architecture { cardiocaps, cnn1, cnn2 };

struct ModelConfig {
  Architecture architecture = Architecture::cardiocaps;
  std::size_t hidden_dim = 32;
  std::size_t conv_kernel = 9;
  std::size_t primary_stride = 2;
  std::size_t d_primary = 8;
  std::size_t d_digit = 16;
  std::size_t num_classes = 2;
  AffineKind affine_kind = AffineKind::shared;
  RoutingMethod routing = RoutingMethod::attention;
  int routing_iterations = 3;
  SoftmaxAxis attention_axis = SoftmaxAxis::input_caps;
  bool attention_scale = false;
  std::size_t decoder_hidden1 = 128;
  std::size_t decoder_hidden2 = 256;
  MarginLossParams margin;
  WeightedLossParams loss;

  // hidden 32, kernel 9, primary dim 8, digit dim 16.
  static ModelConfig full() { return {}; }
  // Desk-scale variant with 16 hidden channels.
  static ModelConfig small() {
    ModelConfig c;
    c.hidden_dim = 16;
    return c;
  }
};

struct NamedParameter {
  std::string name;
  Tensor value;
};

struct Batch {
  Tensor images;  // [B, C, H, W]
  std::vector<int> labels;
  Tensor y_reg;  // [B]
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);

struct ModelOutput {
  CapsuleBank digits;     // cardiocaps only
  Tensor norms;           // [B, C], cardiocaps only
  Tensor regression;      // [B], cardiocaps only
  Tensor reconstruction;  // [B, C*H*W] when requested
  Tensor logits;          // [B, C], CNN baselines only
  RoutingState routing;
};

/// CardioCaps (conv + ReLU -> primary capsules -> votes -> routing -> class,
/// regression and decoder heads) or one of the two CNN baselines.
class Model {
 public:
  Model(ModelConfig config, Shape input_shape, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ModelConfig& config() { return config_; }
  const Shape& input_shape() const { return input_shape_; }

  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();

  // Decoder output is only computed when `with_reconstruction` is set and lambda_recon > 0.
  ModelOutput forward(const Tensor& images, bool with_reconstruction = true) const;
  LossTerms loss(const ModelOutput& output, const Batch& batch) const;
  std::vector<Prediction> predict(const ModelOutput& output) const;

  // Spatial extents after each stage, e.g. "conv 24x24 -> primary 8x8x2 -> digits 2x16".
  std::string shape_summary() const { return shape_summary_; }

 private:
  Tensor& add_param(const std::string& name, Shape shape, double bound, std::uint64_t seed);

  ModelConfig config_;
  Shape input_shape_;
  std::vector<NamedParameter> params_;
  std::string shape_summary_;

  ConvParams conv1_;
  ConvParams primary_;
  AffineParams affine_;
  RoutingSpec routing_;
  Linear regression_;
  FcDecoder decoder_;

  ConvParams cnn_conv2_;
  Linear classifier_;
};

Model build_model(const ModelConfig& config, const Shape& input_shape, std::uint64_t seed);

}  // namespace capsroute
