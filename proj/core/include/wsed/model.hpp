// SPDX-License-Identifier: Apache-2.0
//
// Shared CNN encoder, auxiliary reconstruction decoder and clip-level pooling
// head.
//
//   encoder: 4 x [conv-BN-ReLU, conv-BN-ReLU, avgpool 2x2], then a 1x1 class
//            convolution to C channels (linear) -> Z [N, C, F/16, T/16]
//   decoder: 4 x [upsample 2x, conv-BN-ReLU, conv-BN-ReLU] with the channel
//            plan reversed, then a 1x1 reverse convolution to one channel
//            (linear) -> [N, 1, F, T]
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wsed/ops.hpp"
#include "wsed/pooling.hpp"
#include "wsed/tensor.hpp"

namespace wsed {

inline constexpr std::size_t kTimeMultiple = 16;

struct ModelConfig {
  std::size_t num_classes = 3;
  std::size_t mel_bins = 64;
  std::array<std::size_t, 4> channels{16, 32, 64, 128};
  std::size_t kernel = 3;
  std::size_t padding = 1;
  PoolingKind pooling = PoolingKind::two_step_attention;
  double gwrp_decay = 0.9;

  /// [64, 128, 256, 512]
  static ModelConfig paper(std::size_t num_classes);
  /// [16, 32, 64, 128]
  static ModelConfig desk(std::size_t num_classes);

  /// "paper", "desk", or "custom" for other channel plans.
  std::string profile() const;
  void validate() const;
};

/// Values of a named parameter or buffer, detached from any graph.
struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct ForwardResult {
  Tensor z;      ///< [N, C, F/16, T/16]
  Tensor probs;  ///< [N, C]
  Tensor recon;  ///< [N, 1, F, T]; undefined when the decoder was skipped
  std::optional<AttentionTrace> trace;
};

class SedModel {
 public:
  /// Kaiming-uniform (fan-in) conv weights, zero biases, BN gamma = 1 and
  /// beta = 0, pooling parameters per TwoStepAttentionParams::init.
  SedModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// Trainable parameters in a fixed registration order.
  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  /// Subset of parameters() whose names start with `prefix`.
  std::vector<NamedTensor> parameters_with_prefix(const std::string& prefix) const;

  /// Input [N, 1, F, T] with T a multiple of 16 -> Z.
  Tensor encode(Graph& g, const Tensor& x, Mode mode);
  /// Z -> reconstruction [N, 1, F, T].
  Tensor decode(Graph& g, const Tensor& z, Mode mode);
  /// Z -> clip probabilities [N, C] (sigmoid applied for the baselines).
  Tensor pool(Graph& g, const Tensor& z, std::optional<AttentionTrace>* trace = nullptr);

  ForwardResult forward(Graph& g, const Tensor& x, Mode mode, bool with_decoder = true);

  /// Parameters followed by batch-norm buffers (running_mean, running_var,
  /// initialized) as plain arrays.
  std::vector<NamedArray> state() const;
  /// Restores every entry of state(); names and shapes must match exactly.
  void load_state(const std::vector<NamedArray>& state);

  /// Replaces the parameter handles, in parameters() order, with `tensors`
  /// so a forward pass reads (and differentiates into) caller-owned values.
  void bind_parameters(const std::vector<Tensor>& tensors);

  void zero_grad();
  /// Installs mean 0 / variance 1 statistics in every batch-norm layer.
  void set_unit_batchnorm_stats();

 private:
  struct ConvBn {
    std::size_t weight, bias, gamma, beta;  // indices into params_
    std::string name;
    BatchNormStats stats;
  };
  struct Conv {
    std::size_t weight, bias;
  };

  std::size_t add_param(std::string name, Shape shape);
  ConvBn make_conv_bn(const std::string& block, std::size_t index, std::size_t cin, std::size_t cout);
  Tensor conv_bn_relu(Graph& g, const Tensor& x, ConvBn& layer, Mode mode);

  ModelConfig config_;
  std::vector<NamedTensor> params_;
  std::vector<ConvBn> enc_layers_;  // 8
  Conv class_conv_{};
  std::vector<ConvBn> dec_layers_;  // 8
  Conv reverse_conv_{};
  std::optional<TwoStepAttentionParams> attention_;
};

/// Smallest multiple of 16 that is >= frames.
std::size_t padded_frames(std::size_t frames);

}  // namespace wsed
