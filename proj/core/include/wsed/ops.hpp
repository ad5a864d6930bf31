// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operators. Each function computes its forward value eagerly
// and records a backward closure on the given Graph when any input requires
// gradient. No broadcasting: elementwise operators require identical shapes.
#pragma once

#include <cstddef>
#include <vector>

#include "wsed/tensor.hpp"

namespace wsed {

enum class Mode { train, eval };

/// Per-channel running statistics owned by a model's batch-norm layer.
struct BatchNormStats {
  explicit BatchNormStats(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}

  /// Installs explicit statistics and marks them initialized.
  void set(std::vector<double> mean, std::vector<double> var);

  std::vector<double> running_mean;
  std::vector<double> running_var;
  bool initialized = false;
};

namespace ops {

inline constexpr double kBatchNormEps = 1e-5;
/// Weight kept by the running statistics on each update.
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBceClamp = 1e-7;

struct Padding {
  std::size_t h = 0;
  std::size_t w = 0;
};

/// Arithmetic used by the conv2d matrix products. f32 rounds the unfolded
/// input, kernel and output gradient to single precision and accumulates the
/// products back into 64-bit tensors; everything else stays 64-bit.
enum class ConvPrecision { f64, f32 };

/// Precision for conv2d on the calling thread (default f64).
ConvPrecision conv_precision();
void set_conv_precision(ConvPrecision precision);

/// Sets the calling thread's conv2d precision for the guard's lifetime.
class ConvPrecisionScope {
 public:
  explicit ConvPrecisionScope(ConvPrecision precision) : saved_(conv_precision()) {
    set_conv_precision(precision);
  }
  ~ConvPrecisionScope() { set_conv_precision(saved_); }
  ConvPrecisionScope(const ConvPrecisionScope&) = delete;
  ConvPrecisionScope& operator=(const ConvPrecisionScope&) = delete;

 private:
  ConvPrecision saved_;
};

/// Stride-1 cross-correlation. input [N,Cin,H,W], kernel [Cout,Cin,kh,kw],
/// bias [Cout] -> [N,Cout,H+2ph-kh+1,W+2pw-kw+1].
Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              Padding pad);

/// Batch normalization over (N,H,W) per channel. Train mode normalizes with
/// the biased batch variance and folds the unbiased variance into `stats`;
/// eval mode reads `stats` and throws if they were never initialized.
Tensor batchnorm2d(Graph& g, const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   Mode mode, BatchNormStats& stats);

Tensor relu(Graph& g, const Tensor& x);
Tensor sigmoid(Graph& g, const Tensor& x);

/// 2x2 average pooling with stride 2 on [N,C,H,W]; H and W must be even.
Tensor avgpool2d(Graph& g, const Tensor& x);

/// Nearest-neighbour 2x upsampling on [N,C,H,W].
Tensor upsample2x_nearest(Graph& g, const Tensor& x);

/// Affine map on the last axis: [..., Din] x W[Dout,Din] + b[Dout] -> [..., Dout].
Tensor linear(Graph& g, const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor softmax_along(Graph& g, const Tensor& x, std::size_t axis);

/// Sums out `axis`; the result has rank one lower.
Tensor sum_along(Graph& g, const Tensor& x, std::size_t axis);

Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& x, double factor);

Tensor reshape(Graph& g, const Tensor& x, Shape shape);

/// Output axis i is input axis perm[i].
Tensor permute(Graph& g, const Tensor& x, const std::vector<std::size_t>& perm);

/// Mean binary cross-entropy; predictions are clamped to [1e-7, 1-1e-7]
/// and the clamp's zero derivative is respected outside that interval.
Tensor bce_loss(Graph& g, const Tensor& pred, const Tensor& target);

Tensor mse_loss(Graph& g, const Tensor& pred, const Tensor& target);

}  // namespace ops
}  // namespace wsed
