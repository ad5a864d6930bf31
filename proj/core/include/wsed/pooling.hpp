// SPDX-License-Identifier: Apache-2.0
//
// Clip-level pooling of per-category segmentation maps Z [N, C, F', T'].
//
// Two-step attention pools frequency first, then time. Both steps apply
// C x C linear maps across the category axis at every position:
//
//   step 1, per (f, t):  a1 = sigmoid(W_a1 z + b_a1),  c1 = W_c1 z + b_c1
//                        A1 = softmax of a1 over f,     p1[t] = sum_f c1 * A1
//   step 2, per t:       a2 = sigmoid(W_a2 p1 + b_a2), c2 = sigmoid(W_c2 p1 + b_c2)
//                        A2 = softmax of a2 over t,     P = sum_t c2 * A2
//
// P is a convex combination of sigmoid outputs and therefore lies in [0, 1].
// The baselines (gap, gmp, gwrp) return pre-sigmoid scores.
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "wsed/rng.hpp"
#include "wsed/tensor.hpp"

namespace wsed {

enum class PoolingKind { two_step_attention, gap, gmp, gwrp };

/// "2ap", "gap", "gmp", "gwrp"
std::string pooling_name(PoolingKind kind);
PoolingKind parse_pooling(const std::string& name);

struct TwoStepAttentionParams {
  Tensor att1_weight, att1_bias;  ///< W_a1 [C,C], b_a1 [C]
  Tensor cls1_weight, cls1_bias;  ///< W_c1, b_c1
  Tensor att2_weight, att2_bias;  ///< W_a2, b_a2
  Tensor cls2_weight, cls2_bias;  ///< W_c2, b_c2

  /// Uniform attention at start (W_a = 0, b_a = 0), Kaiming-uniform W_c,
  /// zero b_c. All tensors require grad.
  static TwoStepAttentionParams init(std::size_t num_classes, Rng& rng);

  std::vector<NamedTensor> named(const std::string& prefix = "pool.") const;
};

/// Intermediate quantities of one two-step attention pass, detached from the
/// graph and laid out category-major.
struct AttentionTrace {
  Tensor za1;  ///< [N, C, F', T'] frequency attention weights
  Tensor zc1;  ///< [N, C, F', T']
  Tensor zp1;  ///< [N, C, T']
  Tensor za2;  ///< [N, C, T'] time attention weights
  Tensor zc2;  ///< [N, C, T']
  Tensor zp2;  ///< [N, C] clip probabilities
};

struct TwoStepAttentionResult {
  Tensor probs;  ///< [N, C]
  AttentionTrace trace;
};

/// Throws NumericError if Z holds non-finite values.
TwoStepAttentionResult two_step_attention(Graph& g, const Tensor& z,
                                          const TwoStepAttentionParams& params);

/// Mean over (F', T') per category: [N, C].
Tensor gap(Graph& g, const Tensor& z);
/// Max over (F', T'); the gradient goes to the first maximal cell in
/// row-major order.
Tensor gmp(Graph& g, const Tensor& z);
/// Rank-weighted mean with decay d in [0, 1]: cells sorted descending get
/// weights d^0, d^1, ...; d = 1 is gap, d = 0 is gmp (0^0 = 1).
Tensor gwrp(Graph& g, const Tensor& z, double decay);

/// Max along `axis` (first index wins ties); the axis is removed.
Tensor max_along(Graph& g, const Tensor& x, std::size_t axis);
/// Global weighted rank pooling along `axis`; the axis is removed.
Tensor gwrp_along(Graph& g, const Tensor& x, std::size_t axis, double decay);

}  // namespace wsed
