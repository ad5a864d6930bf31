// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference verification of analytic gradients.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wsed/tensor.hpp"

namespace wsed {

inline constexpr double kGradcheckEps = 1e-5;
inline constexpr double kGradcheckThreshold = 1e-4;

/// Builds the computation under test from its inputs.
using GraphFn = std::function<Tensor(Graph&, std::span<const Tensor>)>;

struct GradcheckInput {
  std::string name;
  Tensor value;
  /// Non-differentiable inputs (labels, targets) are held fixed.
  bool differentiable = true;
};

struct GradcheckReport {
  std::string op;
  std::vector<std::string> input_names;
  /// Max relative error per input; 0 for non-differentiable inputs.
  std::vector<double> max_rel_error;
  double threshold = kGradcheckThreshold;
  /// Elements compared, and elements skipped because the difference stencil
  /// flipped the sign of some relu input.
  std::size_t checked = 0;
  std::size_t kink_skipped = 0;

  double worst() const;
  /// Also fails when more than half of the elements were skipped.
  bool passed() const;
};

/// |a - n| / max(1e-8, |a| + |n|)
double gradcheck_relative_error(double analytic, double numeric);

/// Compares the analytic gradient of L = sum(R * fn(inputs)), with R a
/// seeded standard-normal projection, against central differences of L.
///
/// With `skip_relu_crossings`, elements whose +/-eps evaluations change the
/// sign pattern of any relu input are excluded from the error.
GradcheckReport gradcheck(std::string op, const GraphFn& fn, std::vector<GradcheckInput> inputs,
                          std::uint64_t seed, double eps = kGradcheckEps,
                          double threshold = kGradcheckThreshold,
                          bool skip_relu_crossings = false);

/// Convenience form: every input is differentiable and filled with seeded
/// standard-normal values of the given shapes.
GradcheckReport gradcheck(std::string op, const GraphFn& fn, const std::vector<Shape>& input_shapes,
                          std::uint64_t seed, double eps = kGradcheckEps,
                          double threshold = kGradcheckThreshold);

}  // namespace wsed
