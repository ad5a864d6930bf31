// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wsed/tensor.hpp"

namespace wsed {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates, one entry per parameter in registration
/// order. Moments start at zero; `step` counts completed updates.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  AdamState() = default;
  AdamState(AdamConfig cfg, std::span<const NamedTensor> params);
};

/// One bias-corrected Adam update using each parameter's accumulated
/// gradient (a missing gradient counts as zero). Throws NumericError naming
/// the first parameter whose gradient holds a NaN or infinity; nothing is
/// modified in that case.
void adam_step(std::span<NamedTensor> params, AdamState& state);

}  // namespace wsed
