// SPDX-License-Identifier: Apache-2.0
//
// Registry of gradient checks covering every differentiable operator, the
// pooling functions and small end-to-end encoder / decoder / two-step
// attention graphs.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wsed/gradcheck.hpp"

namespace wsed {

struct GradcheckCase {
  std::string name;
  std::function<GradcheckReport(std::uint64_t seed)> run;
};

/// Every registered case, two shapes per operator where shapes matter.
std::vector<GradcheckCase> gradcheck_registry();

/// A scale operator whose backward returns twice the true gradient; the
/// checker must flag it.
GradcheckCase corrupted_gradcheck_case();

/// Runs every registry case for `seed`, plus the corrupted case when
/// `inject_fault` is set.
std::vector<GradcheckReport> run_gradcheck_suite(std::uint64_t seed, bool inject_fault = false);

}  // namespace wsed
