// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace wsed {

/// Tensor shapes or extents that do not fit an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bad or missing input data: unreadable files, malformed manifests,
/// silent audio, mismatched feature fingerprints.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values, failed gradient checks, diverged training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of the autograd graph (second backward, foreign tensors).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace wsed
