// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major float64 tensors and the tape that records operations on
// them for reverse-mode differentiation.
//
// A Tensor is a handle: copies share storage and gradient. Leaf tensors
// (parameters, inputs) have graph id 0; every tensor produced by a recorded
// operation carries the id of the Graph that produced it.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wsed {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  bool has_grad() const;
  /// Gradient; empty span when none has been accumulated.
  std::span<const double> grad() const;
  /// Gradient buffer, allocated (zero-filled) on first access.
  std::span<double> grad_buffer();
  void zero_grad();
  /// Drops the gradient buffer entirely.
  void clear_grad();

  std::uint64_t graph_id() const;

  /// Deep copy of the values as a fresh leaf with no gradient.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend class Graph;
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Computes input gradients from the output's gradient. `inputs` are the
/// tensors passed to Graph::record, in the same order; implementations
/// accumulate (never assign) into grad_buffer() of inputs that require grad.
using BackwardFn = std::function<void(const Tensor& output, std::span<Tensor> inputs)>;

/// Append-only operation tape. Records are topologically ordered by
/// construction; backward walks them in exact reverse. A Graph is confined to
/// one thread and supports exactly one backward pass.
class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  std::uint64_t id() const { return id_; }
  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

  /// Wraps `values` as the output of an operation. When any input requires
  /// grad the operation is recorded and the output requires grad; otherwise
  /// the result is an untracked constant and `backward` is dropped.
  Tensor record(std::string_view op, Shape shape, std::vector<double> values,
                std::vector<Tensor> inputs, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and propagates to every reachable tensor.
  void backward(const Tensor& root);

  /// Operation tags in record order (diagnostics and tests).
  std::vector<std::string_view> op_tags() const;
  /// Inputs of the i-th recorded operation.
  const std::vector<Tensor>& node_inputs(std::size_t i) const { return nodes_.at(i).inputs; }

 private:
  struct Node {
    std::string_view op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  std::uint64_t id_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

/// A parameter or buffer with its stable serialization name.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

}  // namespace wsed
