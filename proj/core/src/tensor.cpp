// SPDX-License-Identifier: Apache-2.0
#include "wsed/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "wsed/error.hpp"

namespace wsed {

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t graph_id = 0;
};
}  // namespace detail

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw ShapeError("tensor extent " + std::to_string(i) + " is zero in shape " +
                       shape_str(shape));
    }
  }
}

std::atomic<std::uint64_t> next_graph_id{1};

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != shape_numel(shape)) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<double> Tensor::data() { return impl_->data; }
std::span<const double> Tensor::data() const { return impl_->data; }

double Tensor::item() const {
  if (impl_->data.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(impl_->shape));
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { impl_->requires_grad = flag; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::grad_buffer() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::clear_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

std::uint64_t Tensor::graph_id() const { return impl_->graph_id; }

Tensor Tensor::clone() const { return from(impl_->shape, impl_->data, false); }

Graph::Graph() : id_(next_graph_id.fetch_add(1)) {}

Tensor Graph::record(std::string_view op, Shape shape, std::vector<double> values,
                     std::vector<Tensor> inputs, BackwardFn backward) {
  if (backward_done_) throw GraphError(std::string(op) + ": graph already consumed by backward");
  bool tracked = false;
  for (const auto& in : inputs) {
    if (!in.defined()) throw GraphError(std::string(op) + ": undefined input tensor");
    if (in.graph_id() != 0 && in.graph_id() != id_) {
      throw GraphError(std::string(op) + ": input tensor belongs to a different graph");
    }
    tracked = tracked || in.requires_grad();
  }
  Tensor out = Tensor::from(std::move(shape), std::move(values), tracked);
  if (tracked) {
    out.impl_->graph_id = id_;
    nodes_.push_back(Node{op, std::move(inputs), out, std::move(backward)});
  }
  return out;
}

void Graph::backward(const Tensor& root) {
  if (backward_done_) throw GraphError("backward called twice on the same graph");
  if (!root.defined() || root.numel() != 1) throw GraphError("backward root must be a scalar");
  if (root.graph_id() != id_) throw GraphError("backward root was not produced by this graph");
  backward_done_ = true;

  Tensor seed = root;
  seed.grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward(it->output, it->inputs);
  }
}

std::vector<std::string_view> Graph::op_tags() const {
  std::vector<std::string_view> tags;
  tags.reserve(nodes_.size());
  for (const auto& n : nodes_) tags.push_back(n.op);
  return tags;
}

}  // namespace wsed
