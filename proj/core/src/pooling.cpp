// SPDX-License-Identifier: Apache-2.0
#include "wsed/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "wsed/error.hpp"
#include "wsed/ops.hpp"

namespace wsed {

std::string pooling_name(PoolingKind kind) {
  switch (kind) {
    case PoolingKind::two_step_attention: return "2ap";
    case PoolingKind::gap: return "gap";
    case PoolingKind::gmp: return "gmp";
    case PoolingKind::gwrp: return "gwrp";
  }
  return "2ap";
}

PoolingKind parse_pooling(const std::string& name) {
  if (name == "2ap") return PoolingKind::two_step_attention;
  if (name == "gap") return PoolingKind::gap;
  if (name == "gmp") return PoolingKind::gmp;
  if (name == "gwrp") return PoolingKind::gwrp;
  throw std::invalid_argument("unknown pooling '" + name + "' (expected 2ap, gap, gmp or gwrp)");
}

namespace {

Tensor kaiming_square(std::size_t c, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(c));
  std::vector<double> w(c * c);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return Tensor::from({c, c}, std::move(w), true);
}

// Runs a non-differentiable permutation on a detached copy.
Tensor detached_permute(const Tensor& t, const std::vector<std::size_t>& perm) {
  Graph scratch;
  return ops::permute(scratch, t.clone(), perm);
}

struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                     shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(Shape shape, std::size_t axis) {
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  return shape;
}

Tensor flatten_cells(Graph& g, const Tensor& z, const char* op) {
  if (z.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected Z of rank 4 [N,C,F,T], got " + shape_str(z.shape()));
  }
  return ops::reshape(g, z, {z.dim(0), z.dim(1), z.dim(2) * z.dim(3)});
}

}  // namespace

TwoStepAttentionParams TwoStepAttentionParams::init(std::size_t num_classes, Rng& rng) {
  const std::size_t c = num_classes;
  TwoStepAttentionParams p;
  p.att1_weight = Tensor::zeros({c, c}, true);
  p.att1_bias = Tensor::zeros({c}, true);
  p.cls1_weight = kaiming_square(c, rng);
  p.cls1_bias = Tensor::zeros({c}, true);
  p.att2_weight = Tensor::zeros({c, c}, true);
  p.att2_bias = Tensor::zeros({c}, true);
  p.cls2_weight = kaiming_square(c, rng);
  p.cls2_bias = Tensor::zeros({c}, true);
  return p;
}

std::vector<NamedTensor> TwoStepAttentionParams::named(const std::string& prefix) const {
  return {
      {prefix + "att1.weight", att1_weight}, {prefix + "att1.bias", att1_bias},
      {prefix + "cls1.weight", cls1_weight}, {prefix + "cls1.bias", cls1_bias},
      {prefix + "att2.weight", att2_weight}, {prefix + "att2.bias", att2_bias},
      {prefix + "cls2.weight", cls2_weight}, {prefix + "cls2.bias", cls2_bias},
  };
}

TwoStepAttentionResult two_step_attention(Graph& g, const Tensor& z,
                                          const TwoStepAttentionParams& params) {
  if (z.rank() != 4) {
    throw ShapeError("two_step_attention: expected Z [N,C,F,T], got " + shape_str(z.shape()));
  }
  for (double v : z.data()) {
    if (!std::isfinite(v)) throw NumericError("two_step_attention: segmentation map holds non-finite values");
  }
  // Category-last layout so the C x C maps act on the trailing axis.
  const Tensor zl = ops::permute(g, z, {0, 2, 3, 1});  // [N,F,T,C]

  const Tensor a1 = ops::sigmoid(g, ops::linear(g, zl, params.att1_weight, params.att1_bias));
  const Tensor za1 = ops::softmax_along(g, a1, 1);
  const Tensor zc1 = ops::linear(g, zl, params.cls1_weight, params.cls1_bias);
  const Tensor zp1 = ops::sum_along(g, ops::mul(g, zc1, za1), 1);  // [N,T,C]

  const Tensor a2 = ops::sigmoid(g, ops::linear(g, zp1, params.att2_weight, params.att2_bias));
  const Tensor za2 = ops::softmax_along(g, a2, 1);
  const Tensor zc2 = ops::sigmoid(g, ops::linear(g, zp1, params.cls2_weight, params.cls2_bias));
  const Tensor zp2 = ops::sum_along(g, ops::mul(g, zc2, za2), 1);  // [N,C]

  TwoStepAttentionResult out;
  out.probs = zp2;
  out.trace.za1 = detached_permute(za1, {0, 3, 1, 2});
  out.trace.zc1 = detached_permute(zc1, {0, 3, 1, 2});
  out.trace.zp1 = detached_permute(zp1, {0, 2, 1});
  out.trace.za2 = detached_permute(za2, {0, 2, 1});
  out.trace.zc2 = detached_permute(zc2, {0, 2, 1});
  out.trace.zp2 = zp2.clone();
  return out;
}

Tensor max_along(Graph& g, const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "max_along");
  const auto xd = x.data();
  std::vector<double> out(s.outer * s.inner);
  std::vector<std::size_t> source(out.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = o * s.extent * s.inner + i;
      for (std::size_t k = 1; k < s.extent; ++k) {
        const std::size_t idx = (o * s.extent + k) * s.inner + i;
        if (xd[idx] > xd[best]) best = idx;
      }
      out[o * s.inner + i] = xd[best];
      source[o * s.inner + i] = best;
    }
  }
  return g.record("max_along", drop_axis(x.shape(), axis), std::move(out), {x},
                  [source = std::move(source)](const Tensor& o, std::span<Tensor> in) {
                    const auto dy = o.grad();
                    auto dx = in[0].grad_buffer();
                    for (std::size_t j = 0; j < source.size(); ++j) dx[source[j]] += dy[j];
                  });
}

Tensor gwrp_along(Graph& g, const Tensor& x, std::size_t axis, double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) {
    throw std::invalid_argument("gwrp: decay must lie in [0, 1], got " + std::to_string(decay));
  }
  const AxisSplit s = split_axis(x.shape(), axis, "gwrp_along");
  const auto xd = x.data();

  std::vector<double> weights(s.extent);
  double w = 1.0;
  for (std::size_t j = 0; j < s.extent; ++j) {
    weights[j] = w;
    w *= decay;
  }
  const double norm = std::accumulate(weights.begin(), weights.end(), 0.0);

  std::vector<double> out(s.outer * s.inner);
  // coefficient applied to every source cell, for the backward pass
  std::vector<double> coeff(x.numel(), 0.0);
  std::vector<std::size_t> order(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t k) { return (o * s.extent + k) * s.inner + i; };
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return xd[at(a)] > xd[at(b)]; });
      double acc = 0.0;
      for (std::size_t j = 0; j < s.extent; ++j) {
        const double c = weights[j] / norm;
        acc += weights[j] * xd[at(order[j])];
        coeff[at(order[j])] = c;
      }
      out[o * s.inner + i] = acc / norm;
    }
  }
  return g.record("gwrp_along", drop_axis(x.shape(), axis), std::move(out), {x},
                  [s, coeff = std::move(coeff)](const Tensor& o, std::span<Tensor> in) {
                    const auto dy = o.grad();
                    auto dx = in[0].grad_buffer();
                    for (std::size_t a = 0; a < s.outer; ++a) {
                      for (std::size_t k = 0; k < s.extent; ++k) {
                        for (std::size_t i = 0; i < s.inner; ++i) {
                          const std::size_t idx = (a * s.extent + k) * s.inner + i;
                          dx[idx] += coeff[idx] * dy[a * s.inner + i];
                        }
                      }
                    }
                  });
}

Tensor gap(Graph& g, const Tensor& z) {
  const Tensor flat = flatten_cells(g, z, "gap");
  const double n = static_cast<double>(flat.dim(2));
  return ops::scale(g, ops::sum_along(g, flat, 2), 1.0 / n);
}

Tensor gmp(Graph& g, const Tensor& z) { return max_along(g, flatten_cells(g, z, "gmp"), 2); }

Tensor gwrp(Graph& g, const Tensor& z, double decay) {
  return gwrp_along(g, flatten_cells(g, z, "gwrp"), 2, decay);
}

}  // namespace wsed
