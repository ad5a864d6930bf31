// SPDX-License-Identifier: Apache-2.0
#include "wsed/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "wsed/ops.hpp"
#include "wsed/rng.hpp"

namespace wsed {

double GradcheckReport::worst() const {
  double w = 0.0;
  for (double e : max_rel_error) w = std::max(w, std::isnan(e) ? INFINITY : e);
  return w;
}

bool GradcheckReport::passed() const {
  return worst() < threshold && kink_skipped <= checked;
}

double gradcheck_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace {

Tensor project(Graph& g, const Tensor& y, const Tensor& weights) {
  Tensor prod = ops::mul(g, y, weights);
  Tensor flat = ops::reshape(g, prod, {prod.numel()});
  return ops::sum_along(g, flat, 0);
}

std::vector<bool> relu_pattern(const Graph& g) {
  std::vector<bool> pattern;
  const auto tags = g.op_tags();
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] != "relu") continue;
    for (double v : g.node_inputs(i)[0].data()) pattern.push_back(v > 0.0);
  }
  return pattern;
}

}  // namespace

GradcheckReport gradcheck(std::string op, const GraphFn& fn, std::vector<GradcheckInput> inputs,
                          std::uint64_t seed, double eps, double threshold,
                          bool skip_relu_crossings) {
  GradcheckReport report;
  report.op = std::move(op);
  report.threshold = threshold;

  std::vector<Tensor> tracked;
  for (const auto& in : inputs) {
    Tensor t = in.value.clone();
    t.set_requires_grad(in.differentiable);
    tracked.push_back(t);
    report.input_names.push_back(in.name);
  }

  Tensor weights;
  std::vector<bool> base_pattern;
  {
    Graph g;
    Tensor y = fn(g, tracked);
    if (skip_relu_crossings) base_pattern = relu_pattern(g);
    Rng rng(derive_seed(seed, 0x9c));
    std::vector<double> w(y.numel());
    for (auto& v : w) v = rng.normal();
    weights = Tensor::from(y.shape(), std::move(w));
    Tensor loss = project(g, y, weights);
    g.backward(loss);
  }

  std::vector<Tensor> probe;
  for (const auto& t : tracked) {
    probe.push_back(t.clone());
    // Untracked graphs record no nodes, hence no relu pattern.
    if (skip_relu_crossings) probe.back().set_requires_grad(true);
  }
  bool crossed = false;
  auto evaluate = [&]() {
    Graph g;
    const double value = project(g, fn(g, probe), weights).item();
    if (skip_relu_crossings && relu_pattern(g) != base_pattern) crossed = true;
    return value;
  };

  for (std::size_t i = 0; i < tracked.size(); ++i) {
    double worst = 0.0;
    if (inputs[i].differentiable) {
      const auto analytic = tracked[i].grad();
      auto values = probe[i].data();
      for (std::size_t j = 0; j < values.size(); ++j) {
        const double original = values[j];
        crossed = false;
        values[j] = original + eps;
        const double up = evaluate();
        values[j] = original - eps;
        const double down = evaluate();
        values[j] = original;
        if (crossed) {
          ++report.kink_skipped;
          continue;
        }
        ++report.checked;
        const double numeric = (up - down) / (2.0 * eps);
        const double a = analytic.empty() ? 0.0 : analytic[j];
        const double err = gradcheck_relative_error(a, numeric);
        worst = std::isnan(err) ? INFINITY : std::max(worst, err);
      }
    }
    report.max_rel_error.push_back(worst);
  }
  return report;
}

GradcheckReport gradcheck(std::string op, const GraphFn& fn, const std::vector<Shape>& input_shapes,
                          std::uint64_t seed, double eps, double threshold) {
  Rng rng(seed);
  std::vector<GradcheckInput> inputs;
  for (std::size_t i = 0; i < input_shapes.size(); ++i) {
    std::vector<double> values(shape_numel(input_shapes[i]));
    for (auto& v : values) v = rng.normal();
    inputs.push_back({"input" + std::to_string(i), Tensor::from(input_shapes[i], std::move(values))});
  }
  return gradcheck(std::move(op), fn, std::move(inputs), seed, eps, threshold);
}

}  // namespace wsed
