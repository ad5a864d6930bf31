// SPDX-License-Identifier: Apache-2.0
#include "wsed/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

#include "wsed/model.hpp"
#include "wsed/ops.hpp"
#include "wsed/pooling.hpp"
#include "wsed/rng.hpp"

namespace wsed {

namespace {

Tensor normal_tensor(const Shape& shape, Rng& rng, double scale = 1.0, double offset = 0.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = offset + scale * rng.normal();
  return Tensor::from(shape, std::move(v));
}

GradcheckInput normal_input(std::string name, const Shape& shape, Rng& rng, double scale = 1.0,
                            double offset = 0.0) {
  return {std::move(name), normal_tensor(shape, rng, scale, offset)};
}

GradcheckCase unary_case(std::string name, Shape shape,
                         std::function<Tensor(Graph&, const Tensor&)> op) {
  return {name, [name, shape, op](std::uint64_t seed) {
            Rng rng(seed);
            return gradcheck(
                name, [op](Graph& g, std::span<const Tensor> in) { return op(g, in[0]); },
                {normal_input("x", shape, rng)}, seed);
          }};
}

GradcheckCase conv_case(std::string name, Shape input, Shape kernel, ops::Padding pad) {
  return {name, [=](std::uint64_t seed) {
            Rng rng(seed);
            return gradcheck(
                name,
                [pad](Graph& g, std::span<const Tensor> in) { return ops::conv2d(g, in[0], in[1], in[2], pad); },
                {normal_input("input", input, rng), normal_input("kernel", kernel, rng),
                 normal_input("bias", {kernel[0]}, rng)},
                seed);
          }};
}

GradcheckCase batchnorm_case(std::string name, Shape input, Mode mode) {
  return {name, [=](std::uint64_t seed) {
            Rng rng(seed);
            const std::size_t c = input[1];
            auto stats = std::make_shared<BatchNormStats>(c);
            if (mode == Mode::eval) {
              std::vector<double> mean(c), var(c);
              for (std::size_t i = 0; i < c; ++i) {
                mean[i] = 0.5 * rng.normal();
                var[i] = rng.uniform(0.5, 1.5);
              }
              stats->set(mean, var);
            }
            return gradcheck(
                name,
                [stats, mode](Graph& g, std::span<const Tensor> in) {
                  BatchNormStats local = *stats;
                  return ops::batchnorm2d(g, in[0], in[1], in[2], mode, local);
                },
                {normal_input("input", input, rng), normal_input("gamma", {c}, rng, 0.5, 1.0),
                 normal_input("beta", {c}, rng)},
                seed);
          }};
}

GradcheckCase linear_case(std::string name, Shape x, std::size_t dout) {
  return {name, [=](std::uint64_t seed) {
            Rng rng(seed);
            const std::size_t din = x.back();
            return gradcheck(
                name, [](Graph& g, std::span<const Tensor> in) { return ops::linear(g, in[0], in[1], in[2]); },
                {normal_input("x", x, rng), normal_input("weight", {dout, din}, rng),
                 normal_input("bias", {dout}, rng)},
                seed);
          }};
}

GradcheckCase binary_case(std::string name, Shape shape,
                          std::function<Tensor(Graph&, const Tensor&, const Tensor&)> op) {
  return {name, [=](std::uint64_t seed) {
            Rng rng(seed);
            return gradcheck(
                name, [op](Graph& g, std::span<const Tensor> in) { return op(g, in[0], in[1]); },
                {normal_input("a", shape, rng), normal_input("b", shape, rng)}, seed);
          }};
}

GradcheckCase bce_case(std::string name, Shape shape) {
  return {name, [=](std::uint64_t seed) {
            Rng rng(seed);
            std::vector<double> p(shape_numel(shape)), y(p.size());
            for (std::size_t i = 0; i < p.size(); ++i) {
              p[i] = rng.uniform(0.05, 0.95);
              y[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
            }
            return gradcheck(
                name, [](Graph& g, std::span<const Tensor> in) { return ops::bce_loss(g, in[0], in[1]); },
                {{"pred", Tensor::from(shape, p)}, {"target", Tensor::from(shape, y), false}}, seed);
          }};
}

std::vector<GradcheckInput> attention_inputs(const Shape& z, Rng& rng) {
  const std::size_t c = z[1];
  std::vector<GradcheckInput> in{normal_input("z", z, rng)};
  for (const char* name : {"att1", "cls1", "att2", "cls2"}) {
    in.push_back(normal_input(std::string(name) + ".weight", {c, c}, rng, 0.7));
    in.push_back(normal_input(std::string(name) + ".bias", {c}, rng, 0.3));
  }
  return in;
}

TwoStepAttentionParams attention_params(std::span<const Tensor> in, std::size_t first) {
  TwoStepAttentionParams p;
  p.att1_weight = in[first];
  p.att1_bias = in[first + 1];
  p.cls1_weight = in[first + 2];
  p.cls1_bias = in[first + 3];
  p.att2_weight = in[first + 4];
  p.att2_bias = in[first + 5];
  p.cls2_weight = in[first + 6];
  p.cls2_bias = in[first + 7];
  return p;
}

GradcheckCase attention_case(std::string name, Shape z) {
  return {name, [=](std::uint64_t seed) {
            Rng rng(seed);
            return gradcheck(
                name,
                [](Graph& g, std::span<const Tensor> in) {
                  return two_step_attention(g, in[0], attention_params(in, 1)).probs;
                },
                attention_inputs(z, rng), seed);
          }};
}

// --- tiny end-to-end graphs ------------------------------------------------------

constexpr std::size_t kTinyBatch = 2;
constexpr std::size_t kTinyFrames = 16;
constexpr std::size_t kTinyBins = 16;

ModelConfig tiny_config() {
  ModelConfig c;
  c.num_classes = 2;
  c.mel_bins = kTinyBins;
  c.channels = {2, 2, 2, 2};
  return c;
}


// Model parameters as gradcheck inputs, restricted to names with `prefix`.
// A conv bias feeding train-mode batch norm has an identically zero
// gradient, so finite differences only see roundoff there; those biases are
// held fixed here and covered by the conv2d cases.
struct TinyModel {
  std::shared_ptr<SedModel> model;
  std::vector<std::size_t> bound;  // parameter indices supplied as inputs
};

TinyModel tiny_model(std::uint64_t seed, const std::string& prefix, std::vector<GradcheckInput>& inputs) {
  TinyModel t{std::make_shared<SedModel>(tiny_config(), seed), {}};
  Rng rng(derive_seed(seed, 0x7e));
  const auto& params = t.model->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.name.starts_with(prefix)) continue;
    Tensor value = p.tensor.clone();
    if (p.name.starts_with("pool.")) {
      value = normal_tensor(p.tensor.shape(), rng, 0.7);
    } else if (p.name.find(".bn") != std::string::npos) {
      value = p.name.ends_with(".weight") ? normal_tensor(p.tensor.shape(), rng, 0.2, 1.0)
                                          : normal_tensor(p.tensor.shape(), rng, 0.2);
    }
    const bool feeds_batchnorm = p.name.find(".conv") != std::string::npos && p.name.ends_with(".bias");
    inputs.push_back({p.name, value, !feeds_batchnorm});
    t.bound.push_back(i);
  }
  return t;
}


void bind_tiny(const TinyModel& t, std::span<const Tensor> in, std::size_t first) {
  std::vector<Tensor> tensors;
  for (const auto& p : t.model->parameters()) tensors.push_back(p.tensor);
  for (std::size_t k = 0; k < t.bound.size(); ++k) tensors[t.bound[k]] = in[first + k];
  t.model->bind_parameters(tensors);
}

// Finite differences across a relu kink are meaningless; such elements are
// skipped and counted instead.
GradcheckReport check_skipping_kinks(
    const std::string& name, std::uint64_t seed,
    const std::function<std::pair<TinyModel, std::vector<GradcheckInput>>(std::uint64_t)>& make,
    const std::function<GraphFn(const TinyModel&)>& graph) {
  auto [model, inputs] = make(seed);
  return gradcheck(name, graph(model), std::move(inputs), seed, kGradcheckEps,
                   kGradcheckThreshold, true);
}

GradcheckCase encoder_case() {
  return {"model.encoder", [](std::uint64_t seed) {
            return check_skipping_kinks(
                "model.encoder", seed,
                [](std::uint64_t s) {
                  Rng rng(s);
                  std::vector<GradcheckInput> inputs{normal_input("x", {kTinyBatch, 1, kTinyBins, kTinyFrames}, rng)};
                  TinyModel t = tiny_model(s, "enc.", inputs);
                  return std::make_pair(t, inputs);
                },
                [](const TinyModel& t) -> GraphFn {
                  return [t](Graph& g, std::span<const Tensor> in) {
                    bind_tiny(t, in, 1);
                    return t.model->encode(g, in[0], Mode::train);
                  };
                });
          }};
}

GradcheckCase decoder_case() {
  return {"model.decoder", [](std::uint64_t seed) {
            return check_skipping_kinks(
                "model.decoder", seed,
                [](std::uint64_t s) {
                  Rng rng(s);
                  std::vector<GradcheckInput> inputs{normal_input("z", {kTinyBatch, 2, kTinyBins / 16, kTinyFrames / 16}, rng)};
                  TinyModel t = tiny_model(s, "dec.", inputs);
                  return std::make_pair(t, inputs);
                },
                [](const TinyModel& t) -> GraphFn {
                  return [t](Graph& g, std::span<const Tensor> in) {
                    bind_tiny(t, in, 1);
                    return t.model->decode(g, in[0], Mode::train);
                  };
                });
          }};
}

GradcheckCase joint_case() {
  return {"model.joint_loss", [](std::uint64_t seed) {
            return check_skipping_kinks(
                "model.joint_loss", seed,
                [](std::uint64_t s) {
                  Rng rng(s);
                  std::vector<GradcheckInput> inputs{normal_input("x", {kTinyBatch, 1, kTinyBins, kTinyFrames}, rng)};
                  std::vector<double> y(kTinyBatch * 2);
                  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(i % 2);
                  inputs.push_back({"labels", Tensor::from({kTinyBatch, 2}, y), false});
                  TinyModel t = tiny_model(s, "", inputs);
                  return std::make_pair(t, inputs);
                },
                [](const TinyModel& t) -> GraphFn {
                  return [t](Graph& g, std::span<const Tensor> in) {
                    bind_tiny(t, in, 2);
                    const ForwardResult out = t.model->forward(g, in[0], Mode::train, true);
                    const Tensor l1 = ops::bce_loss(g, out.probs, in[1]);
                    const Tensor l2 = ops::mse_loss(g, out.recon, in[0]);
                    return ops::add(g, l1, ops::scale(g, l2, 0.5));
                  };
                });
          }};
}

}  // namespace

std::vector<GradcheckCase> gradcheck_registry() {
  using namespace ops;
  std::vector<GradcheckCase> r;
  r.push_back(conv_case("conv2d#1", {1, 2, 5, 5}, {3, 2, 3, 3}, {1, 1}));
  r.push_back(conv_case("conv2d#2", {2, 1, 4, 6}, {2, 1, 3, 2}, {0, 1}));
  r.push_back(batchnorm_case("batchnorm2d.train#1", {2, 3, 3, 3}, Mode::train));
  r.push_back(batchnorm_case("batchnorm2d.train#2", {4, 2, 2, 3}, Mode::train));
  r.push_back(batchnorm_case("batchnorm2d.eval#1", {2, 3, 2, 2}, Mode::eval));
  r.push_back(batchnorm_case("batchnorm2d.eval#2", {1, 2, 3, 4}, Mode::eval));
  r.push_back(unary_case("relu#1", {3, 4}, [](Graph& g, const Tensor& x) { return relu(g, x); }));
  r.push_back(unary_case("relu#2", {2, 2, 3, 3}, [](Graph& g, const Tensor& x) { return relu(g, x); }));
  r.push_back(unary_case("sigmoid#1", {3, 4}, [](Graph& g, const Tensor& x) { return sigmoid(g, x); }));
  r.push_back(unary_case("sigmoid#2", {2, 5, 2}, [](Graph& g, const Tensor& x) { return sigmoid(g, x); }));
  r.push_back(unary_case("avgpool2d#1", {1, 2, 4, 6}, [](Graph& g, const Tensor& x) { return avgpool2d(g, x); }));
  r.push_back(unary_case("avgpool2d#2", {2, 1, 2, 2}, [](Graph& g, const Tensor& x) { return avgpool2d(g, x); }));
  r.push_back(unary_case("upsample2x_nearest#1", {1, 2, 3, 2},
                         [](Graph& g, const Tensor& x) { return upsample2x_nearest(g, x); }));
  r.push_back(unary_case("upsample2x_nearest#2", {2, 1, 1, 4},
                         [](Graph& g, const Tensor& x) { return upsample2x_nearest(g, x); }));
  r.push_back(linear_case("linear#1", {4, 3}, 2));
  r.push_back(linear_case("linear#2", {2, 3, 4}, 5));
  r.push_back(unary_case("softmax_along#1", {3, 4}, [](Graph& g, const Tensor& x) { return softmax_along(g, x, 1); }));
  r.push_back(unary_case("softmax_along#2", {2, 3, 4},
                         [](Graph& g, const Tensor& x) { return softmax_along(g, x, 1); }));
  r.push_back(unary_case("sum_along#1", {3, 4}, [](Graph& g, const Tensor& x) { return sum_along(g, x, 0); }));
  r.push_back(unary_case("sum_along#2", {2, 3, 4}, [](Graph& g, const Tensor& x) { return sum_along(g, x, 2); }));
  r.push_back(binary_case("mul#1", {3, 4}, [](Graph& g, const Tensor& a, const Tensor& b) { return mul(g, a, b); }));
  r.push_back(binary_case("mul#2", {2, 2, 3}, [](Graph& g, const Tensor& a, const Tensor& b) { return mul(g, a, b); }));
  r.push_back(binary_case("add#1", {3, 4}, [](Graph& g, const Tensor& a, const Tensor& b) { return add(g, a, b); }));
  r.push_back(binary_case("add#2", {5}, [](Graph& g, const Tensor& a, const Tensor& b) { return add(g, a, b); }));
  r.push_back(unary_case("scale#1", {3, 4}, [](Graph& g, const Tensor& x) { return scale(g, x, -1.7); }));
  r.push_back(unary_case("scale#2", {6}, [](Graph& g, const Tensor& x) { return scale(g, x, 0.25); }));
  r.push_back(unary_case("reshape#1", {3, 4}, [](Graph& g, const Tensor& x) { return reshape(g, x, {2, 6}); }));
  r.push_back(unary_case("reshape#2", {2, 3, 2}, [](Graph& g, const Tensor& x) { return reshape(g, x, {12}); }));
  r.push_back(unary_case("permute#1", {2, 3, 4}, [](Graph& g, const Tensor& x) { return permute(g, x, {2, 0, 1}); }));
  r.push_back(unary_case("permute#2", {2, 3, 2, 2},
                         [](Graph& g, const Tensor& x) { return permute(g, x, {0, 2, 3, 1}); }));
  r.push_back(bce_case("bce_loss#1", {3, 4}));
  r.push_back(bce_case("bce_loss#2", {7}));
  r.push_back(binary_case("mse_loss#1", {3, 4},
                          [](Graph& g, const Tensor& a, const Tensor& b) { return mse_loss(g, a, b); }));
  r.push_back(binary_case("mse_loss#2", {2, 1, 2, 3},
                          [](Graph& g, const Tensor& a, const Tensor& b) { return mse_loss(g, a, b); }));
  r.push_back(unary_case("max_along#1", {3, 5}, [](Graph& g, const Tensor& x) { return max_along(g, x, 1); }));
  r.push_back(unary_case("max_along#2", {4, 2, 3}, [](Graph& g, const Tensor& x) { return max_along(g, x, 0); }));
  r.push_back(unary_case("gwrp_along#1", {3, 5}, [](Graph& g, const Tensor& x) { return gwrp_along(g, x, 1, 0.7); }));
  r.push_back(unary_case("gwrp_along#2", {4, 2, 3},
                         [](Graph& g, const Tensor& x) { return gwrp_along(g, x, 0, 0.3); }));
  r.push_back(unary_case("gap", {2, 3, 2, 4}, [](Graph& g, const Tensor& x) { return gap(g, x); }));
  r.push_back(unary_case("gmp", {2, 3, 2, 4}, [](Graph& g, const Tensor& x) { return gmp(g, x); }));
  r.push_back(unary_case("gwrp", {2, 3, 2, 4}, [](Graph& g, const Tensor& x) { return gwrp(g, x, 0.9); }));
  r.push_back(attention_case("two_step_attention#1", {1, 2, 2, 3}));
  r.push_back(attention_case("two_step_attention#2", {2, 3, 3, 4}));
  r.push_back(encoder_case());
  r.push_back(decoder_case());
  r.push_back(joint_case());
  return r;
}

GradcheckCase corrupted_gradcheck_case() {
  return {"corrupted_scale", [](std::uint64_t seed) {
            Rng rng(seed);
            return gradcheck(
                "corrupted_scale",
                [](Graph& g, std::span<const Tensor> in) {
                  std::vector<double> out(in[0].data().begin(), in[0].data().end());
                  for (auto& v : out) v *= 3.0;
                  return g.record("corrupted_scale", in[0].shape(), std::move(out), {in[0]},
                                  [](const Tensor& o, std::span<Tensor> inputs) {
                                    const auto dy = o.grad();
                                    auto dx = inputs[0].grad_buffer();
                                    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 6.0 * dy[i];
                                  });
                },
                {normal_input("x", {3, 4}, rng)}, seed);
          }};
}

std::vector<GradcheckReport> run_gradcheck_suite(std::uint64_t seed, bool inject_fault) {
  std::vector<GradcheckReport> reports;
  for (const auto& c : gradcheck_registry()) reports.push_back(c.run(seed));
  if (inject_fault) reports.push_back(corrupted_gradcheck_case().run(seed));
  return reports;
}

}  // namespace wsed
