// SPDX-License-Identifier: Apache-2.0
//
// Microbenchmarks for the hot paths of a training step and of feature
// extraction. Shapes follow the desk model on 10 s clips.
#include <benchmark/benchmark.h>

#include <vector>

#include "wsed/dsp.hpp"
#include "wsed/model.hpp"
#include "wsed/ops.hpp"
#include "wsed/pooling.hpp"
#include "wsed/rng.hpp"
#include "wsed/synth.hpp"

using namespace wsed;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool grad = false) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v), grad);
}

ops::ConvPrecision precision_arg(const benchmark::State& state) {
  return state.range(4) ? ops::ConvPrecision::f32 : ops::ConvPrecision::f64;
}

// args: batch, channels in, channels out, frames, f32
void BM_Conv2dForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), ci = static_cast<std::size_t>(state.range(1)),
             co = static_cast<std::size_t>(state.range(2)), t = static_cast<std::size_t>(state.range(3));
  ops::ConvPrecisionScope scope(precision_arg(state));
  const auto x = random_tensor({n, ci, 64, t}, 1), k = random_tensor({co, ci, 3, 3}, 2), b = Tensor::zeros({co});
  for (auto _ : state) {
    Graph g;
    benchmark::DoNotOptimize(ops::conv2d(g, x, k, b, {1, 1}).data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * co * 64 * t * ci * 9));
}
BENCHMARK(BM_Conv2dForward)
    ->Args({8, 1, 16, 320, 0})
    ->Args({8, 16, 16, 320, 0})
    ->Args({8, 16, 16, 320, 1})
    ->Args({8, 32, 32, 80, 1})
    ->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0)), ci = static_cast<std::size_t>(state.range(1)),
             co = static_cast<std::size_t>(state.range(2)), t = static_cast<std::size_t>(state.range(3));
  ops::ConvPrecisionScope scope(precision_arg(state));
  for (auto _ : state) {
    state.PauseTiming();
    const auto x = random_tensor({n, ci, 64, t}, 1, true), k = random_tensor({co, ci, 3, 3}, 2, true);
    const auto b = Tensor::zeros({co}, true);
    Graph g;
    const auto y = ops::conv2d(g, x, k, b, {1, 1});
    const auto loss = ops::sum_along(g, ops::reshape(g, y, {y.numel()}), 0);
    state.ResumeTiming();
    g.backward(loss);
    benchmark::DoNotOptimize(k.grad().data());
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({8, 16, 16, 320, 0})->Args({8, 16, 16, 320, 1})->Unit(benchmark::kMillisecond);

void BM_LogMel(benchmark::State& state) {
  Rng rng(3);
  const AudioBuffer audio = synthesize_background(320000, 32000, rng);
  LogMelExtractor extract(FeatureConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(extract(audio).values.values.data());
  state.SetItemsProcessed(state.iterations() * 320000);
}
BENCHMARK(BM_LogMel)->Unit(benchmark::kMillisecond);

void BM_TwoStepAttention(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  const auto p = TwoStepAttentionParams::init(c, rng);
  auto z = random_tensor({8, c, 4, 20}, 5, true);
  for (auto _ : state) {
    Graph g;
    const auto r = two_step_attention(g, z, p);
    g.backward(ops::sum_along(g, ops::reshape(g, r.probs, {r.probs.numel()}), 0));
    benchmark::DoNotOptimize(z.grad().data());
    z.zero_grad();
  }
}
BENCHMARK(BM_TwoStepAttention)->Arg(3)->Arg(10);

void BM_ModelForwardBackward(benchmark::State& state) {
  ops::ConvPrecisionScope scope(ops::ConvPrecision::f32);
  SedModel m(ModelConfig::desk(3), 0);
  const auto x = random_tensor({8, 1, 64, 320}, 6);
  for (auto _ : state) {
    Graph g;
    const auto out = m.forward(g, x, Mode::train, true);
    const auto l = ops::add(g, ops::sum_along(g, ops::reshape(g, out.probs, {out.probs.numel()}), 0),
                            ops::sum_along(g, ops::reshape(g, out.recon, {out.recon.numel()}), 0));
    g.backward(l);
    m.zero_grad();
  }
}
BENCHMARK(BM_ModelForwardBackward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
