// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "wsed/error.hpp"
#include "wsed/gradcheck.hpp"
#include "wsed/ops.hpp"

using namespace wsed;

namespace {

double max_abs_diff(std::span<const double> a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("conv2d of ones sums the window") {
  Graph g;
  auto y = ops::conv2d(g, Tensor::full({1, 1, 3, 3}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0), Tensor::zeros({1}), {});
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == 9.0);
}

TEST_CASE("conv2d of zero input yields the bias") {
  Graph g;
  auto k = Tensor::from({3, 2, 3, 3}, oracle::normal_values(54, 1));
  auto y = ops::conv2d(g, Tensor::zeros({2, 2, 4, 5}), k, Tensor::from({3}, {0.5, -1.0, 2.0}), {1, 1});
  CHECK(y.shape() == Shape{2, 3, 4, 5});
  for (std::size_t i = 0; i < y.numel(); ++i) {
    const std::size_t ch = (i / 20) % 3;
    CHECK(y.data()[i] == std::vector<double>{0.5, -1.0, 2.0}[ch]);
  }
}

TEST_CASE("conv2d matches the direct loop at sizes spanning several tiles") {
  // 64 x 320 with 16 input channels unfolds to 144 x 20480 values per image,
  // well past one row tile.
  const std::size_t n = 2, cin = 16, h = 64, w = 320, cout = 8;
  const auto xv = oracle::normal_values(n * cin * h * w, 7);
  const auto kv = oracle::normal_values(cout * cin * 9, 8, 0.1);
  const auto bv = oracle::normal_values(cout, 9);
  const auto ref = oracle::conv2d(xv, n, cin, h, w, kv, cout, 3, 3, bv, 1, 1);

  SUBCASE("f64") {
    Graph g;
    auto y = ops::conv2d(g, Tensor::from({n, cin, h, w}, xv), Tensor::from({cout, cin, 3, 3}, kv),
                         Tensor::from({cout}, bv), {1, 1});
    CHECK(max_abs_diff(y.data(), ref) < 1e-12 * max_abs(ref));
  }
  SUBCASE("f32") {
    ops::ConvPrecisionScope scope(ops::ConvPrecision::f32);
    Graph g;
    auto y = ops::conv2d(g, Tensor::from({n, cin, h, w}, xv), Tensor::from({cout, cin, 3, 3}, kv),
                         Tensor::from({cout}, bv), {1, 1});
    CHECK(max_abs_diff(y.data(), ref) < 1e-5 * max_abs(ref));
  }
  CHECK(ops::conv_precision() == ops::ConvPrecision::f64);
}

TEST_CASE("conv2d backward matches the direct-loop adjoint") {
  // d/dx and d/dk of sum(R * conv(x, k)) via the oracle's linearity:
  // the kernel gradient at (o,c,u,v) is conv of x with a unit kernel.
  const std::size_t cin = 2, h = 5, w = 5, cout = 3;
  const auto xv = oracle::normal_values(cin * h * w, 21);
  const auto kv = oracle::normal_values(cout * cin * 9, 22);
  const auto rv = oracle::normal_values(cout * h * w, 23);
  Tensor x = Tensor::from({1, cin, h, w}, xv, true);
  Tensor k = Tensor::from({cout, cin, 3, 3}, kv, true);
  Tensor b = Tensor::zeros({cout}, true);
  Graph g;
  auto y = ops::conv2d(g, x, k, b, {1, 1});
  g.backward(ops::sum_along(g, ops::reshape(g, ops::mul(g, y, Tensor::from(y.shape(), rv)), {y.numel()}), 0));

  std::vector<double> zero_bias(cout, 0.0);
  for (std::size_t i = 0; i < kv.size(); ++i) {
    std::vector<double> unit(kv.size(), 0.0);
    unit[i] = 1.0;
    const auto resp = oracle::conv2d(xv, 1, cin, h, w, unit, cout, 3, 3, zero_bias, 1, 1);
    const double expect = std::inner_product(resp.begin(), resp.end(), rv.begin(), 0.0);
    CHECK(k.grad()[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < xv.size(); ++i) {
    std::vector<double> unit(xv.size(), 0.0);
    unit[i] = 1.0;
    const auto resp = oracle::conv2d(unit, 1, cin, h, w, kv, cout, 3, 3, zero_bias, 1, 1);
    const double expect = std::inner_product(resp.begin(), resp.end(), rv.begin(), 0.0);
    CHECK(x.grad()[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  for (std::size_t o = 0; o < cout; ++o) {
    const double expect = std::accumulate(rv.begin() + o * h * w, rv.begin() + (o + 1) * h * w, 0.0);
    CHECK(b.grad()[o] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("conv2d rejects mismatched channels") {
  Graph g;
  CHECK_THROWS_AS(ops::conv2d(g, Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}), {}),
                  ShapeError);
  CHECK_THROWS_AS(ops::conv2d(g, Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({2}), {}),
                  ShapeError);
}

TEST_CASE("conv2d gradcheck on a 1x2x5x5 input with pad 1") {
  auto rep = gradcheck(
      "conv2d", [](Graph& g, std::span<const Tensor> in) { return ops::conv2d(g, in[0], in[1], in[2], {1, 1}); },
      std::vector<Shape>{{1, 2, 5, 5}, {3, 2, 3, 3}, {3}}, 5);
  CHECK(rep.passed());
}

TEST_CASE("batchnorm train mode standardizes each channel") {
  const std::size_t n = 3, c = 2, h = 4, w = 5;
  auto xv = oracle::normal_values(n * c * h * w, 31, 3.0);
  for (std::size_t i = 0; i < xv.size(); ++i) xv[i] += (i / (h * w)) % c == 0 ? 10.0 : -4.0;
  BatchNormStats stats(c);
  Graph g;
  auto y = ops::batchnorm2d(g, Tensor::from({n, c, h, w}, xv), Tensor::full({c}, 1.0), Tensor::zeros({c}),
                            Mode::train, stats);
  const double m = static_cast<double>(n * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0, s2 = 0.0, xs = 0.0, xs2 = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < h * w; ++i) {
        const std::size_t idx = (b * c + ch) * h * w + i;
        s += y.data()[idx];
        s2 += y.data()[idx] * y.data()[idx];
        xs += xv[idx];
        xs2 += xv[idx] * xv[idx];
      }
    const double mean = s / m;
    CHECK(std::abs(mean) < 1e-9);
    const double biased = xs2 / m - (xs / m) * (xs / m);
    // Normalizing with eps shrinks the variance by var / (var + eps).
    CHECK(s2 / m - mean * mean == doctest::Approx(biased / (biased + ops::kBatchNormEps)).epsilon(1e-6));
    CHECK(s2 / m - mean * mean == doctest::Approx(1.0).epsilon(1e-6));
    // Running statistics: 0.9 * init + 0.1 * batch, with the unbiased variance.
    CHECK(stats.running_mean[ch] == doctest::Approx(0.1 * xs / m).epsilon(1e-12));
    CHECK(stats.running_var[ch] == doctest::Approx(0.9 + 0.1 * biased * m / (m - 1)).epsilon(1e-12));
  }
  CHECK(stats.initialized);
}

TEST_CASE("batchnorm with zero gamma outputs beta") {
  BatchNormStats stats(2);
  Graph g;
  auto y = ops::batchnorm2d(g, Tensor::from({2, 2, 2, 2}, oracle::normal_values(16, 3)), Tensor::zeros({2}),
                            Tensor::zeros({2}), Mode::train, stats);
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("batchnorm eval mode uses running statistics") {
  BatchNormStats stats(1);
  Graph g;
  CHECK_THROWS_WITH(ops::batchnorm2d(g, Tensor::zeros({1, 1, 2, 2}), Tensor::full({1}, 1.0), Tensor::zeros({1}),
                                     Mode::eval, stats),
                    doctest::Contains("uninitialized running statistics"));
  stats.set({2.0}, {4.0});
  auto y = ops::batchnorm2d(g, Tensor::from({1, 1, 1, 2}, {2.0, 6.0}), Tensor::full({1}, 3.0), Tensor::full({1}, 1.0),
                            Mode::eval, stats);
  CHECK(y.data()[0] == doctest::Approx(1.0));
  CHECK(y.data()[1] == doctest::Approx(1.0 + 3.0 * 4.0 / std::sqrt(4.0 + ops::kBatchNormEps)).epsilon(1e-14));
}

TEST_CASE("softmax of a constant slice is uniform") {
  Graph g;
  auto y = ops::softmax_along(g, Tensor::full({2, 7, 3}, 4.2), 1);
  for (double v : y.data()) CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
}

TEST_CASE("softmax is stable for large logits") {
  Graph g;
  auto y = ops::softmax_along(g, Tensor::from({3}, {1000.0, 1000.0, -1000.0}), 0);
  CHECK(y.data()[0] == doctest::Approx(0.5));
  CHECK(y.data()[2] == 0.0);
}

TEST_CASE("elementwise values") {
  Graph g;
  CHECK(ops::sigmoid(g, Tensor::scalar(0.0)).item() == 0.5);
  auto r = ops::relu(g, Tensor::from({3}, {-1.0, 0.0, 2.0}));
  CHECK(std::vector<double>(r.data().begin(), r.data().end()) == std::vector<double>{0.0, 0.0, 2.0});
  auto p = ops::avgpool2d(g, Tensor::from({1, 1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8}));
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == std::vector<double>{3.5, 5.5});
  auto u = ops::upsample2x_nearest(g, Tensor::from({1, 1, 1, 2}, {1, 2}));
  CHECK(std::vector<double>(u.data().begin(), u.data().end()) == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2});
  auto t = ops::permute(g, Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}), {1, 0});
  CHECK(std::vector<double>(t.data().begin(), t.data().end()) == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK_THROWS_AS(ops::avgpool2d(g, Tensor::zeros({1, 1, 3, 4})), ShapeError);
  CHECK_THROWS_AS(ops::add(g, Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
}

TEST_CASE("bce loss values") {
  Graph g;
  CHECK(ops::bce_loss(g, Tensor::scalar(0.5), Tensor::scalar(1.0)).item() == doctest::Approx(std::log(2.0)));
  CHECK(ops::bce_loss(g, Tensor::from({2}, {1.0, 0.0}), Tensor::from({2}, {1.0, 0.0})).item() < 1e-6);
  // Clamped at 1e-7: -ln(1e-7) for a confident wrong answer.
  CHECK(ops::bce_loss(g, Tensor::scalar(0.0), Tensor::scalar(1.0)).item() ==
        doctest::Approx(-std::log(ops::kBceClamp)).epsilon(1e-12));
  CHECK_THROWS(ops::bce_loss(g, Tensor::scalar(0.5), Tensor::scalar(0.5)));
}

TEST_CASE("bce gradient is zero outside the clamp") {
  Tensor p = Tensor::from({2}, {0.0, 0.3}, true);
  Graph g;
  g.backward(ops::bce_loss(g, p, Tensor::from({2}, {1.0, 1.0})));
  CHECK(p.grad()[0] == 0.0);
  CHECK(p.grad()[1] == doctest::Approx(-1.0 / (2 * 0.3)));
}

TEST_CASE("mse loss values") {
  Graph g;
  auto a = Tensor::from({2, 3}, oracle::normal_values(6, 4));
  CHECK(ops::mse_loss(g, a, a).item() == 0.0);
  std::vector<double> shifted(a.data().begin(), a.data().end());
  for (auto& v : shifted) v += 0.25;
  CHECK(ops::mse_loss(g, Tensor::from({2, 3}, shifted), a).item() == doctest::Approx(0.0625).epsilon(1e-14));
  CHECK_THROWS_AS(ops::mse_loss(g, a, Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("each op passes gradcheck over five seeds") {
  using Fn = GraphFn;
  struct Case {
    const char* name;
    Fn fn;
    std::vector<Shape> shapes;
  };
  const std::vector<Case> cases{
      {"sigmoid", [](Graph& g, std::span<const Tensor> in) { return ops::sigmoid(g, in[0]); }, {{2, 3, 4}}},
      {"softmax", [](Graph& g, std::span<const Tensor> in) { return ops::softmax_along(g, in[0], 1); }, {{2, 5, 3}}},
      {"avgpool", [](Graph& g, std::span<const Tensor> in) { return ops::avgpool2d(g, in[0]); }, {{2, 3, 4, 6}}},
      {"upsample", [](Graph& g, std::span<const Tensor> in) { return ops::upsample2x_nearest(g, in[0]); },
       {{1, 2, 3, 2}}},
      {"mse", [](Graph& g, std::span<const Tensor> in) { return ops::mse_loss(g, in[0], in[1]); }, {{3, 4}, {3, 4}}},
      {"batchnorm",
       [](Graph& g, std::span<const Tensor> in) {
         BatchNormStats s(3);
         return ops::batchnorm2d(g, in[0], in[1], in[2], Mode::train, s);
       },
       {{2, 3, 3, 4}, {3}, {3}}},
  };
  for (const auto& c : cases)
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto rep = gradcheck(c.name, c.fn, c.shapes, seed);
      CHECK_MESSAGE(rep.passed(), c.name << " seed " << seed << " err " << rep.worst());
    }
}
