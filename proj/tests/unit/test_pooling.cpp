// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "wsed/error.hpp"
#include "wsed/gradcheck.hpp"
#include "wsed/ops.hpp"
#include "wsed/pooling.hpp"

using namespace wsed;

namespace {

TwoStepAttentionParams identity_params(std::size_t c) {
  std::vector<double> eye(c * c, 0.0);
  for (std::size_t i = 0; i < c; ++i) eye[i * c + i] = 1.0;
  TwoStepAttentionParams p;
  p.att1_weight = Tensor::zeros({c, c});
  p.att1_bias = Tensor::zeros({c});
  p.cls1_weight = Tensor::from({c, c}, eye);
  p.cls1_bias = Tensor::zeros({c});
  p.att2_weight = Tensor::zeros({c, c});
  p.att2_bias = Tensor::zeros({c});
  p.cls2_weight = Tensor::from({c, c}, eye);
  p.cls2_bias = Tensor::zeros({c});
  return p;
}

TwoStepAttentionParams random_params(std::size_t c, std::uint64_t seed, double scale = 2.0) {
  auto t = [&](Shape s, std::uint64_t k) {
    return Tensor::from(s, oracle::normal_values(shape_numel(s), seed * 8 + k, scale));
  };
  return {t({c, c}, 0), t({c}, 1), t({c, c}, 2), t({c}, 3), t({c, c}, 4), t({c}, 5), t({c, c}, 6), t({c}, 7)};
}

// Direct evaluation of the two-step recipe for one clip, z[c][f][t].
std::vector<double> two_step_reference(const std::vector<double>& z, std::size_t C, std::size_t F, std::size_t T,
                                       const TwoStepAttentionParams& p) {
  auto at = [](const Tensor& w, std::size_t i, std::size_t j) { return w.data()[i * w.dim(1) + j]; };
  auto zv = [&](std::size_t c, std::size_t f, std::size_t t) { return z[(c * F + f) * T + t]; };
  std::vector<double> p1(C * T);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> a(C * F), cl(C * F);
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t c = 0; c < C; ++c) {
        double sa = p.att1_bias.data()[c], sc = p.cls1_bias.data()[c];
        for (std::size_t k = 0; k < C; ++k) {
          sa += at(p.att1_weight, c, k) * zv(k, f, t);
          sc += at(p.cls1_weight, c, k) * zv(k, f, t);
        }
        a[c * F + f] = oracle::sigmoid(sa);
        cl[c * F + f] = sc;
      }
    for (std::size_t c = 0; c < C; ++c) {
      double denom = 0.0;
      for (std::size_t f = 0; f < F; ++f) denom += std::exp(a[c * F + f]);
      double acc = 0.0;
      for (std::size_t f = 0; f < F; ++f) acc += cl[c * F + f] * std::exp(a[c * F + f]) / denom;
      p1[c * T + t] = acc;
    }
  }
  std::vector<double> out(C);
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<double> a2(T), c2(T);
    for (std::size_t t = 0; t < T; ++t) {
      double sa = p.att2_bias.data()[c], sc = p.cls2_bias.data()[c];
      for (std::size_t k = 0; k < C; ++k) {
        sa += at(p.att2_weight, c, k) * p1[k * T + t];
        sc += at(p.cls2_weight, c, k) * p1[k * T + t];
      }
      a2[t] = oracle::sigmoid(sa);
      c2[t] = oracle::sigmoid(sc);
    }
    double denom = 0.0, acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) denom += std::exp(a2[t]);
    for (std::size_t t = 0; t < T; ++t) acc += c2[t] * std::exp(a2[t]) / denom;
    out[c] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("worked example: C=1, F'=2, T'=1") {
  auto p = identity_params(1);
  p.att1_weight = Tensor::from({1, 1}, {1.0});
  Graph g;
  auto r = two_step_attention(g, Tensor::from({1, 1, 2, 1}, {1.0, 3.0}), p);
  const double e1 = std::exp(oracle::sigmoid(1.0)), e3 = std::exp(oracle::sigmoid(3.0));
  const double w1 = e1 / (e1 + e3), w3 = e3 / (e1 + e3);
  const double p1 = 1.0 * w1 + 3.0 * w3;
  CHECK(std::abs(r.trace.za1.data()[0] - w1) < 1e-12);
  CHECK(std::abs(r.trace.za1.data()[1] - w3) < 1e-12);
  CHECK(std::abs(r.trace.zp1.data()[0] - p1) < 1e-12);
  CHECK(std::abs(r.probs.item() - oracle::sigmoid(p1)) < 1e-6);
  // Five-digit hand figures (0.44487, 0.55513, 2.11026, 0.89187) agree to 5e-4.
  CHECK(std::abs(r.trace.za1.data()[0] - 0.44487) < 5e-4);
  CHECK(std::abs(r.trace.zp1.data()[0] - 2.11026) < 5e-4);
  CHECK(std::abs(r.probs.item() - 0.89187) < 5e-4);
}

TEST_CASE("uniform attention degenerates to nested averages through a sigmoid") {
  const std::size_t C = 3, F = 4, T = 5;
  const auto zv = oracle::normal_values(C * F * T, 17);
  Graph g;
  auto r = two_step_attention(g, Tensor::from({1, C, F, T}, zv), identity_params(C));
  for (std::size_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      double m = 0.0;
      for (std::size_t f = 0; f < F; ++f) m += zv[(c * F + f) * T + t];
      acc += oracle::sigmoid(m / F);
    }
    CHECK(r.probs.data()[c] == doctest::Approx(acc / T).epsilon(1e-13));
  }
}

TEST_CASE("two-step attention matches a direct evaluation with random parameters") {
  const std::size_t C = 3, F = 4, T = 6;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto zv = oracle::normal_values(2 * C * F * T, seed);
    const auto p = random_params(C, seed);
    Graph g;
    auto r = two_step_attention(g, Tensor::from({2, C, F, T}, zv), p);
    for (std::size_t n = 0; n < 2; ++n) {
      const std::vector<double> zn(zv.begin() + n * C * F * T, zv.begin() + (n + 1) * C * F * T);
      const auto ref = two_step_reference(zn, C, F, T, p);
      for (std::size_t c = 0; c < C; ++c) CHECK(r.probs.data()[n * C + c] == doctest::Approx(ref[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention weights normalize and probabilities stay in [0, 1]") {
  const std::size_t C = 4, F = 3, T = 7;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Graph g;
    auto r = two_step_attention(g, Tensor::from({2, C, F, T}, oracle::normal_values(2 * C * F * T, seed + 100, 5.0)),
                                random_params(C, seed));
    const auto a1 = r.trace.za1.data();
    for (std::size_t nc = 0; nc < 2 * C; ++nc)
      for (std::size_t t = 0; t < T; ++t) {
        double s = 0.0;
        for (std::size_t f = 0; f < F; ++f) s += a1[(nc * F + f) * T + t];
        CHECK(std::abs(s - 1.0) < 1e-9);
      }
    const auto a2 = r.trace.za2.data();
    for (std::size_t nc = 0; nc < 2 * C; ++nc) {
      double s = 0.0;
      for (std::size_t t = 0; t < T; ++t) s += a2[nc * T + t];
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
    for (double p : r.probs.data()) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    CHECK(std::equal(r.probs.data().begin(), r.probs.data().end(), r.trace.zp2.data().begin()));
  }
}

TEST_CASE("permuting categories permutes the probabilities") {
  const std::size_t C = 3, F = 2, T = 4;
  const std::vector<std::size_t> perm{2, 0, 1};
  const auto zv = oracle::normal_values(C * F * T, 8);
  const auto p = random_params(C, 8);
  std::vector<double> zp(zv.size());
  for (std::size_t c = 0; c < C; ++c)
    std::copy_n(zv.begin() + perm[c] * F * T, F * T, zp.begin() + c * F * T);
  auto conj = [&](const Tensor& w) {
    std::vector<double> out(C * C);
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t j = 0; j < C; ++j) out[i * C + j] = w.data()[perm[i] * C + perm[j]];
    return Tensor::from({C, C}, out);
  };
  auto vperm = [&](const Tensor& b) {
    std::vector<double> out(C);
    for (std::size_t i = 0; i < C; ++i) out[i] = b.data()[perm[i]];
    return Tensor::from({C}, out);
  };
  const TwoStepAttentionParams q{conj(p.att1_weight), vperm(p.att1_bias), conj(p.cls1_weight), vperm(p.cls1_bias),
                                 conj(p.att2_weight), vperm(p.att2_bias), conj(p.cls2_weight), vperm(p.cls2_bias)};
  Graph g;
  auto a = two_step_attention(g, Tensor::from({1, C, F, T}, zv), p);
  auto b = two_step_attention(g, Tensor::from({1, C, F, T}, zp), q);
  for (std::size_t c = 0; c < C; ++c) CHECK(b.probs.data()[c] == doctest::Approx(a.probs.data()[perm[c]]).epsilon(1e-14));
}

TEST_CASE("non-finite maps are rejected") {
  Graph g;
  auto z = Tensor::from({1, 1, 2, 1}, {1.0, std::nan("")});
  CHECK_THROWS_AS(two_step_attention(g, z, identity_params(1)), NumericError);
}

TEST_CASE("default init is uniform attention with zero class biases") {
  Rng rng(1);
  auto p = TwoStepAttentionParams::init(3, rng);
  for (const auto& t : {p.att1_weight, p.att1_bias, p.att2_weight, p.att2_bias, p.cls1_bias, p.cls2_bias})
    for (double v : t.data()) CHECK(v == 0.0);
  CHECK(p.named().size() == 8);
  CHECK(p.cls1_weight.requires_grad());
}

TEST_CASE("gap, gmp and gwrp on small maps") {
  Graph g;
  auto constant = Tensor::full({1, 2, 3, 4}, 0.7);
  const auto avg = gap(g, constant), top = gmp(g, constant);
  for (double v : avg.data()) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
  for (double v : top.data()) CHECK(v == 0.7);

  std::vector<double> spike(12, 0.0);
  spike[5] = 4.8;
  auto s = Tensor::from({1, 1, 3, 4}, spike);
  CHECK(gap(g, s).item() == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(gmp(g, s).item() == 4.8);

  CHECK(gwrp(g, Tensor::from({1, 1, 1, 3}, {3.0, 1.0, 2.0}), 0.5).item() == doctest::Approx(4.25 / 1.75).epsilon(1e-15));
  CHECK_THROWS(gwrp(g, s, 1.5));
  CHECK_THROWS(gwrp(g, s, -0.1));
}

TEST_CASE("gwrp endpoints equal gap and gmp, and gap <= gmp") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Graph g;
    auto z = Tensor::from({2, 3, 4, 5}, oracle::normal_values(120, seed, 3.0));
    auto a = gap(g, z), m = gmp(g, z), w1 = gwrp(g, z, 1.0), w0 = gwrp(g, z, 0.0);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(std::abs(w1.data()[i] - a.data()[i]) < 1e-12);
      CHECK(std::abs(w0.data()[i] - m.data()[i]) < 1e-12);
      CHECK(a.data()[i] <= m.data()[i]);
    }
  }
}

TEST_CASE("gwrp is continuous in the decay") {
  Graph g;
  auto z = Tensor::from({1, 1, 4, 4}, oracle::normal_values(16, 5));
  double prev = gwrp(g, z, 1.0).item();
  for (double d = 0.999; d > 0.0; d -= 0.001) {
    const double cur = gwrp(g, z, d).item();
    CHECK(std::abs(cur - prev) < 0.01);
    prev = cur;
  }
}

TEST_CASE("gmp gradient is one-hot at the first maximum") {
  Tensor z = Tensor::from({1, 1, 2, 3}, {1.0, 5.0, 2.0, 5.0, 0.0, -1.0}, true);
  Graph g;
  g.backward(ops::sum_along(g, ops::reshape(g, gmp(g, z), {1}), 0));
  CHECK(std::vector<double>(z.grad().begin(), z.grad().end()) == std::vector<double>{0, 1, 0, 0, 0, 0});
}

TEST_CASE("gmp score rises with the maximal cell") {
  Graph g;
  auto before = gmp(g, Tensor::from({1, 1, 1, 3}, {0.2, 0.9, 0.1})).item();
  auto after = gmp(g, Tensor::from({1, 1, 1, 3}, {0.2, 0.9001, 0.1})).item();
  CHECK(after > before);
}

TEST_CASE("gwrp gradient follows the sorted positions") {
  // Cells (3, 1, 2) with d = 0.5 have weights (1, 0.25, 0.5) / 1.75 at their
  // source positions.
  Tensor z = Tensor::from({1, 1, 1, 3}, {3.0, 1.0, 2.0}, true);
  Graph g;
  g.backward(ops::sum_along(g, ops::reshape(g, gwrp(g, z, 0.5), {1}), 0));
  CHECK(z.grad()[0] == doctest::Approx(1.0 / 1.75));
  CHECK(z.grad()[1] == doctest::Approx(0.25 / 1.75));
  CHECK(z.grad()[2] == doctest::Approx(0.5 / 1.75));

  auto rep = gradcheck(
      "gwrp", [](Graph& gg, std::span<const Tensor> in) { return gwrp(gg, in[0], 0.7); },
      std::vector<Shape>{{2, 2, 3, 4}}, 3);
  CHECK(rep.passed());
}

TEST_CASE("two-step attention gradcheck against Z and all eight parameter blocks") {
  const std::size_t C = 3;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto p = random_params(C, seed, 1.0);
    std::vector<GradcheckInput> inputs{{"z", Tensor::from({2, C, 3, 4}, oracle::normal_values(72, seed))}};
    const char* names[] = {"att1_w", "att1_b", "cls1_w", "cls1_b", "att2_w", "att2_b", "cls2_w", "cls2_b"};
    const Tensor* blocks[] = {&p.att1_weight, &p.att1_bias, &p.cls1_weight, &p.cls1_bias,
                              &p.att2_weight, &p.att2_bias, &p.cls2_weight, &p.cls2_bias};
    for (int i = 0; i < 8; ++i) inputs.push_back({names[i], blocks[i]->clone()});
    auto fn = [](Graph& g, std::span<const Tensor> in) {
      return two_step_attention(g, in[0], {in[1], in[2], in[3], in[4], in[5], in[6], in[7], in[8]}).probs;
    };
    auto rep = gradcheck("2ap", fn, inputs, seed);
    CHECK_MESSAGE(rep.passed(), "seed " << seed << " err " << rep.worst());
    CHECK(rep.max_rel_error.size() == 9);
  }
}

TEST_CASE("pooling names round trip") {
  for (auto k : {PoolingKind::two_step_attention, PoolingKind::gap, PoolingKind::gmp, PoolingKind::gwrp})
    CHECK(parse_pooling(pooling_name(k)) == k);
  CHECK(pooling_name(PoolingKind::two_step_attention) == "2ap");
  CHECK_THROWS(parse_pooling("avg"));
}
