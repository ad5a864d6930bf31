// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "metric_oracle.hpp"
#include "wsed/error.hpp"
#include "wsed/metrics.hpp"

using namespace wsed;

TEST_CASE("micro precision hand count") {
  const auto b = oracle::binary_batch({{1, 0, 1}, {1, 1, 0}}, {{1, 0, 0}, {1, 1, 0}});
  const Counts c = pooled_counts(b, 0.5);
  CHECK(c.tp == 3);
  CHECK(c.fp == 1);
  CHECK(c.fn == 0);
  CHECK(*micro_precision(b) == 0.75);
}

TEST_CASE("macro precision hand count") {
  const auto b = oracle::binary_batch({{1, 0, 1}, {1, 1, 0}}, {{1, 0, 0}, {1, 1, 0}});
  const auto m = macro_precision(b);
  REQUIRE(m.per_category.size() == 3);
  CHECK(*m.per_category[0] == 1.0);
  CHECK(*m.per_category[1] == 1.0);
  CHECK(*m.per_category[2] == 0.0);
  CHECK(*m.value == doctest::Approx(2.0 / 3.0));
  CHECK(std::abs(*m.value - 0.6667) < 5e-5);
  CHECK(m.excluded == 0);
}

TEST_CASE("perfect and empty predictions") {
  const auto perfect = oracle::binary_batch({{1, 0}, {0, 1}}, {{1, 0}, {0, 1}});
  CHECK(*micro_precision(perfect) == 1.0);
  const auto none = oracle::binary_batch({{0, 0}, {0, 0}}, {{1, 0}, {0, 1}});
  CHECK_FALSE(micro_precision(none).has_value());
  CHECK_FALSE(macro_precision(none).value.has_value());
  CHECK(macro_precision(none).excluded == 2);
  CHECK(format_metric(micro_precision(none)) == "undefined");
}

TEST_CASE("macro excludes categories without positive predictions") {
  const auto b = oracle::binary_batch({{1, 0}, {1, 0}}, {{1, 1}, {0, 1}});
  const auto m = macro_precision(b);
  CHECK(m.excluded == 1);
  CHECK(*m.value == 0.5);
  CHECK_FALSE(m.per_category[1].has_value());
}

TEST_CASE("identical per-category precision gives the same macro value") {
  const auto b = oracle::binary_batch({{1, 1}, {1, 1}}, {{1, 0}, {0, 1}});
  CHECK(*macro_precision(b).value == 0.5);
}

TEST_CASE("single category macro equals micro") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto b = oracle::random_batch(seed);
    b.num_categories = 1;
    b.scores.resize(b.num_clips);
    b.labels.resize(b.num_clips);
    b.categories.resize(1);
    const auto micro = micro_precision(b), macro = macro_precision(b).value;
    CHECK(micro.has_value() == macro.has_value());
    if (micro) CHECK(*micro == *macro);
  }
}

TEST_CASE("threshold is inclusive") {
  const auto b = oracle::binary_batch({{1}}, {{1}});
  EvalBatch half = b;
  half.scores = {0.5};
  CHECK(pooled_counts(half, 0.5).tp == 1);
  CHECK(pooled_counts(half, 0.5000001).tp == 0);
}

TEST_CASE("auc worked examples") {
  CHECK(*roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<std::uint8_t>{0, 0, 1, 1}) == 0.75);
  CHECK(*roc_auc(std::vector<double>{0.1, 0.2, 0.7, 0.9}, std::vector<std::uint8_t>{0, 0, 1, 1}) == 1.0);
  CHECK(*roc_auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<std::uint8_t>{1, 0, 1, 0}) == 0.5);
  CHECK_FALSE(roc_auc(std::vector<double>{0.3, 0.4}, std::vector<std::uint8_t>{1, 1}).has_value());
}

TEST_CASE("auc equals brute-force pair counting") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto b = oracle::random_batch(seed);
    const auto r = macro_auc(b);
    const double ref = oracle::pair_count_macro_auc(b);
    if (std::isnan(ref)) {
      CHECK_FALSE(r.value.has_value());
    } else {
      REQUIRE(r.value.has_value());
      CHECK(std::abs(*r.value - ref) < 1e-12);
    }
  }
}

TEST_CASE("auc excludes single-class categories") {
  const auto b = oracle::binary_batch({{1, 0}, {0, 1}}, {{1, 1}, {0, 1}});
  const auto r = macro_auc(b);
  CHECK(r.excluded == 1);
  CHECK(*r.value == 1.0);
  const auto none = oracle::binary_batch({{1}, {0}}, {{1}, {1}});
  CHECK_FALSE(macro_auc(none).value.has_value());
}

TEST_CASE("metrics are invariant to clip order") {
  std::mt19937_64 gen(4);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto b = oracle::random_batch(seed);
    std::vector<std::size_t> perm(b.num_clips);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    EvalBatch s = b;
    for (std::size_t i = 0; i < b.num_clips; ++i)
      for (std::size_t c = 0; c < b.num_categories; ++c) {
        s.scores[i * b.num_categories + c] = b.score(perm[i], c);
        s.labels[i * b.num_categories + c] = b.label(perm[i], c);
      }
    const auto x = evaluate(b), y = evaluate(s);
    CHECK(x.micro_p == y.micro_p);
    CHECK(x.macro_p == y.macro_p);
    if (x.auc) CHECK(std::abs(*x.auc - *y.auc) < 1e-15);
    CHECK(per_category_csv(x) == per_category_csv(y));
  }
}

TEST_CASE("raising the threshold never adds predictions") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto b = oracle::random_batch(seed);
    Counts prev = pooled_counts(b, 0.0);
    for (double t = 0.05; t <= 1.0; t += 0.05) {
      const Counts c = pooled_counts(b, t);
      CHECK(c.tp <= prev.tp);
      CHECK(c.tp + c.fp <= prev.tp + prev.fp);
      prev = c;
    }
  }
}

TEST_CASE("per-category report sorts descending with undefined last") {
  auto b = oracle::binary_batch({{1, 1, 0, 1}, {1, 0, 0, 1}}, {{0, 1, 1, 1}, {1, 0, 0, 1}});
  b.categories = {"a", "b", "c", "d"};
  const auto rows = per_category_report(b);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].name == "b");
  CHECK(rows[1].name == "d");
  CHECK(rows[2].name == "a");
  CHECK(rows[3].name == "c");
  CHECK_FALSE(rows[3].precision.has_value());
  CHECK(per_category_csv(evaluate(b)).rfind("category,precision\n", 0) == 0);
}

TEST_CASE("invalid batches are rejected") {
  auto b = oracle::binary_batch({{1}}, {{1}});
  b.scores = {1.5};
  CHECK_THROWS_AS(b.validate(), NumericError);
  b.scores = {0.5};
  b.labels = {2};
  CHECK_THROWS_AS(b.validate(), DataError);
  b.labels = {1, 0};
  CHECK_THROWS_AS(b.validate(), ShapeError);
}
