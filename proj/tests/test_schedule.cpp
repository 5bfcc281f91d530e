// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"
#include "tsm/errors.hpp"
#include "tsm/rng.hpp"
#include "tsm/schedule.hpp"
#include "tsm/training.hpp"

using namespace tsm;

TEST_CASE("linear schedule endpoints") {
  const auto s = make_schedule(1000, ScheduleKind::linear);
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-15));
  CHECK(s.alpha_bar(0) == 1.0);
  // Product of (1 − β_t) evaluated independently in long double.
  long double prod = 1.0L;
  for (int t = 1; t <= 1000; ++t)
    prod *= 1.0L - (1e-4L + (2e-2L - 1e-4L) * (t - 1) / 999.0L);
  CHECK(s.alpha_bar(1000) == doctest::Approx(static_cast<double>(prod)).epsilon(1e-12));
  CHECK(s.alpha_bar(1000) < 1e-4);
  CHECK(s.beta(1) == doctest::Approx(1e-4));
  CHECK(s.beta(1000) == doctest::Approx(2e-2));
}

TEST_CASE("alpha bar strictly decreasing for every kind") {
  for (auto kind : {ScheduleKind::linear, ScheduleKind::cosine})
    for (int T : {2, 10, 1000}) {
      const auto s = make_schedule(T, kind);
      for (int t = 1; t <= T; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
      CHECK(s.alpha_bar(T) > 0.0);
    }
  CHECK_THROWS(make_schedule(0, ScheduleKind::linear));
  CHECK_THROWS(make_schedule(10, ScheduleKind::linear, 0.5, 0.1));
  CHECK_THROWS(make_schedule(10, ScheduleKind::linear).alpha_bar(11));
}

TEST_CASE("forward kernel") {
  const auto s = make_schedule(1000, ScheduleKind::linear);
  const Matrix x0{{2.0}, {-1.0}}, eps{{1.0}, {0.5}};
  const Matrix xt = forward_diffuse(x0, 500, eps, s);
  const double a = s.alpha_bar(500);
  CHECK(xt(0, 0) == std::sqrt(a) * 2.0 + std::sqrt(1 - a) * 1.0);
  CHECK_THROWS_AS(forward_diffuse(x0, 1, Matrix(1, 1), s), ShapeError);
  // Hand evaluation at ᾱ = 0.25: 0.5·2 + √0.75·1.
  CHECK(std::sqrt(0.25) * 2.0 + std::sqrt(0.75) * 1.0 == doctest::Approx(1.86603).epsilon(1e-5));
}

TEST_CASE("forward kernel variance matches 1 − ᾱ") {
  const auto s = make_schedule(1000, ScheduleKind::linear);
  Rng rng(11);
  const int N = 100000;
  Matrix x0(1, N, 1.5), eps(1, N);
  for (auto& e : eps.data()) e = rng.normal();
  const Matrix xt = forward_diffuse(x0, 300, eps, s);
  double mean = 0, var = 0;
  for (double v : xt.data()) mean += v;
  mean /= N;
  for (double v : xt.data()) var += (v - mean) * (v - mean);
  var /= N - 1;
  const double a = s.alpha_bar(300);
  CHECK(mean == doctest::Approx(std::sqrt(a) * 1.5).epsilon(0.01));
  // Sample variance std error is about sqrt(2/N) relative.
  CHECK(std::abs(var / (1 - a) - 1.0) < 5 * std::sqrt(2.0 / N));
}

TEST_CASE("interval index examples") {
  CHECK(interval_index(1000, 1000, 8) == 8);
  CHECK(interval_index(125, 1000, 8) == 1);
  CHECK(interval_index(126, 1000, 8) == 2);
  for (int t = 1; t <= 37; ++t) CHECK(interval_index(t, 37, 1) == 1);
  CHECK_THROWS_AS(interval_index(0, 10, 2), RangeError);
  CHECK_THROWS_AS(interval_index(11, 10, 2), RangeError);
  CHECK_THROWS(interval_index(5, 10, 11));
}

TEST_CASE("interval bounds examples") {
  CHECK(interval_bounds(1, 1000, 8).lo == 1);
  CHECK(interval_bounds(1, 1000, 8).hi == 125);
  CHECK(interval_bounds(3, 10, 4).lo == 6);
  CHECK(interval_bounds(3, 10, 4).hi == 7);
  for (int n : {1, 3, 7}) CHECK(interval_bounds(n, 37, n).hi == 37);
  CHECK_THROWS_AS(interval_bounds(0, 10, 2), RangeError);
}

TEST_CASE("partition property by enumeration") {
  for (int T : {1, 2, 5, 10, 37, 100, 999})
    for (int n = 1; n <= T && n <= 40; ++n) {
      int next = 1;
      for (int i = 1; i <= n; ++i) {
        const auto b = interval_bounds(i, T, n);
        REQUIRE(b.lo == next);
        REQUIRE(b.hi >= b.lo);
        for (int t = b.lo; t <= b.hi; ++t) REQUIRE(interval_index(t, T, n) == i);
        next = b.hi + 1;
      }
      REQUIRE(next == T + 1);
    }
}

TEST_CASE("multi-scale indices") {
  const ScaleSet s({8, 4, 2, 1});
  CHECK(multi_scale_indices(300, 1000, s) == std::vector<int>{3, 2, 1, 1});
  CHECK(multi_scale_indices(1000, 1000, s) == std::vector<int>{8, 4, 2, 1});
  CHECK(multi_scale_indices(1, 1000, ScaleSet({8, 1})) == std::vector<int>{1, 1});
  CHECK(s.total_intervals() == 15);
  CHECK_THROWS(ScaleSet({1, 8}));
  CHECK_THROWS(ScaleSet(std::vector<int>{}));
  CHECK_THROWS(ScaleSet({4, 4}));
}

TEST_CASE("interval timestep sampling") {
  Rng rng(3);
  SUBCASE("singleton intervals") {
    const IntervalPartition p(20, 20);
    for (int i = 1; i <= 20; ++i) CHECK(sample_timestep_in_interval(i, p, rng) == i);
  }
  SUBCASE("n = 1 covers [1, T]") {
    const IntervalPartition p(50, 1);
    std::vector<int> seen(51, 0);
    for (int k = 0; k < 5000; ++k) ++seen[sample_timestep_in_interval(1, p, rng)];
    CHECK(seen[0] == 0);
    for (int t = 1; t <= 50; ++t) CHECK(seen[t] > 0);
  }
  SUBCASE("chi-square uniformity on [1, 125]") {
    const IntervalPartition p(1000, 8);
    std::vector<int> counts(126, 0);
    const int N = 100000;
    for (int k = 0; k < N; ++k) {
      const int t = sample_timestep_in_interval(1, p, rng);
      REQUIRE(t >= 1);
      REQUIRE(t <= 125);
      ++counts[t];
    }
    const double e = N / 125.0;
    double chi2 = 0;
    for (int t = 1; t <= 125; ++t) chi2 += (counts[t] - e) * (counts[t] - e) / e;
    // Upper 0.001 quantile of χ² with 124 degrees of freedom.
    CHECK(chi2 < 178.408);
  }
}
