// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "doctest.h"
#include "tsm/errors.hpp"
#include "tsm/eval.hpp"

using namespace tsm;

namespace {

TrainConfig quick(Stage stage, std::size_t steps, double lr) {
  TrainConfig c;
  c.stage = stage;
  c.steps = steps;
  c.batch = 64;
  c.optimizer.lr = lr;
  c.seed = 2;
  c.val_samples_per_interval = 0;
  return c;
}

}  // namespace

TEST_CASE("energy distance hand cases") {
  Rng rng(1);
  Matrix a(2, 50);
  for (auto& v : a.data()) v = rng.normal();
  Matrix b(2, 70);
  for (auto& v : b.data()) v = rng.normal() + 0.5;
  CHECK(energy_distance(a, a) == 0.0);
  CHECK(energy_distance(Matrix{{0.0}}, Matrix{{1.0}}) == 2.0);
  CHECK(energy_distance(Matrix{{0.0, 0.0}}, Matrix{{3.0, 3.0, 3.0}}) == 6.0);
  CHECK(energy_distance(a, b) == doctest::Approx(energy_distance(b, a)).epsilon(1e-14));
  CHECK(energy_distance(a, b) > 0.0);
  CHECK_THROWS_AS(energy_distance(a, Matrix(3, 4)), ShapeError);
}

TEST_CASE("held-out losses") {
  const int T = 200;
  const auto sched = make_schedule(T, ScheduleKind::linear);
  const auto data = make_dataset(DataSpec{});
  Rng init(3);
  DenoiserModel untrained(ModelSpec{}, T, init);
  untrained.attach_adapters(AdapterSpec{ScaleSet({4}), 4, 4.0}, init);
  const HeldOut held = draw_held_out(*data, 512, 7);

  SUBCASE("same seed, same vector") {
    const IntervalPartition p(T, 4);
    CHECK(per_interval_loss(untrained, sched, held, p, Mode::base(), 200, 5) ==
          per_interval_loss(untrained, sched, held, p, Mode::base(), 200, 5));
  }
  SUBCASE("one interval equals the global estimate") {
    const auto one = per_interval_loss(untrained, sched, held, IntervalPartition(T, 1),
                                       Mode::base(), 300, 5);
    REQUIRE(one.size() == 1);
    CHECK(one[0] == global_loss(untrained, sched, held, Mode::base(), 300, 5).mean);
  }
  SUBCASE("interval losses are consistent with the global loss") {
    const IntervalPartition p(T, 4);
    const auto per = per_interval_loss(untrained, sched, held, p, Mode::base(), 4000, 5);
    const auto g = global_loss(untrained, sched, held, Mode::base(), 4000, 6);
    const double w = weighted_interval_mean(per, p);
    // Per-interval means are stratified, so their error is below the global one.
    CHECK(std::abs(w - g.mean) < 3.0 * std::sqrt(2.0) * g.std_error);
  }
  SUBCASE("training lowers every interval's loss") {
    DenoiserModel trained = untrained;
    train_fostering(trained, sched, *data, quick(Stage::fostering, 300, 5e-3));
    const IntervalPartition p(T, 4);
    const auto before = per_interval_loss(untrained, sched, held, p, Mode::fostering(0), 512, 9);
    const auto after = per_interval_loss(trained, sched, held, p, Mode::fostering(0), 512, 9);
    for (std::size_t i = 0; i < 4; ++i) CHECK(before[i] >= after[i]);
  }
}

TEST_CASE("hidden state drift") {
  const int T = 100;
  const auto sched = make_schedule(T, ScheduleKind::linear);
  const auto data = make_dataset(DataSpec{});
  const HeldOut probe = draw_held_out(*data, 32, 4);

  Rng init(5);
  DenoiserModel zero(ModelSpec{}, T, init);
  for (const auto& n : zero.params().names()) {
    Matrix& m = zero.params().mutable_value(n);
    m = Matrix(m.rows(), m.cols());
  }
  const auto flat = hidden_state_drift(zero, probe.x, sched, Mode::base(), 10, 1);
  CHECK(coefficient_of_variation(flat) == 0.0);
  CHECK(flat.front().t == 1);
  CHECK(flat.back().t == T);

  Rng init2(6);
  DenoiserModel m(ModelSpec{}, T, init2);
  train_base(m, sched, *data, quick(Stage::base, 200, 2e-3));
  const auto a = hidden_state_drift(m, probe.x, sched, Mode::base(), 10, 1);
  const auto b = hidden_state_drift(m, probe.x, sched, Mode::base(), 10, 1);
  CHECK(coefficient_of_variation(a) > 0.0);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].mean_norm == b[i].mean_norm);
}

TEST_CASE("parameter-matched comparison bookkeeping") {
  const int T = 40;
  const auto sched = make_schedule(T, ScheduleKind::linear);
  const auto data = make_dataset(DataSpec{});
  Rng init(7);
  DenoiserModel base(ModelSpec{}, T, init);
  train_base(base, sched, *data, quick(Stage::base, 20, 2e-3));

  CompareConfig cc;
  cc.n = 8;
  cc.rank = 4;
  cc.foster = quick(Stage::fostering, 2, 2e-3);
  cc.assemble = quick(Stage::assembling, 2, 1e-3);
  cc.held_out = 128;
  cc.samples_per_interval = 32;
  cc.seed = 3;
  const CompareTable t = compare_param_matched(base, sched, *data, cc);
  REQUIRE(t.rows.size() == 4);
  CHECK(t.row("vanilla").adapter_params == t.row("tsm-1stage").adapter_params);
  CHECK(t.row("vanilla").adapter_params == 3 * adapter_param_count(64, 64, 32));
  CHECK(t.row("tsm-2stage").trainable_params < t.row("tsm-1stage").trainable_params);
  CHECK(t.row("tsm-2stage").trainable_params == 3 * router_param_count(64, T, 2));

  cc.n = 1;
  const CompareTable one = compare_param_matched(base, sched, *data, cc);
  REQUIRE(one.rows.size() == 3);
  CHECK(one.row("tsm-1stage").interval_loss == one.row("vanilla").interval_loss);
}
