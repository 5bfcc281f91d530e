// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "tsm/adamw.hpp"
#include "tsm/errors.hpp"
#include "tsm/eval.hpp"
#include "tsm/training.hpp"

using namespace tsm;

namespace {

// Every sample is the origin.
class PointMass final : public Dataset {
 public:
  std::size_t dim() const override { return 2; }
  std::size_t num_classes() const override { return 1; }
  std::string describe() const override { return "point"; }
  void sample(Rng&, std::size_t count, Matrix& out,
              std::vector<int>& labels) const override {
    out = Matrix(2, count);
    labels.assign(count, 0);
  }
};

TrainConfig quick(Stage stage, std::size_t steps, double lr = 2e-3) {
  TrainConfig c;
  c.stage = stage;
  c.steps = steps;
  c.batch = 32;
  c.optimizer.lr = lr;
  c.seed = 5;
  c.val_samples_per_interval = 0;
  return c;
}

std::map<std::string, Matrix> copy_of(const ParamStore& s,
                                      const std::vector<std::string>& names) {
  std::map<std::string, Matrix> out;
  for (const auto& n : names) out.emplace(n, s.value(n));
  return out;
}

bool unchanged(const ParamStore& s, const std::map<std::string, Matrix>& before) {
  for (const auto& [n, m] : before)
    if (!(s.value(n) == m)) return false;
  return true;
}

}  // namespace

TEST_CASE("adamw first step and decay") {
  ParamStore s;
  s.add("w", Matrix{{2.0}}, true);
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  AdamW opt(cfg);
  s.mutable_grad("w")->data()[0] = 1.0;
  opt.step(s);
  // m̂ = 1, v̂ = 1 after bias correction, so the step is lr/(1 + ε).
  CHECK(s.value("w")(0, 0) == doctest::Approx(2.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));

  ParamStore d;
  d.add("w", Matrix{{3.0, -1.0}}, true);
  AdamWConfig dc;
  dc.lr = 0.1;
  dc.weight_decay = 0.01;
  AdamW decay(dc);
  decay.step(d);
  CHECK(d.value("w") == Matrix{{3.0 * (1 - 0.1 * 0.01), -1.0 * (1 - 0.1 * 0.01)}});

  ParamStore z;
  z.add("w", Matrix{{0.25}}, true);
  z.add("frozen", Matrix{{9.0}}, false);
  AdamWConfig zc;
  zc.weight_decay = 0.0;
  AdamW still(zc);
  for (int i = 0; i < 5; ++i) still.step(z);
  CHECK(z.value("w") == Matrix{{0.25}});
  CHECK(z.value("frozen") == Matrix{{9.0}});
  CHECK(still.step_count() == 5);
}

TEST_CASE("base training smoke test on a point mass") {
  const auto sched = make_schedule(100, ScheduleKind::linear);
  PointMass data;
  Rng init(1);
  DenoiserModel m(ModelSpec{}, 100, init);
  const auto r = train_base(m, sched, data, quick(Stage::base, 600, 1e-3));
  REQUIRE(r.trace.size() == 600);
  auto window = [&](std::size_t from) {
    double s = 0;
    for (std::size_t i = from; i < from + 200; ++i) s += r.trace[i].loss;
    return s / 200;
  };
  CHECK(window(200) < window(0));
  CHECK(window(400) < window(200));
  CHECK(r.trainable_params == m.params().scalar_count());
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto sched = make_schedule(50, ScheduleKind::linear);
  const auto data = make_dataset(DataSpec{});
  Rng init(2);
  DenoiserModel m(ModelSpec{}, 50, init);
  const auto before = copy_of(m.params(), m.params().names());
  auto cfg = quick(Stage::base, 5, 0.0);
  train_base(m, sched, *data, cfg);
  CHECK(unchanged(m.params(), before));
}

TEST_CASE("same seed gives the same loss trace") {
  const auto sched = make_schedule(50, ScheduleKind::linear);
  const auto data = make_dataset(DataSpec{});
  auto run = [&] {
    Rng init(3);
    DenoiserModel m(ModelSpec{}, 50, init);
    std::vector<double> losses;
    for (const auto& s : train_base(m, sched, *data, quick(Stage::base, 20)).trace)
      losses.push_back(s.loss);
    return losses;
  };
  CHECK(run() == run());
}

TEST_CASE("divergence is reported") {
  const auto sched = make_schedule(50, ScheduleKind::linear);
  const auto data = make_dataset(DataSpec{});
  Rng init(4);
  DenoiserModel m(ModelSpec{}, 50, init);
  CHECK_THROWS_AS(train_base(m, sched, *data, quick(Stage::base, 50, 1e4)),
                  DivergenceError);
}

TEST_CASE("fostering trains one expert at a time with the base frozen") {
  const int T = 40;
  const auto sched = make_schedule(T, ScheduleKind::linear);
  const auto data = make_dataset(DataSpec{});
  Rng init(5);
  DenoiserModel m(ModelSpec{}, T, init);
  const auto base = copy_of(m.params(), m.params().names());
  auto cfg = quick(Stage::fostering, 4);
  cfg.adapters = AdapterSpec{ScaleSet({4, 1}), 4, 4.0};
  const auto r = train_fostering(m, sched, *data, cfg);
  CHECK(unchanged(m.params(), base));
  CHECK(r.trace.size() == 5 * 4);
  CHECK(r.trace.front().unit == "n4.i1");
  CHECK(r.trace.back().unit == "n1.i1");
  // Per-expert trainable counts summed: 5 experts × 3 layers × r(d+k).
  CHECK(r.trainable_params == 5 * 3 * adapter_param_count(64, 64, 4));
  // Every expert moved away from its zero B.
  for (const auto& n : m.adapter_param_names())
    if (n.back() == 'B') CHECK_FALSE(m.params().value(n) == Matrix(64, 4));
  // Nothing is left trainable.
  CHECK(m.params().trainable_count() == 0);
  CHECK_THROWS_AS(train_base(m, sched, *data, quick(Stage::base, 1)), StageMismatch);
}

TEST_CASE("assembling trains routers only") {
  const int T = 40;
  const auto sched = make_schedule(T, ScheduleKind::linear);
  const auto data = make_dataset(DataSpec{});
  Rng init(6);
  DenoiserModel m(ModelSpec{}, T, init);
  auto fc = quick(Stage::fostering, 3);
  fc.adapters = AdapterSpec{ScaleSet({4, 1}), 4, 4.0};
  train_fostering(m, sched, *data, fc);
  const auto frozen = copy_of(m.params(), m.params().names());

  SUBCASE("zero steps keep the assembled model equal to the core expert") {
    train_assembling(m, sched, *data, quick(Stage::assembling, 0));
    Rng rng(1);
    Matrix x(2, 10);
    for (auto& v : x.data()) v = rng.normal();
    std::vector<int> t{1, 5, 9, 10, 11, 20, 21, 30, 31, 40};
    CHECK(m.predict(x, t, {}, Mode::assembled()) == m.predict(x, t, {}, Mode::fostering(0)));
  }
  SUBCASE("experts and base stay bit-identical") {
    const auto r = train_assembling(m, sched, *data, quick(Stage::assembling, 30));
    CHECK(unchanged(m.params(), frozen));
    CHECK(r.trainable_params == 3 * router_param_count(64, T, 2));
  }
  SUBCASE("needs two scales") {
    Rng i2(7);
    DenoiserModel one(ModelSpec{}, T, i2);
    auto c = quick(Stage::fostering, 1);
    c.adapters = AdapterSpec{ScaleSet({4}), 4, 4.0};
    train_fostering(one, sched, *data, c);
    CHECK_THROWS_AS(train_assembling(one, sched, *data, quick(Stage::assembling, 1)),
                    StageMismatch);
  }
}

TEST_CASE("finer experts and routed assembly help on the gaussian mixture") {
  const int T = 1000;
  const auto sched = make_schedule(T, ScheduleKind::linear);
  DataSpec src;
  src.modes = 4;
  src.radius = 2.5;
  src.sigma = 0.5;
  src.rotation = 0.7853981633974483;
  const auto source = make_dataset(src);
  const auto target = make_dataset(DataSpec{});
  Rng init(8);
  DenoiserModel m(ModelSpec{}, T, init);
  train_base(m, sched, *source, quick(Stage::base, 1500, 1e-3));

  auto fc = quick(Stage::fostering, 400, 5e-3);
  fc.batch = 64;
  fc.adapters = AdapterSpec{ScaleSet({4, 1}), 4, 4.0};
  train_fostering(m, sched, *target, fc);

  const HeldOut held = draw_held_out(*target, 1024, 99);
  const IntervalPartition part(T, 4);
  auto mean_loss = [&](const Mode& mode) {
    return weighted_interval_mean(per_interval_loss(m, sched, held, part, mode, 512, 99),
                                  part);
  };
  const double n4 = mean_loss(Mode::fostering(0));
  const double n1 = mean_loss(Mode::fostering(1));
  CHECK(n4 <= n1);

  auto ac = quick(Stage::assembling, 1500, 1e-3);
  ac.batch = 64;
  train_assembling(m, sched, *target, ac);
  CHECK(mean_loss(Mode::assembled()) <= n4);
}
