// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/training.hpp"

#include <chrono>
#include <cmath>
#include <map>

#include "tsm/autodiff.hpp"
#include "tsm/errors.hpp"
#include "tsm/eval.hpp"

namespace tsm {

namespace {

using Clock = std::chrono::steady_clock;

std::map<std::string, Matrix> snapshot(const ParamStore& store,
                                       const std::vector<std::string>& names) {
  std::map<std::string, Matrix> out;
  for (const auto& n : names) out.emplace(n, store.value(n));
  return out;
}

void audit_unchanged(const ParamStore& store,
                     const std::map<std::string, Matrix>& before,
                     const std::string& what) {
  for (const auto& [name, m] : before)
    if (!(store.value(name) == m))
      throw InvariantViolation(what + " tensor '" + name + "' changed");
}

void require_trainable_exactly(const ParamStore& store,
                               const std::vector<std::string>& expected) {
  const auto actual = store.trainable_names();
  if (actual.size() != expected.size())
    throw InvariantViolation("trainable set does not match stage contract");
  for (std::size_t i = 0; i < actual.size(); ++i)
    if (actual[i] != expected[i])
      throw InvariantViolation("unexpected trainable tensor '" + actual[i] + "'");
}

// One optimisation step; returns the loss.
double optimise(DenoiserModel& model, AdamW& opt, const Batch& batch,
                const Mode& mode) {
  ParamStore& store = model.params();
  store.zero_grads();
  double loss = 0.0;
  try {
    loss = loss_and_grads(denoising_loss(model, batch, mode), store);
  } catch (const NumericalError& e) {
    throw DivergenceError(std::string("training diverged: ") + e.what());
  }
  if (loss > kDivergenceThreshold)
    throw DivergenceError("training diverged: loss " + std::to_string(loss) +
                          " exceeds " + std::to_string(kDivergenceThreshold));
  opt.step(store);
  return loss;
}

std::vector<double> validate(const DenoiserModel& model,
                             const NoiseSchedule& sched, const Dataset& data,
                             const TrainConfig& cfg, const Mode& mode) {
  if (cfg.val_samples_per_interval == 0) return {};
  int n = cfg.val_partition;
  if (n == 0) n = model.has_adapters() ? model.adapter_spec()->scales[0] : 8;
  const HeldOut held = draw_held_out(data, 1024, cfg.seed);
  return per_interval_loss(model, sched, held, IntervalPartition(sched.T(), n),
                           mode, cfg.val_samples_per_interval, cfg.seed);
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::base:
      return "base";
    case Stage::fostering:
      return "fostering";
    case Stage::assembling:
      return "assembling";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (batch == 0) throw ConfigError("batch must be positive");
  if (!(optimizer.lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (!(optimizer.beta1 > 0.0 && optimizer.beta1 < 1.0 &&
        optimizer.beta2 > 0.0 && optimizer.beta2 < 1.0))
    throw ConfigError("adam betas must lie in (0, 1)");
  if (optimizer.weight_decay < 0.0) throw ConfigError("weight decay < 0");
}

Batch draw_batch(const Dataset& data, const NoiseSchedule& sched, Rng& rng,
                 std::size_t batch, const TimestepSampler& timestep) {
  Batch b;
  data.sample(rng, batch, b.x0, b.labels);
  b.t.resize(batch);
  for (auto& t : b.t) t = timestep(rng);
  b.eps = Matrix(b.x0.rows(), batch);
  for (double& v : b.eps.data()) v = rng.normal();
  b.x_t = Matrix(b.x0.rows(), batch);
  for (std::size_t c = 0; c < batch; ++c) {
    const double s = std::sqrt(sched.alpha_bar(b.t[c]));
    const double n = std::sqrt(1.0 - sched.alpha_bar(b.t[c]));
    for (std::size_t r = 0; r < b.x0.rows(); ++r)
      b.x_t(r, c) = s * b.x0(r, c) + n * b.eps(r, c);
  }
  return b;
}

LossFn denoising_loss(const DenoiserModel& model, const Batch& batch,
                      const Mode& mode) {
  return [&model, &batch, mode](ParamStore& store, bool backprop) {
    if (&store != &model.params())
      throw std::invalid_argument("denoising_loss: foreign parameter store");
    ad::Tape tape(backprop);
    std::span<const int> labels;
    if (model.spec().num_classes > 0) labels = batch.labels;
    ForwardResult r = model.forward(tape, batch.x_t, batch.t, labels, mode);
    ad::Var loss = tape.sq_err_mean(r.output, batch.eps);
    if (backprop) tape.backward(loss, store);
    return tape.value(loss)(0, 0);
  };
}

int sample_timestep_in_interval(int i, const IntervalPartition& partition,
                                Rng& rng) {
  const IntervalBounds b = partition.bounds(i);
  return static_cast<int>(rng.uniform_int(b.lo, b.hi));
}

TrainReport train_base(DenoiserModel& model, const NoiseSchedule& sched,
                       const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (model.has_adapters())
    throw StageMismatch("base training expects a model without adapters");
  if (data.dim() != model.spec().data_dim)
    throw ShapeError("dataset dimension does not match model");
  const auto start = Clock::now();
  ParamStore& store = model.params();
  store.freeze_all();
  const auto names = model.base_param_names();
  for (const auto& n : names) store.set_trainable(n, true);

  TrainReport report;
  report.stage = Stage::base;
  report.trainable_params = store.trainable_count();
  Rng rng(cfg.seed, streams::kBaseTrain);
  AdamW opt(cfg.optimizer);
  const int T = sched.T();
  auto uniform_t = [T](Rng& r) { return static_cast<int>(r.uniform_int(1, T)); };
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const Batch batch = draw_batch(data, sched, rng, cfg.batch, uniform_t);
    report.trace.push_back({"base", step, optimise(model, opt, batch, Mode::base())});
  }
  store.freeze_all();
  report.rng_state = rng.state();
  report.interval_val_loss = validate(model, sched, data, cfg, Mode::base());
  report.wall_seconds = seconds_since(start);
  return report;
}

TrainReport train_fostering(DenoiserModel& model, const NoiseSchedule& sched,
                            const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (model.has_routers())
    throw StageMismatch("fostering expects a model without routers");
  if (data.dim() != model.spec().data_dim)
    throw ShapeError("dataset dimension does not match model");
  if (!model.has_adapters()) {
    if (!cfg.adapters)
      throw ConfigError("fostering needs an adapter spec (scales, rank, alpha)");
    Rng init(cfg.seed, streams::kAdapterInit);
    model.attach_adapters(*cfg.adapters, init);
  } else if (cfg.adapters && !(*cfg.adapters == *model.adapter_spec())) {
    throw StageMismatch("model adapters differ from the configured adapter spec");
  }
  const auto start = Clock::now();
  const AdapterSpec& spec = *model.adapter_spec();
  ParamStore& store = model.params();
  const auto frozen_base = snapshot(store, model.base_param_names());

  TrainReport report;
  report.stage = Stage::fostering;
  const int T = sched.T();
  for (std::size_t j = 0; j < spec.scales.size(); ++j) {
    const int n = spec.scales[j];
    const IntervalPartition partition(T, n);
    for (int i = 1; i <= n; ++i) {
      store.freeze_all();
      const auto unit_params = model.adapter_param_names(j, i);
      for (const auto& p : unit_params) store.set_trainable(p, true);
      require_trainable_exactly(store, unit_params);
      report.trainable_params += store.trainable_count();

      Rng rng(cfg.seed, streams::fostering(n, i));
      AdamW opt(cfg.optimizer);
      auto in_interval = [&partition, i](Rng& r) {
        return sample_timestep_in_interval(i, partition, r);
      };
      const std::string unit = "n" + std::to_string(n) + ".i" + std::to_string(i);
      for (std::size_t step = 1; step <= cfg.steps; ++step) {
        const Batch batch = draw_batch(data, sched, rng, cfg.batch, in_interval);
        report.trace.push_back(
            {unit, step, optimise(model, opt, batch, Mode::fostering(j))});
      }
      report.rng_state = rng.state();
    }
  }
  store.freeze_all();
  audit_unchanged(store, frozen_base, "base");
  report.interval_val_loss = validate(model, sched, data, cfg, Mode::fostering(0));
  report.wall_seconds = seconds_since(start);
  return report;
}

TrainReport train_assembling(DenoiserModel& model, const NoiseSchedule& sched,
                             const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (!model.has_adapters())
    throw StageMismatch("assembling needs trained experts");
  if (model.adapter_spec()->scales.size() < 2)
    throw StageMismatch("assembling needs at least two scales");
  if (data.dim() != model.spec().data_dim)
    throw ShapeError("dataset dimension does not match model");
  if (!model.has_routers()) model.attach_routers();
  const auto start = Clock::now();
  ParamStore& store = model.params();
  auto frozen_names = model.base_param_names();
  for (const auto& n : model.adapter_param_names()) frozen_names.push_back(n);
  const auto frozen = snapshot(store, frozen_names);

  store.freeze_all();
  const auto router_params = model.router_param_names();
  for (const auto& p : router_params) store.set_trainable(p, true);
  require_trainable_exactly(store, router_params);

  TrainReport report;
  report.stage = Stage::assembling;
  report.trainable_params = store.trainable_count();
  Rng rng(cfg.seed, streams::kAssemble);
  AdamW opt(cfg.optimizer);
  const int T = sched.T();
  auto uniform_t = [T](Rng& r) { return static_cast<int>(r.uniform_int(1, T)); };
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const Batch batch = draw_batch(data, sched, rng, cfg.batch, uniform_t);
    report.trace.push_back(
        {"router", step, optimise(model, opt, batch, Mode::assembled())});
  }
  store.freeze_all();
  report.rng_state = rng.state();
  audit_unchanged(store, frozen, "expert/base");
  report.interval_val_loss = validate(model, sched, data, cfg, Mode::assembled());
  report.wall_seconds = seconds_since(start);
  return report;
}

}  // namespace tsm
