// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tsm/adamw.hpp"
#include "tsm/data.hpp"
#include "tsm/model.hpp"
#include "tsm/param_store.hpp"
#include "tsm/rng.hpp"
#include "tsm/schedule.hpp"

namespace tsm {

enum class Stage { base, fostering, assembling };

std::string to_string(Stage stage);

// RNG stream ids. Each unit of work draws from its own stream so results do
// not depend on the order units run in.
namespace streams {
constexpr std::uint64_t kBaseInit = 1;
constexpr std::uint64_t kBaseTrain = 2;
constexpr std::uint64_t kAdapterInit = 3;
constexpr std::uint64_t kAssemble = 4;
constexpr std::uint64_t kValidation = 5;
constexpr std::uint64_t kSampling = 6;
constexpr std::uint64_t kReference = 7;
constexpr std::uint64_t kHeldOut = 8;
constexpr std::uint64_t kDrift = 9;
constexpr std::uint64_t kGradCheck = 10;
// Fostering unit for interval i of a scale with n intervals.
constexpr std::uint64_t fostering(int n, int i) {
  return (std::uint64_t{1} << 40) | (static_cast<std::uint64_t>(n) << 20) |
         static_cast<std::uint64_t>(i);
}
}  // namespace streams

struct TrainConfig {
  Stage stage = Stage::base;
  // Fostering: adapters attached before training if the model has none.
  std::optional<AdapterSpec> adapters;
  std::size_t steps = 1000;  // per adapter in fostering
  std::size_t batch = 64;
  AdamWConfig optimizer;
  std::uint64_t seed = 0;
  // Held-out validation after training; 0 samples disables it.
  std::size_t val_samples_per_interval = 256;
  int val_partition = 0;  // 0: finest scale when adapters exist, else 8

  void validate() const;
};

struct StepRecord {
  std::string unit;  // "base", "n8.i3", "router"
  std::size_t step = 0;
  double loss = 0.0;
};

struct TrainReport {
  Stage stage = Stage::base;
  std::vector<StepRecord> trace;
  std::vector<double> interval_val_loss;
  double wall_seconds = 0.0;
  std::size_t trainable_params = 0;
  Rng::State rng_state;  // training stream position after the last step
};

constexpr double kDivergenceThreshold = 1e6;

// One minibatch of the denoising objective.
struct Batch {
  Matrix x0;
  Matrix eps;
  Matrix x_t;
  std::vector<int> t;
  std::vector<int> labels;
};

using TimestepSampler = std::function<int(Rng&)>;

Batch draw_batch(const Dataset& data, const NoiseSchedule& sched, Rng& rng,
                 std::size_t batch, const TimestepSampler& timestep);

// ‖ε − ε̂(x_t, t, c)‖² averaged over the batch, as a LossFn over the model's
// own ParamStore.
LossFn denoising_loss(const DenoiserModel& model, const Batch& batch,
                      const Mode& mode);

// Uniform over interval_bounds(i).
int sample_timestep_in_interval(int i, const IntervalPartition& partition,
                                Rng& rng);

// Trains every base tensor with t ~ U[1, T]. Model must not carry adapters.
TrainReport train_base(DenoiserModel& model, const NoiseSchedule& sched,
                       const Dataset& data, const TrainConfig& config);

// Trains each (scale, interval) expert in turn on timesteps inside its
// interval, with only that expert trainable. Throws InvariantViolation if
// any base tensor changes.
TrainReport train_fostering(DenoiserModel& model, const NoiseSchedule& sched,
                            const Dataset& data, const TrainConfig& config);

// Trains routers only (attached zero-initialised if absent) with
// t ~ U[1, T] in assembled mode. Throws InvariantViolation if any expert or
// base tensor changes.
TrainReport train_assembling(DenoiserModel& model, const NoiseSchedule& sched,
                             const Dataset& data, const TrainConfig& config);

}  // namespace tsm
