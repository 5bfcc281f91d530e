// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tsm/data.hpp"
#include "tsm/model.hpp"
#include "tsm/sampling.hpp"
#include "tsm/schedule.hpp"
#include "tsm/training.hpp"

namespace tsm {

// A fixed held-out sample of a dataset.
struct HeldOut {
  Matrix x;  // dim × count
  std::vector<int> labels;
};

HeldOut draw_held_out(const Dataset& data, std::size_t count,
                      std::uint64_t seed);

// Monte-Carlo denoising loss restricted to each interval of `partition`.
// The (x0, t, ε) draws depend only on `seed`, so two models evaluated with
// the same seed see identical inputs.
std::vector<double> per_interval_loss(const DenoiserModel& model,
                                      const NoiseSchedule& sched,
                                      const HeldOut& data,
                                      const IntervalPartition& partition,
                                      const Mode& mode,
                                      std::size_t samples_per_interval,
                                      std::uint64_t seed);

struct LossEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Same estimator with t ~ U[1, T].
LossEstimate global_loss(const DenoiserModel& model, const NoiseSchedule& sched,
                         const HeldOut& data, const Mode& mode,
                         std::size_t samples, std::uint64_t seed);

// Interval-size-weighted mean of per-interval entries.
double weighted_interval_mean(const std::vector<double>& losses,
                              const IntervalPartition& partition);

// 2·E‖X−Y‖ − E‖X−X′‖ − E‖Y−Y′‖ over all pairs (V-statistic). Points are
// columns. Exactly zero for identical sets and never negative.
double energy_distance(const Matrix& a, const Matrix& b);

struct DriftPoint {
  int t = 0;
  double mean_norm = 0.0;  // mean ‖h‖₂ of the middle hidden layer
};

// Diffuses a fixed probe batch to every stride-th timestep (and t = T) with
// fixed noise and records the middle hidden layer's mean activation norm.
std::vector<DriftPoint> hidden_state_drift(const DenoiserModel& model,
                                           const Matrix& probe,
                                           const NoiseSchedule& sched,
                                           const Mode& mode, int stride,
                                           std::uint64_t seed);

// Population std / |mean| of the drift statistic; 0 for a flat profile.
double coefficient_of_variation(const std::vector<DriftPoint>& profile);

struct CompareConfig {
  int n = 8;                  // core scale; context scale is always 1
  std::size_t rank = 4;       // per-expert rank; vanilla gets n·rank
  TrainConfig foster;         // steps = per-expert budget; vanilla gets n·steps
  TrainConfig assemble;
  std::size_t held_out = 2048;
  std::size_t samples_per_interval = 1024;
  std::size_t sample_count = 0;  // 0 skips sampling / energy distance
  VarianceKind variance = VarianceKind::posterior;
  std::uint64_t seed = 0;
};

struct CompareRow {
  std::string name;
  std::vector<double> interval_loss;
  double mean_loss = 0.0;
  double energy = -1.0;  // −1 when not sampled
  std::size_t trainable_params = 0;
  std::size_t adapter_params = 0;  // adapters active at any one timestep
};

struct CompareTable {
  std::vector<CompareRow> rows;  // base, vanilla, tsm-1stage, tsm-2stage
  const CompareRow& row(const std::string& name) const;
};

// Starting from a trained base model, fits vanilla LoRA (rank n·r, n = 1,
// n·steps) and the (n, 1) expert bank (rank r, steps per expert), assembles
// routers, and evaluates all four configurations on the same held-out draws.
CompareTable compare_param_matched(const DenoiserModel& base,
                                   const NoiseSchedule& sched,
                                   const Dataset& data,
                                   const CompareConfig& config);

}  // namespace tsm
