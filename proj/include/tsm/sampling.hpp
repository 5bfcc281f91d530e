// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsm/model.hpp"
#include "tsm/rng.hpp"
#include "tsm/schedule.hpp"

namespace tsm {

// σ_t² choice for the reverse step.
enum class VarianceKind {
  posterior,  // β̃_t = β_t·(1 − ᾱ_{t−1}) / (1 − ᾱ_t)
  beta,       // β_t
};

std::string to_string(VarianceKind kind);
VarianceKind variance_kind_from_string(const std::string& s);

struct SamplerConfig {
  std::size_t steps = 0;  // 0 means T; only full-length chains are supported
  Mode mode;
  std::uint64_t seed = 0;
  std::size_t batch = 256;
  VarianceKind variance = VarianceKind::posterior;
  std::optional<int> label;  // class label for conditional models
};

// x_{t−1} = (x_t − β_t/√(1−ᾱ_t)·ε̂)/√α_t + σ_t·z, with z = 0 at t = 1.
// Noise is drawn from rng only when t > 1.
Matrix ancestral_update(const Matrix& x_t, const Matrix& eps_hat, int t,
                        const NoiseSchedule& sched, Rng& rng,
                        VarianceKind variance);

// ε̂ from the model under `mode`, then ancestral_update.
Matrix ancestral_step(const DenoiserModel& model, const Matrix& x_t, int t,
                      const NoiseSchedule& sched, Rng& rng, const Mode& mode,
                      VarianceKind variance = VarianceKind::posterior,
                      std::optional<int> label = std::nullopt);

struct ExpertSwitch {
  int t = 0;     // first timestep served by the new expert
  int from = 0;  // interval ids
  int to = 0;
};

struct GateRecord {
  int t = 0;
  std::string layer;
  std::vector<double> mean_gate;  // batch mean, one per context expert
};

struct SampleResult {
  Matrix samples;  // data_dim × batch
  // Active interval (fostering scale, or core scale when assembled) per
  // reverse step, indexed by t − 1. Empty in base mode.
  std::vector<int> expert_by_t;
  std::vector<ExpertSwitch> switches;
  std::vector<GateRecord> gates;  // assembled mode only
};

// Runs t = T … 1 from x_T ~ N(0, I). Throws NumericalError naming the step
// if the state stops being finite.
SampleResult sample(const DenoiserModel& model, const NoiseSchedule& sched,
                    const SamplerConfig& config);

}  // namespace tsm
