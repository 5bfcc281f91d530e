// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "tsm/data.hpp"
#include "tsm/model.hpp"
#include "tsm/sampling.hpp"
#include "tsm/schedule.hpp"
#include "tsm/training.hpp"

namespace tsm {

struct OptimSettings {
  std::size_t steps = 1000;
  std::size_t batch = 64;
  double lr = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;

  bool operator==(const OptimSettings&) const = default;
};

struct FosterSettings {
  OptimSettings optim;
  std::vector<int> scales{8, 1};
  std::size_t rank = 4;
  double alpha = 4.0;

  bool operator==(const FosterSettings&) const = default;
};

struct SampleSettings {
  std::size_t count = 2000;
  std::string variance = "posterior";  // posterior | beta
  std::string format = "csv";          // csv | bin
  std::string mode = "auto";           // auto | base | fostering | assembled
  std::size_t scale = 0;               // fostering scale position

  bool operator==(const SampleSettings&) const = default;
};

struct EvalSettings {
  int partition = 8;
  std::size_t samples_per_interval = 1024;
  std::size_t held_out = 2048;
  std::size_t reference_count = 2000;
  std::size_t drift_probe = 64;
  int drift_stride = 10;

  bool operator==(const EvalSettings&) const = default;
};

struct GradCheckSettings {
  std::size_t batch = 4;
  double step = 1e-5;
  double tolerance = 1e-4;

  bool operator==(const GradCheckSettings&) const = default;
};

// Everything a command needs. Every field has a default; a config file may
// set any subset, but unknown keys and mistyped values are rejected with a
// ConfigError before any compute starts.
struct RunConfig {
  std::uint64_t seed = 0;
  int T = 1000;
  ScheduleKind schedule = ScheduleKind::linear;
  double beta_min = 1e-4;
  double beta_max = 2e-2;
  ModelSpec model;      // data_dim is taken from the dataset
  DataSpec data;        // fine-tuning target
  DataSpec base_data;   // pre-training source for train-base
  OptimSettings base;
  FosterSettings foster;
  OptimSettings assemble;
  SampleSettings sample;
  EvalSettings eval;
  GradCheckSettings grad_check;

  RunConfig();

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  NoiseSchedule make_noise_schedule() const;
  AdapterSpec adapter_spec() const;
  TrainConfig base_train() const;
  TrainConfig foster_train() const;
  TrainConfig assemble_train() const;
};

}  // namespace tsm
