// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "tsm/model.hpp"
#include "tsm/rng.hpp"

namespace tsm {

// A checkpoint is a directory holding manifest.json and tensors.bin. The
// blob is the concatenation of every tensor as little-endian float64 in
// ParamStore order; the manifest records name, shape, byte offset and size
// for each one, plus the model structure and the stage it was written at.
inline constexpr int kCheckpointSchema = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "tensors.bin";

// "base", "fostering" or "assembled", from what the model carries.
std::string checkpoint_stage(const DenoiserModel& model);

struct Checkpoint {
  DenoiserModel model;
  std::string stage;
  nlohmann::json config;  // run config snapshot, opaque here
  Rng::State rng_state;
};

void save_checkpoint(const std::filesystem::path& dir,
                     const DenoiserModel& model, const nlohmann::json& config,
                     const Rng::State& rng_state);

// Throws ConfigError if the directory or files are missing or malformed, and
// ShapeError if a tensor's bytes do not match its manifest entry.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

nlohmann::json rng_state_to_json(const Rng::State& s);
Rng::State rng_state_from_json(const nlohmann::json& j);

}  // namespace tsm
