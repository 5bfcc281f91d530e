// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsm/adapters.hpp"
#include "tsm/autodiff.hpp"
#include "tsm/param_store.hpp"
#include "tsm/rng.hpp"
#include "tsm/schedule.hpp"

namespace tsm {

struct ModelSpec {
  std::size_t data_dim = 2;
  std::size_t hidden = 64;
  std::size_t depth = 3;  // hidden-to-hidden layers; these host adapters
  std::size_t time_dim = 32;
  std::size_t num_classes = 0;  // 0 disables the label embedding
  bool adapt_io = false;        // also adapt the input/output projections

  bool operator==(const ModelSpec&) const = default;
};

struct AdapterSpec {
  ScaleSet scales;
  std::size_t rank = 4;
  double alpha = 4.0;

  bool operator==(const AdapterSpec&) const = default;
};

// Per-layer record of one forward pass.
struct LayerTrace {
  std::string layer;
  ad::Var input;                // z_t, k × batch
  std::optional<ad::Var> gates;  // (m−1) × batch, assembled mode only
  std::vector<int> expert;      // active interval per column; empty in base mode
};

struct ForwardResult {
  ad::Var output;  // predicted noise, data_dim × batch
  ad::Var middle_hidden;
  std::vector<LayerTrace> layers;
};

// Small MLP noise predictor ε(x_t, t, c):
//
//   h0 = silu(in(x) + time(sinusoid(t)) [+ label_embedding(c)])
//   h_l = silu(hidden_l(h_{l−1}))   l = 1..depth
//   ε̂ = out(h_depth)
//
// The hidden layers (and optionally in/out) host an expert bank and a router.
// Parameters live in a ParamStore under dotted names ("h1.W",
// "h1.lora.n8.i3.A", "h1.router.E_table", ...).
class DenoiserModel {
 public:
  DenoiserModel(ModelSpec spec, int T, Rng& rng);
  // Rebuilds a model around stored tensors; validates names and shapes.
  DenoiserModel(ModelSpec spec, int T, std::optional<AdapterSpec> adapters,
                bool routers, ParamStore params);

  const ModelSpec& spec() const { return spec_; }
  int T() const { return T_; }
  const std::optional<AdapterSpec>& adapter_spec() const { return adapters_; }
  bool has_adapters() const { return adapters_.has_value(); }
  bool has_routers() const { return routers_; }

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Zero-B experts for every interval of every scale on each adapted layer.
  void attach_adapters(const AdapterSpec& spec, Rng& rng);
  // Zero-initialised routers; needs adapters with at least two scales.
  void attach_routers();

  std::vector<std::string> adapted_layers() const;
  std::vector<std::string> linear_layers() const;
  bool is_adapted(const std::string& layer) const;

  std::vector<std::string> base_param_names() const;
  // All adapters, or only the given scale (and interval if nonzero).
  std::vector<std::string> adapter_param_names(
      std::optional<std::size_t> scale_id = std::nullopt, int interval = 0) const;
  std::vector<std::string> router_param_names() const;

  static std::string lora_name(const std::string& layer, int n, int interval,
                               const char* which);
  static std::string router_name(const std::string& layer, const char* which);

  // Throws if the model lacks what `mode` needs.
  void check_mode(const Mode& mode) const;

  // x_t is data_dim × batch; t (and labels, if any) one entry per column.
  ForwardResult forward(ad::Tape& tape, const Matrix& x_t,
                        std::span<const int> t, std::span<const int> labels,
                        const Mode& mode) const;
  Matrix predict(const Matrix& x_t, std::span<const int> t,
                 std::span<const int> labels, const Mode& mode) const;

  // One host layer applied two-path: W·x + b + Σ (gated) scaling·B·(A·x).
  ad::Var apply_layer(ad::Tape& tape, const std::string& layer, ad::Var x,
                      std::span<const int> t, const Mode& mode,
                      LayerTrace* trace) const;

  // Single-sample forward through merged effective weights, no tape.
  Matrix predict_merged(const Matrix& x_col, int t, std::optional<int> label,
                        const Mode& mode) const;

  AdaptedLinear layer(const std::string& name, const Mode& mode) const;

  Matrix time_embedding(std::span<const int> t) const;

 private:
  void init_base(Rng& rng);
  std::size_t in_dim(const std::string& layer) const;
  std::size_t out_dim(const std::string& layer) const;

  ModelSpec spec_;
  int T_;
  std::optional<AdapterSpec> adapters_;
  bool routers_ = false;
  ParamStore params_;
};

}  // namespace tsm
