// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "tsm/matrix.hpp"
#include "tsm/rng.hpp"
#include "tsm/schedule.hpp"

namespace tsm {

// Low-rank delta (alpha / rank)·B·A for a d×k host weight.
struct LoRAAdapter {
  Matrix A;  // rank × k
  Matrix B;  // d × rank
  std::size_t rank = 0;
  double alpha = 0.0;

  double scaling() const { return alpha / static_cast<double>(rank); }
};

// A ~ U(−1/√k, 1/√k), B = 0. Requires rank ≤ min(d, k) / 2.
LoRAAdapter make_lora_adapter(std::size_t d, std::size_t k, std::size_t rank,
                              double alpha, Rng& rng);
void check_lora_rank(std::size_t d, std::size_t k, std::size_t rank);

Matrix lora_delta(const LoRAAdapter& adapter);

// One adapter per interval per scale for a single host layer.
struct ExpertBank {
  ScaleSet scales;
  // adapters[j][i − 1] is the expert for interval i of scale scales[j].
  std::vector<std::vector<LoRAAdapter>> adapters;
  bool frozen = false;

  const LoRAAdapter& at(std::size_t scale_id, int interval) const;
  std::size_t adapter_count() const;
};

// Gate for the m − 1 context experts of one layer:
// g = F_weight·pool(z) + F_bias + E_table[t].
struct Router {
  Matrix F_weight;  // (m−1) × k
  Matrix F_bias;    // (m−1) × 1
  Matrix E_table;   // T × (m−1)

  std::size_t context_count() const { return F_weight.rows(); }
};

Router make_router(std::size_t k, int T, std::size_t context_count);

// z is k×l; pooling is the mean over the l token columns. Returns (m−1)×1.
Matrix router_gate(const Router& router, const Matrix& z, int t);

enum class ModeKind { base, fostering, assembled };

struct Mode {
  ModeKind kind = ModeKind::base;
  std::size_t scale = 0;  // position in the ScaleSet, fostering only

  static Mode base() { return {ModeKind::base, 0}; }
  static Mode fostering(std::size_t scale_id) {
    return {ModeKind::fostering, scale_id};
  }
  static Mode assembled() { return {ModeKind::assembled, 0}; }
  bool operator==(const Mode&) const = default;
};

std::string to_string(const Mode& mode);

// Snapshot of one host linear layer with its adapter apparatus.
struct AdaptedLinear {
  std::string name;
  Matrix W;     // d × k
  Matrix bias;  // d × 1
  std::optional<ExpertBank> bank;
  std::optional<Router> router;
  int T = 0;
  Mode mode;
};

// W + delta of the scale's expert for the interval containing t.
Matrix effective_weight_fostering(const AdaptedLinear& layer, int t,
                                  std::size_t scale_id);
// W + core delta + Σ_j g_j·context delta_j with g from router_gate(z, t).
Matrix effective_weight_assembled(const AdaptedLinear& layer, const Matrix& z,
                                  int t);

// Closed-form counts used for parameter accounting.
constexpr std::size_t adapter_param_count(std::size_t d, std::size_t k,
                                          std::size_t rank) {
  return rank * (d + k);
}
constexpr std::size_t router_param_count(std::size_t k, std::size_t T,
                                         std::size_t m) {
  return (m - 1) * (k + 1) + T * (m - 1);
}

}  // namespace tsm
