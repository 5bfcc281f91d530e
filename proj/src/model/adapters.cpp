// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/adapters.hpp"

#include <algorithm>
#include <cmath>

#include "tsm/errors.hpp"

namespace tsm {

void check_lora_rank(std::size_t d, std::size_t k, std::size_t rank) {
  if (rank == 0 || 2 * rank > std::min(d, k))
    throw std::invalid_argument("LoRA rank " + std::to_string(rank) +
                                " exceeds min(d, k)/2 for a " +
                                std::to_string(d) + "x" + std::to_string(k) +
                                " host");
}

LoRAAdapter make_lora_adapter(std::size_t d, std::size_t k, std::size_t rank,
                              double alpha, Rng& rng) {
  check_lora_rank(d, k, rank);
  LoRAAdapter a;
  a.rank = rank;
  a.alpha = alpha;
  a.A = Matrix(rank, k);
  const double bound = 1.0 / std::sqrt(static_cast<double>(k));
  for (double& v : a.A.data()) v = (2.0 * rng.uniform() - 1.0) * bound;
  a.B = Matrix(d, rank);
  return a;
}

Matrix lora_delta(const LoRAAdapter& adapter) {
  if (adapter.A.rows() != adapter.rank || adapter.B.cols() != adapter.rank)
    throw ShapeError("lora_delta: A " + adapter.A.shape_str() + ", B " +
                     adapter.B.shape_str() + ", rank " +
                     std::to_string(adapter.rank));
  return adapter.scaling() * matmul(adapter.B, adapter.A);
}

const LoRAAdapter& ExpertBank::at(std::size_t scale_id, int interval) const {
  if (scale_id >= adapters.size())
    throw RangeError("ExpertBank: scale id out of range");
  const auto& row = adapters[scale_id];
  if (interval < 1 || static_cast<std::size_t>(interval) > row.size())
    throw RangeError("ExpertBank: interval out of range");
  return row[static_cast<std::size_t>(interval - 1)];
}

std::size_t ExpertBank::adapter_count() const {
  std::size_t n = 0;
  for (const auto& row : adapters) n += row.size();
  return n;
}

Router make_router(std::size_t k, int T, std::size_t context_count) {
  if (context_count == 0)
    throw std::invalid_argument("make_router: no context experts");
  return Router{Matrix(context_count, k), Matrix(context_count, 1),
                Matrix(static_cast<std::size_t>(T), context_count)};
}

Matrix router_gate(const Router& router, const Matrix& z, int t) {
  if (z.rows() != router.F_weight.cols() || z.cols() == 0)
    throw ShapeError("router_gate: z " + z.shape_str() + " for F " +
                     router.F_weight.shape_str());
  if (t < 1 || static_cast<std::size_t>(t) > router.E_table.rows())
    throw RangeError("router_gate: timestep " + std::to_string(t) +
                     " outside [1, " + std::to_string(router.E_table.rows()) +
                     "]");
  Matrix pooled(z.rows(), 1);
  if (z.cols() == 1) {
    pooled = z;
  } else {
    for (std::size_t r = 0; r < z.rows(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < z.cols(); ++c) acc += z(r, c);
      pooled(r, 0) = acc / static_cast<double>(z.cols());
    }
  }
  Matrix g = matmul(router.F_weight, pooled);
  const std::size_t row = static_cast<std::size_t>(t - 1);
  for (std::size_t j = 0; j < g.rows(); ++j)
    g(j, 0) += router.F_bias(j, 0) + router.E_table(row, j);
  return g;
}

std::string to_string(const Mode& mode) {
  switch (mode.kind) {
    case ModeKind::base:
      return "base";
    case ModeKind::fostering:
      return "fostering(" + std::to_string(mode.scale) + ")";
    case ModeKind::assembled:
      return "assembled";
  }
  return "?";
}

Matrix effective_weight_fostering(const AdaptedLinear& layer, int t,
                                  std::size_t scale_id) {
  if (!layer.bank)
    throw std::invalid_argument("layer '" + layer.name + "' has no expert bank");
  const ExpertBank& bank = *layer.bank;
  if (scale_id >= bank.scales.size())
    throw RangeError("effective_weight_fostering: scale id out of range");
  const int i = interval_index(t, layer.T, bank.scales[scale_id]);
  return layer.W + lora_delta(bank.at(scale_id, i));
}

Matrix effective_weight_assembled(const AdaptedLinear& layer, const Matrix& z,
                                  int t) {
  if (!layer.bank)
    throw std::invalid_argument("layer '" + layer.name + "' has no expert bank");
  const ExpertBank& bank = *layer.bank;
  const std::vector<int> idx = multi_scale_indices(t, layer.T, bank.scales);
  Matrix w = layer.W + lora_delta(bank.at(0, idx[0]));
  if (bank.scales.size() == 1) return w;
  if (!layer.router)
    throw std::invalid_argument("layer '" + layer.name + "' has no router");
  if (layer.router->context_count() != bank.scales.size() - 1)
    throw ShapeError("router gates " +
                     std::to_string(layer.router->context_count()) +
                     " context experts but bank has " +
                     std::to_string(bank.scales.size() - 1));
  const Matrix g = router_gate(*layer.router, z, t);
  for (std::size_t j = 1; j < bank.scales.size(); ++j)
    w += g(j - 1, 0) * lora_delta(bank.at(j, idx[j]));
  return w;
}

}  // namespace tsm
