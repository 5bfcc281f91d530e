// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/adamw.hpp"

#include <cmath>
#include <stdexcept>

namespace tsm {

AdamW::AdamW(AdamWConfig config) : config_(config) {
  if (!(config_.lr >= 0.0)) throw std::invalid_argument("AdamW: lr < 0");
  if (!(config_.beta1 > 0.0 && config_.beta1 < 1.0 && config_.beta2 > 0.0 &&
        config_.beta2 < 1.0))
    throw std::invalid_argument("AdamW: betas must lie in (0, 1)");
}

void AdamW::step(ParamStore& params) {
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double decay = 1.0 - config_.lr * config_.weight_decay;

  for (const auto& name : params.names()) {
    const Matrix* g = params.grad(name);
    if (!g) continue;
    Matrix& w = params.mutable_value(name);
    auto [it, fresh] = moments_.try_emplace(name);
    if (fresh) it->second = {Matrix(w.rows(), w.cols()), Matrix(w.rows(), w.cols())};
    auto ws = w.data();
    auto gs = g->data();
    auto ms = it->second.m.data();
    auto vs = it->second.v.data();
    for (std::size_t i = 0; i < ws.size(); ++i) {
      ms[i] = b1 * ms[i] + (1.0 - b1) * gs[i];
      vs[i] = b2 * vs[i] + (1.0 - b2) * gs[i] * gs[i];
      const double mhat = ms[i] / corr1;
      const double vhat = vs[i] / corr2;
      ws[i] = ws[i] * decay - config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace tsm
