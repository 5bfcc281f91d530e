// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>

#include "tsm/matrix.hpp"
#include "tsm/param_store.hpp"

namespace tsm {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

// Adam with bias correction and decoupled weight decay:
//   w ← w·(1 − lr·λ) − lr·m̂ / (√v̂ + ε)
// Only trainable tensors are visited; moments are created lazily.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config);

  void step(ParamStore& params);
  std::size_t step_count() const { return steps_; }
  const AdamWConfig& config() const { return config_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  AdamWConfig config_;
  std::size_t steps_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace tsm
