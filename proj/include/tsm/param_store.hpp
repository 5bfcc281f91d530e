// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsm/matrix.hpp"

namespace tsm {

// Named tensors with a trainable flag. Only trainable tensors own a gradient
// buffer; gradient writes aimed at frozen tensors are dropped. Gradients
// accumulate until zero_grads() is called.
//
// Iteration order is insertion order, which fixes checkpoint layout and
// reduction order.
class ParamStore {
 public:
  void add(const std::string& name, Matrix value, bool trainable);
  bool contains(const std::string& name) const;

  const Matrix& value(const std::string& name) const;
  Matrix& mutable_value(const std::string& name);

  bool trainable(const std::string& name) const;
  // Freezing discards the gradient buffer; unfreezing allocates a zero one.
  void set_trainable(const std::string& name, bool trainable);
  void freeze_all();

  // nullptr for frozen tensors.
  const Matrix* grad(const std::string& name) const;
  Matrix* mutable_grad(const std::string& name);
  void accumulate_grad(const std::string& name, const Matrix& contribution);
  void zero_grads();

  const std::vector<std::string>& names() const { return order_; }
  std::vector<std::string> trainable_names() const;
  // Total scalar count across trainable tensors.
  std::size_t trainable_count() const;
  std::size_t scalar_count() const;

 private:
  struct Entry {
    Matrix value;
    bool trainable = false;
    std::optional<Matrix> grad;
  };
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;

  std::vector<std::string> order_;
  std::unordered_map<std::string, Entry> entries_;
};

// Evaluates a scalar loss at the store's current values. With `backprop` set
// it must also accumulate ∂loss/∂θ into the store for every trainable tensor.
using LossFn = std::function<double(ParamStore&, bool backprop)>;

// Runs `loss_fn` with backprop enabled. Gradients add to whatever the buffers
// already hold. Throws NumericalError on a non-finite loss or gradient.
double loss_and_grads(const LossFn& loss_fn, ParamStore& params);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t scalars_checked = 0;
  bool passed = true;  // max_rel_error < tolerance
};

// Central-difference check of every trainable scalar against the analytic
// gradient. Error per scalar is |analytic − numeric| / max(1, |numeric|).
// Parameter values are restored exactly; grad buffers end holding the
// analytic gradient.
GradCheckResult finite_diff_check(const LossFn& loss_fn, ParamStore& params,
                                  double step, double tolerance);

}  // namespace tsm
