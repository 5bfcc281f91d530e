// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/param_store.hpp"

#include <algorithm>
#include <cmath>

#include "tsm/errors.hpp"

namespace tsm {

void ParamStore::add(const std::string& name, Matrix value, bool trainable) {
  if (entries_.contains(name))
    throw std::invalid_argument("ParamStore: duplicate tensor '" + name + "'");
  std::optional<Matrix> grad;
  if (trainable) grad.emplace(value.rows(), value.cols());
  entries_.emplace(name, Entry{std::move(value), trainable, std::move(grad)});
  order_.push_back(name);
}

bool ParamStore::contains(const std::string& name) const {
  return entries_.contains(name);
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw std::out_of_range("ParamStore: no tensor '" + name + "'");
  return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw std::out_of_range("ParamStore: no tensor '" + name + "'");
  return it->second;
}

const Matrix& ParamStore::value(const std::string& name) const {
  return entry(name).value;
}

Matrix& ParamStore::mutable_value(const std::string& name) {
  return entry(name).value;
}

bool ParamStore::trainable(const std::string& name) const {
  return entry(name).trainable;
}

void ParamStore::set_trainable(const std::string& name, bool trainable) {
  Entry& e = entry(name);
  e.trainable = trainable;
  if (trainable) {
    if (!e.grad) e.grad = Matrix(e.value.rows(), e.value.cols());
  } else {
    e.grad.reset();
  }
}

void ParamStore::freeze_all() {
  for (const auto& n : order_) set_trainable(n, false);
}

const Matrix* ParamStore::grad(const std::string& name) const {
  const Entry& e = entry(name);
  return e.grad ? &*e.grad : nullptr;
}

Matrix* ParamStore::mutable_grad(const std::string& name) {
  Entry& e = entry(name);
  return e.grad ? &*e.grad : nullptr;
}

void ParamStore::accumulate_grad(const std::string& name,
                                 const Matrix& contribution) {
  Entry& e = entry(name);
  if (!e.grad) return;
  if (!e.grad->same_shape(contribution))
    throw ShapeError("gradient for '" + name + "': " + e.grad->shape_str() +
                     " vs " + contribution.shape_str());
  *e.grad += contribution;
}

void ParamStore::zero_grads() {
  for (auto& [name, e] : entries_)
    if (e.grad) e.grad->fill(0.0);
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& n : order_)
    if (entries_.at(n).trainable) out.push_back(n);
  return out;
}

std::size_t ParamStore::trainable_count() const {
  std::size_t total = 0;
  for (const auto& n : order_) {
    const Entry& e = entries_.at(n);
    if (e.trainable) total += e.value.size();
  }
  return total;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t total = 0;
  for (const auto& n : order_) total += entries_.at(n).value.size();
  return total;
}

double loss_and_grads(const LossFn& loss_fn, ParamStore& params) {
  const double loss = loss_fn(params, true);
  if (!std::isfinite(loss))
    throw NumericalError("loss is not finite (" + std::to_string(loss) + ")");
  for (const auto& n : params.names()) {
    if (const Matrix* g = params.grad(n); g && !all_finite(*g))
      throw NumericalError("non-finite gradient for '" + n + "'");
  }
  return loss;
}

GradCheckResult finite_diff_check(const LossFn& loss_fn, ParamStore& params,
                                  double step, double tolerance) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step <= 0");
  params.zero_grads();
  loss_and_grads(loss_fn, params);

  GradCheckResult result;
  for (const auto& name : params.trainable_names()) {
    const Matrix analytic = *params.grad(name);
    auto values = params.mutable_value(name).data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      const double plus = loss_fn(params, false);
      values[i] = original - step;
      const double minus = loss_fn(params, false);
      values[i] = original;

      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic.data()[i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      ++result.scalars_checked;
      if (err > result.max_rel_error || !std::isfinite(err)) {
        result.max_rel_error = std::isfinite(err) ? err : HUGE_VAL;
        result.worst_tensor = name;
        result.worst_index = i;
      }
    }
  }
  result.passed = result.max_rel_error < tolerance;
  return result;
}

}  // namespace tsm
