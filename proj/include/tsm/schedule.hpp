// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tsm/matrix.hpp"

namespace tsm {

enum class ScheduleKind { linear, cosine };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& s);

// Cumulative signal retention ᾱ_t for t = 1..T (1-based throughout).
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  int T() const { return static_cast<int>(alpha_bar_.size()); }
  ScheduleKind kind() const { return kind_; }

  double alpha_bar(int t) const;  // 1 ≤ t ≤ T; alpha_bar(0) = 1 by convention
  double beta(int t) const;       // 1 − ᾱ_t / ᾱ_{t−1}
  double alpha(int t) const { return 1.0 - beta(t); }

  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

 private:
  friend NoiseSchedule make_schedule(int, ScheduleKind, double, double);
  ScheduleKind kind_ = ScheduleKind::linear;
  std::vector<double> alpha_bar_;
  std::vector<double> beta_;
};

// Linear: β_t evenly spaced over [beta_min, beta_max], ᾱ_t = Π(1−β_s).
// Cosine: squared-cosine profile with offset 0.008, β clipped at 0.999
// (beta_min/beta_max are ignored).
NoiseSchedule make_schedule(int T, ScheduleKind kind, double beta_min = 1e-4,
                            double beta_max = 2e-2);

// x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε, elementwise. Any matrix shape.
Matrix forward_diffuse(const Matrix& x0, int t, const Matrix& eps,
                       const NoiseSchedule& sched);

// ⌈t·n/T⌉ in exact integer arithmetic; result in [1, n].
int interval_index(int t, int T, int n);

struct IntervalBounds {
  int lo = 0;
  int hi = 0;
  int size() const { return hi - lo + 1; }
};

// lo = ⌊(i−1)·T/n⌋ + 1, hi = ⌊i·T/n⌋. Every t in [lo, hi] has
// interval_index(t, T, n) == i.
IntervalBounds interval_bounds(int i, int T, int n);

// Uniform partition of [1, T] into n intervals.
class IntervalPartition {
 public:
  IntervalPartition(int T, int n);
  int T() const { return T_; }
  int n() const { return n_; }
  int index(int t) const { return interval_index(t, T_, n_); }
  IntervalBounds bounds(int i) const { return interval_bounds(i, T_, n_); }

 private:
  int T_;
  int n_;
};

// Strictly decreasing interval counts n_1 > … > n_m ≥ 1. The first entry is
// the finest partition and hosts the core expert.
class ScaleSet {
 public:
  ScaleSet() = default;
  explicit ScaleSet(std::vector<int> scales);

  std::size_t size() const { return scales_.size(); }
  int operator[](std::size_t j) const { return scales_.at(j); }
  const std::vector<int>& values() const { return scales_; }
  int total_intervals() const;  // Σ n_j
  bool operator==(const ScaleSet&) const = default;

 private:
  std::vector<int> scales_;
};

// Element j is interval_index(t, T, scales[j]).
std::vector<int> multi_scale_indices(int t, int T, const ScaleSet& scales);

}  // namespace tsm
