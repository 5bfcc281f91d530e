// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tsm/errors.hpp"

namespace tsm {

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::linear ? "linear" : "cosine";
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  throw ConfigError("unknown schedule kind '" + s + "'");
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  if (t < 0 || t > T())
    throw RangeError("timestep " + std::to_string(t) + " outside [1, " +
                     std::to_string(T()) + "]");
  return alpha_bar_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > T())
    throw RangeError("timestep " + std::to_string(t) + " outside [1, " +
                     std::to_string(T()) + "]");
  return beta_[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule make_schedule(int T, ScheduleKind kind, double beta_min,
                            double beta_max) {
  if (T < 2) throw std::invalid_argument("make_schedule: T must be >= 2");
  NoiseSchedule s;
  s.kind_ = kind;
  s.beta_.resize(static_cast<std::size_t>(T));
  if (kind == ScheduleKind::linear) {
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
      throw std::invalid_argument(
          "make_schedule: need 0 < beta_min <= beta_max < 1");
    for (int t = 1; t <= T; ++t)
      s.beta_[static_cast<std::size_t>(t - 1)] =
          beta_min + (beta_max - beta_min) * (t - 1) / (T - 1);
  } else {
    constexpr double offset = 0.008;
    auto f = [&](int t) {
      const double c = std::cos((static_cast<double>(t) / T + offset) /
                                (1.0 + offset) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int t = 1; t <= T; ++t)
      s.beta_[static_cast<std::size_t>(t - 1)] =
          std::min(1.0 - f(t) / f(t - 1), 0.999);
  }
  s.alpha_bar_.resize(s.beta_.size());
  double acc = 1.0;
  for (std::size_t i = 0; i < s.beta_.size(); ++i) {
    acc *= 1.0 - s.beta_[i];
    s.alpha_bar_[i] = acc;
  }
  return s;
}

Matrix forward_diffuse(const Matrix& x0, int t, const Matrix& eps,
                       const NoiseSchedule& sched) {
  if (!x0.same_shape(eps))
    throw ShapeError("forward_diffuse: x0 " + x0.shape_str() + " vs eps " +
                     eps.shape_str());
  const double ab = sched.alpha_bar(t);
  if (t == 0) throw RangeError("forward_diffuse: timestep 0 is not valid");
  const double signal = std::sqrt(ab);
  const double noise = std::sqrt(1.0 - ab);
  Matrix out(x0.rows(), x0.cols());
  auto o = out.data();
  auto a = x0.data();
  auto e = eps.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = signal * a[i] + noise * e[i];
  return out;
}

int interval_index(int t, int T, int n) {
  if (T < 1 || n < 1 || n > T)
    throw RangeError("interval_index: need 1 <= n <= T (n=" +
                     std::to_string(n) + ", T=" + std::to_string(T) + ")");
  if (t < 1 || t > T)
    throw RangeError("interval_index: timestep " + std::to_string(t) +
                     " outside [1, " + std::to_string(T) + "]");
  const long long num = static_cast<long long>(t) * n;
  return static_cast<int>((num + T - 1) / T);
}

IntervalBounds interval_bounds(int i, int T, int n) {
  if (T < 1 || n < 1 || n > T)
    throw RangeError("interval_bounds: need 1 <= n <= T");
  if (i < 1 || i > n)
    throw RangeError("interval_bounds: interval " + std::to_string(i) +
                     " outside [1, " + std::to_string(n) + "]");
  const long long lo = static_cast<long long>(i - 1) * T / n + 1;
  const long long hi = static_cast<long long>(i) * T / n;
  return {static_cast<int>(lo), static_cast<int>(hi)};
}

IntervalPartition::IntervalPartition(int T, int n) : T_(T), n_(n) {
  if (T < 1 || n < 1 || n > T)
    throw RangeError("IntervalPartition: need 1 <= n <= T");
}

ScaleSet::ScaleSet(std::vector<int> scales) : scales_(std::move(scales)) {
  if (scales_.empty()) throw std::invalid_argument("ScaleSet: empty");
  for (std::size_t j = 0; j < scales_.size(); ++j) {
    if (scales_[j] < 1) throw std::invalid_argument("ScaleSet: scale < 1");
    if (j > 0 && scales_[j] >= scales_[j - 1])
      throw std::invalid_argument(
          "ScaleSet: scales must be strictly decreasing without duplicates");
  }
}

int ScaleSet::total_intervals() const {
  int total = 0;
  for (int n : scales_) total += n;
  return total;
}

std::vector<int> multi_scale_indices(int t, int T, const ScaleSet& scales) {
  std::vector<int> out;
  out.reserve(scales.size());
  for (int n : scales.values()) out.push_back(interval_index(t, T, n));
  return out;
}

}  // namespace tsm
