// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/eval.hpp"

#include <algorithm>
#include <cmath>

#include "tsm/autodiff.hpp"
#include "tsm/errors.hpp"
#include "tsm/kernels.hpp"

namespace tsm {

namespace {

constexpr std::size_t kEvalChunk = 512;

// Per-sample squared error of the model on (x0, t, ε) triples drawn by
// `draw_t`, evaluated in chunks. Appends to `out`.
template <typename DrawT>
void sample_errors(const DenoiserModel& model, const NoiseSchedule& sched,
                   const HeldOut& data, const Mode& mode, std::size_t count,
                   Rng& rng, DrawT draw_t, std::vector<double>& out) {
  const std::size_t dim = data.x.rows();
  const bool use_labels = model.spec().num_classes > 0 && !data.labels.empty();
  std::size_t done = 0;
  while (done < count) {
    const std::size_t n = std::min(kEvalChunk, count - done);
    Matrix x_t(dim, n);
    Matrix eps(dim, n);
    std::vector<int> ts(n);
    std::vector<int> labels;
    if (use_labels) labels.resize(n);
    for (std::size_t c = 0; c < n; ++c) {
      const auto src = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(data.x.cols()) - 1));
      ts[c] = draw_t(rng);
      if (use_labels) labels[c] = data.labels[src];
      const double s = std::sqrt(sched.alpha_bar(ts[c]));
      const double k = std::sqrt(1.0 - sched.alpha_bar(ts[c]));
      for (std::size_t r = 0; r < dim; ++r) {
        eps(r, c) = rng.normal();
        x_t(r, c) = s * data.x(r, src) + k * eps(r, c);
      }
    }
    const Matrix pred = model.predict(x_t, ts, labels, mode);
    for (std::size_t c = 0; c < n; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < dim; ++r) {
        const double d = pred(r, c) - eps(r, c);
        acc += d * d;
      }
      out.push_back(acc);
    }
    done += n;
  }
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

HeldOut draw_held_out(const Dataset& data, std::size_t count,
                      std::uint64_t seed) {
  HeldOut h;
  Rng rng(seed, streams::kHeldOut);
  data.sample(rng, count, h.x, h.labels);
  return h;
}

std::vector<double> per_interval_loss(const DenoiserModel& model,
                                      const NoiseSchedule& sched,
                                      const HeldOut& data,
                                      const IntervalPartition& partition,
                                      const Mode& mode,
                                      std::size_t samples_per_interval,
                                      std::uint64_t seed) {
  if (data.x.cols() == 0) throw std::invalid_argument("per_interval_loss: empty dataset");
  if (samples_per_interval == 0)
    throw std::invalid_argument("per_interval_loss: zero samples per interval");
  if (partition.T() != sched.T())
    throw ShapeError("per_interval_loss: partition T does not match schedule");
  std::vector<double> losses;
  for (int i = 1; i <= partition.n(); ++i) {
    Rng rng(seed, (streams::kValidation << 32) | static_cast<std::uint64_t>(i));
    std::vector<double> errs;
    sample_errors(model, sched, data, mode, samples_per_interval, rng,
                  [&](Rng& r) { return sample_timestep_in_interval(i, partition, r); },
                  errs);
    losses.push_back(mean_of(errs));
  }
  return losses;
}

LossEstimate global_loss(const DenoiserModel& model, const NoiseSchedule& sched,
                         const HeldOut& data, const Mode& mode,
                         std::size_t samples, std::uint64_t seed) {
  if (data.x.cols() == 0) throw std::invalid_argument("global_loss: empty dataset");
  if (samples < 2) throw std::invalid_argument("global_loss: need >= 2 samples");
  // Same stream as interval 1, so a one-interval partition reproduces this
  // estimate exactly.
  Rng rng(seed, (streams::kValidation << 32) | 1u);
  const int T = sched.T();
  std::vector<double> errs;
  sample_errors(model, sched, data, mode, samples, rng,
                [T](Rng& r) { return static_cast<int>(r.uniform_int(1, T)); }, errs);
  LossEstimate est;
  est.mean = mean_of(errs);
  double ss = 0.0;
  for (double e : errs) ss += (e - est.mean) * (e - est.mean);
  const double var = ss / static_cast<double>(errs.size() - 1);
  est.std_error = std::sqrt(var / static_cast<double>(errs.size()));
  return est;
}

double weighted_interval_mean(const std::vector<double>& losses,
                              const IntervalPartition& partition) {
  if (losses.size() != static_cast<std::size_t>(partition.n()))
    throw ShapeError("weighted_interval_mean: one entry per interval expected");
  double acc = 0.0;
  for (int i = 1; i <= partition.n(); ++i)
    acc += losses[static_cast<std::size_t>(i - 1)] * partition.bounds(i).size();
  return acc / partition.T();
}

double energy_distance(const Matrix& a, const Matrix& b) {
  if (a.cols() == 0 || b.cols() == 0)
    throw std::invalid_argument("energy_distance: empty point set");
  if (a.rows() != b.rows())
    throw ShapeError("energy_distance: dimension " + std::to_string(a.rows()) +
                     " vs " + std::to_string(b.rows()));
  // Kernels take one point per row.
  const Matrix pa = transpose(a);
  const Matrix pb = transpose(b);
  const std::size_t na = a.cols();
  const std::size_t nb = b.cols();
  const std::size_t dim = a.rows();
  const double xy =
      kernels::parallel::pairwise_distance_sum(pa.data(), na, pb.data(), nb, dim) /
      static_cast<double>(na * nb);
  const double xx =
      kernels::parallel::pairwise_distance_sum(pa.data(), na, pa.data(), na, dim) /
      static_cast<double>(na * na);
  const double yy =
      kernels::parallel::pairwise_distance_sum(pb.data(), nb, pb.data(), nb, dim) /
      static_cast<double>(nb * nb);
  return std::max(0.0, 2.0 * xy - xx - yy);
}

std::vector<DriftPoint> hidden_state_drift(const DenoiserModel& model,
                                           const Matrix& probe,
                                           const NoiseSchedule& sched,
                                           const Mode& mode, int stride,
                                           std::uint64_t seed) {
  if (stride < 1) throw std::invalid_argument("hidden_state_drift: stride < 1");
  if (probe.cols() == 0) throw std::invalid_argument("hidden_state_drift: empty probe");
  Rng rng(seed, streams::kDrift);
  Matrix eps(probe.rows(), probe.cols());
  for (double& v : eps.data()) v = rng.normal();

  std::vector<int> ts;
  for (int t = 1; t <= sched.T(); t += stride) ts.push_back(t);
  if (ts.back() != sched.T()) ts.push_back(sched.T());

  std::vector<DriftPoint> profile;
  for (int t : ts) {
    const Matrix x_t = forward_diffuse(probe, t, eps, sched);
    const std::vector<int> tcol(probe.cols(), t);
    ad::Tape tape(false);
    const ForwardResult fr = model.forward(tape, x_t, tcol, {}, mode);
    const Matrix& h = tape.value(fr.middle_hidden);
    double acc = 0.0;
    for (std::size_t c = 0; c < h.cols(); ++c) {
      double sq = 0.0;
      for (std::size_t r = 0; r < h.rows(); ++r) sq += h(r, c) * h(r, c);
      acc += std::sqrt(sq);
    }
    profile.push_back({t, acc / static_cast<double>(h.cols())});
  }
  return profile;
}

double coefficient_of_variation(const std::vector<DriftPoint>& profile) {
  if (profile.empty()) return 0.0;
  double mean = 0.0;
  for (const auto& p : profile) mean += p.mean_norm;
  mean /= static_cast<double>(profile.size());
  double var = 0.0;
  for (const auto& p : profile) var += (p.mean_norm - mean) * (p.mean_norm - mean);
  var /= static_cast<double>(profile.size());
  if (var == 0.0) return 0.0;
  return std::sqrt(var) / std::abs(mean);
}

const CompareRow& CompareTable::row(const std::string& name) const {
  for (const auto& r : rows)
    if (r.name == name) return r;
  throw std::out_of_range("compare table has no row '" + name + "'");
}

CompareTable compare_param_matched(const DenoiserModel& base,
                                   const NoiseSchedule& sched,
                                   const Dataset& data,
                                   const CompareConfig& cfg) {
  if (base.has_adapters())
    throw StageMismatch("compare_param_matched expects a base-stage model");
  const int n = cfg.n;
  const IntervalPartition partition(sched.T(), n);
  const HeldOut held = draw_held_out(data, cfg.held_out, cfg.seed);
  Matrix reference;
  if (cfg.sample_count > 0) {
    std::vector<int> labels;
    Rng ref_rng(cfg.seed, streams::kReference);
    data.sample(ref_rng, cfg.sample_count, reference, labels);
  }

  auto evaluate = [&](const std::string& name, const DenoiserModel& model,
                      const Mode& mode, std::size_t trainable,
                      std::size_t adapter_params) {
    CompareRow row;
    row.name = name;
    row.interval_loss = per_interval_loss(model, sched, held, partition, mode,
                                          cfg.samples_per_interval, cfg.seed);
    row.mean_loss = weighted_interval_mean(row.interval_loss, partition);
    if (cfg.sample_count > 0) {
      SamplerConfig sc;
      sc.mode = mode;
      sc.seed = cfg.seed;
      sc.batch = cfg.sample_count;
      sc.variance = cfg.variance;
      row.energy = energy_distance(sample(model, sched, sc).samples, reference);
    }
    row.trainable_params = trainable;
    row.adapter_params = adapter_params;
    return row;
  };

  // r·(d+k) summed over host layers: the parameters one expert slot costs.
  auto slot_params = [&](std::size_t rank) {
    std::size_t total = 0;
    for (const auto& l : base.adapted_layers()) {
      const Matrix& w = base.params().value(l + ".W");
      total += adapter_param_count(w.rows(), w.cols(), rank);
    }
    return total;
  };
  CompareTable table;
  table.rows.push_back(evaluate("base", base, Mode::base(), 0, 0));

  // Vanilla LoRA: one rank n·r adapter, trained n times as many steps.
  {
    DenoiserModel vanilla = base;
    TrainConfig tc = cfg.foster;
    tc.stage = Stage::fostering;
    tc.adapters = AdapterSpec{ScaleSet({1}), cfg.rank * static_cast<std::size_t>(n),
                              static_cast<double>(cfg.rank) * n};
    tc.steps = cfg.foster.steps * static_cast<std::size_t>(n);
    tc.seed = cfg.seed;
    tc.val_samples_per_interval = 0;
    const TrainReport rep = train_fostering(vanilla, sched, data, tc);
    table.rows.push_back(evaluate(
        "vanilla", vanilla, Mode::fostering(0), rep.trainable_params,
        slot_params(tc.adapters->rank)));
  }

  // Expert bank (n, 1): the n-scale alone is the 1-stage model, the routed
  // mixture of both scales is the 2-stage model.
  DenoiserModel tsm = base;
  TrainConfig tc = cfg.foster;
  tc.stage = Stage::fostering;
  tc.adapters = AdapterSpec{n > 1 ? ScaleSet({n, 1}) : ScaleSet({1}), cfg.rank,
                            static_cast<double>(cfg.rank)};
  tc.seed = cfg.seed;
  tc.val_samples_per_interval = 0;
  train_fostering(tsm, sched, data, tc);
  const std::size_t core_params =
      static_cast<std::size_t>(n) * slot_params(cfg.rank);
  table.rows.push_back(evaluate("tsm-1stage", tsm, Mode::fostering(0),
                                core_params, core_params));
  if (n > 1) {
    TrainConfig ac = cfg.assemble;
    ac.stage = Stage::assembling;
    ac.seed = cfg.seed;
    ac.val_samples_per_interval = 0;
    const TrainReport assemble = train_assembling(tsm, sched, data, ac);
    table.rows.push_back(evaluate("tsm-2stage", tsm, Mode::assembled(),
                                  assemble.trainable_params,
                                  static_cast<std::size_t>(n + 1) *
                                      slot_params(cfg.rank)));
  }
  return table;
}

}  // namespace tsm
