// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/sampling.hpp"

#include <cmath>
#include <optional>

#include "tsm/autodiff.hpp"
#include "tsm/errors.hpp"
#include "tsm/training.hpp"

namespace tsm {

std::string to_string(VarianceKind kind) {
  return kind == VarianceKind::posterior ? "posterior" : "beta";
}

VarianceKind variance_kind_from_string(const std::string& s) {
  if (s == "posterior") return VarianceKind::posterior;
  if (s == "beta") return VarianceKind::beta;
  throw ConfigError("unknown variance kind '" + s + "'");
}

Matrix ancestral_update(const Matrix& x_t, const Matrix& eps_hat, int t,
                        const NoiseSchedule& sched, Rng& rng,
                        VarianceKind variance) {
  if (t < 1 || t > sched.T())
    throw RangeError("ancestral step: timestep " + std::to_string(t) +
                     " outside [1, " + std::to_string(sched.T()) + "]");
  if (!x_t.same_shape(eps_hat))
    throw ShapeError("ancestral step: x_t " + x_t.shape_str() + " vs eps " +
                     eps_hat.shape_str());
  const double beta = sched.beta(t);
  const double alpha = 1.0 - beta;
  const double ab = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t - 1);
  const double eps_coef = beta / std::sqrt(1.0 - ab);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  double sigma = 0.0;
  if (t > 1) {
    sigma = variance == VarianceKind::posterior
                ? std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab))
                : std::sqrt(beta);
  }
  Matrix out(x_t.rows(), x_t.cols());
  auto o = out.data();
  auto x = x_t.data();
  auto e = eps_hat.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = inv_sqrt_alpha * (x[i] - eps_coef * e[i]);
    if (t > 1) o[i] += sigma * rng.normal();
  }
  return out;
}

namespace {

std::vector<int> label_column(const SamplerConfig& cfg, std::size_t batch) {
  if (!cfg.label) return {};
  return std::vector<int>(batch, *cfg.label);
}

}  // namespace

Matrix ancestral_step(const DenoiserModel& model, const Matrix& x_t, int t,
                      const NoiseSchedule& sched, Rng& rng, const Mode& mode,
                      VarianceKind variance, std::optional<int> label) {
  const std::vector<int> ts(x_t.cols(), t);
  std::vector<int> labels;
  if (label) labels.assign(x_t.cols(), *label);
  const Matrix eps_hat = model.predict(x_t, ts, labels, mode);
  return ancestral_update(x_t, eps_hat, t, sched, rng, variance);
}

SampleResult sample(const DenoiserModel& model, const NoiseSchedule& sched,
                    const SamplerConfig& cfg) {
  const int T = sched.T();
  if (T != model.T())
    throw ShapeError("sampler: schedule T does not match model T");
  if (cfg.steps != 0 && cfg.steps != static_cast<std::size_t>(T))
    throw ConfigError("sampler: only full-length chains (steps = T) are supported");
  if (cfg.batch == 0) throw ConfigError("sampler: batch must be positive");
  model.check_mode(cfg.mode);

  Rng rng(cfg.seed, streams::kSampling);
  const std::size_t dim = model.spec().data_dim;
  Matrix x(dim, cfg.batch);
  for (double& v : x.data()) v = rng.normal();

  const std::vector<int> labels = label_column(cfg, cfg.batch);
  SampleResult result;
  const bool tracks_expert = cfg.mode.kind != ModeKind::base;
  if (tracks_expert) result.expert_by_t.assign(static_cast<std::size_t>(T), 0);

  for (int t = T; t >= 1; --t) {
    const std::vector<int> ts(cfg.batch, t);
    ad::Tape tape(false);
    std::optional<ForwardResult> maybe;
    try {
      maybe.emplace(model.forward(tape, x, ts, labels, cfg.mode));
    } catch (const NumericalError& e) {
      throw NumericalError("sampler: step t=" + std::to_string(t) + ": " + e.what());
    }
    const ForwardResult& fr = *maybe;

    if (tracks_expert) {
      for (const auto& lt : fr.layers) {
        if (lt.expert.empty()) continue;
        const int active = lt.expert.front();
        result.expert_by_t[static_cast<std::size_t>(t - 1)] = active;
        if (t < T) {
          const int prev = result.expert_by_t[static_cast<std::size_t>(t)];
          if (prev != active) result.switches.push_back({t, prev, active});
        }
        break;
      }
    }
    for (const auto& lt : fr.layers) {
      if (!lt.gates) continue;
      const Matrix& g = tape.value(*lt.gates);
      GateRecord rec{t, lt.layer, std::vector<double>(g.rows(), 0.0)};
      for (std::size_t j = 0; j < g.rows(); ++j) {
        double acc = 0.0;
        for (std::size_t b = 0; b < g.cols(); ++b) acc += g(j, b);
        rec.mean_gate[j] = acc / static_cast<double>(g.cols());
      }
      result.gates.push_back(std::move(rec));
    }

    x = ancestral_update(x, tape.value(fr.output), t, sched, rng, cfg.variance);
    if (!all_finite(x))
      throw NumericalError("sampler: non-finite state at step t=" +
                           std::to_string(t));
  }
  result.samples = std::move(x);
  return result;
}

}  // namespace tsm
