// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. `acceptance 6 7` runs a subset.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tsm/checkpoint.hpp"
#include "tsm/cli.hpp"
#include "tsm/config.hpp"
#include "tsm/eval.hpp"
#include "tsm/sampling.hpp"
#include "tsm/training.hpp"

using namespace tsm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(double)) == 0;
}

void randomize(DenoiserModel& m, const std::vector<std::string>& names, Rng& rng,
               double scale) {
  for (const auto& n : names)
    for (auto& v : m.params().mutable_value(n).data()) v = scale * rng.normal();
}

DenoiserModel default_model(const RunConfig& cfg, Rng& rng, bool routers) {
  DenoiserModel m(cfg.model, cfg.T, rng);
  m.attach_adapters(cfg.adapter_spec(), rng);
  if (routers) m.attach_routers();
  return m;
}

// ---------------------------------------------------------------------------

Verdict interval_oracle() {
  const auto t0 = Clock::now();
  long mismatches = 0, checked = 0;
  for (int T : {10, 37, 100, 1000})
    for (int n : {1, 2, 3, 4, 8, 16}) {
      if (n > T) continue;
      // Brute force: interval i owns t iff (i−1)·T < t·n ≤ i·T.
      for (int t = 1; t <= T; ++t) {
        int owner = 0;
        for (int i = 1; i <= n; ++i)
          if (static_cast<long>(i - 1) * T < static_cast<long>(t) * n &&
              static_cast<long>(t) * n <= static_cast<long>(i) * T)
            owner = i;
        ++checked;
        if (interval_index(t, T, n) != owner) ++mismatches;
      }
      for (int i = 1; i <= n; ++i) {
        int lo = T + 1, hi = 0;
        for (int t = 1; t <= T; ++t)
          if (static_cast<long>(i - 1) * T < static_cast<long>(t) * n &&
              static_cast<long>(t) * n <= static_cast<long>(i) * T) {
            lo = std::min(lo, t);
            hi = std::max(hi, t);
          }
        const auto b = interval_bounds(i, T, n);
        ++checked;
        if (b.lo != lo || b.hi != hi) ++mismatches;
      }
    }
  const double sec = seconds_since(t0);
  return {mismatches == 0 && sec < 1.0,
          fmt("%ld mismatches in %ld checks, %.3f s", mismatches, checked, sec)};
}

Verdict gradient_gate(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  const NoiseSchedule sched = cfg.make_noise_schedule();
  const auto data = make_dataset(cfg.data);
  double worst_foster = 0.0, worst_assemble = 0.0;
  std::size_t scalars = 0;
  for (int draw = 0; draw < 20; ++draw) {
    Rng rng(static_cast<std::uint64_t>(draw), streams::kGradCheck);
    DenoiserModel m = default_model(cfg, rng, true);
    randomize(m, m.adapter_param_names(), rng, 0.1);
    randomize(m, m.router_param_names(), rng, 0.1);
    ParamStore& store = m.params();

    // Fostering: one (scale, interval) expert, timesteps inside its interval.
    const auto spec = m.adapter_spec();
    const std::size_t j = static_cast<std::size_t>(draw) % spec->scales.size();
    const int n = spec->scales[j];
    const int i = static_cast<int>(rng.uniform_int(1, n));
    const IntervalPartition part(cfg.T, n);
    const Batch fb = draw_batch(*data, sched, rng, cfg.grad_check.batch,
                                [&](Rng& r) { return sample_timestep_in_interval(i, part, r); });
    store.freeze_all();
    for (const auto& p : m.adapter_param_names(j, i)) store.set_trainable(p, true);
    const auto fr = finite_diff_check(denoising_loss(m, fb, Mode::fostering(j)), store,
                                      cfg.grad_check.step, cfg.grad_check.tolerance);

    // Assembling: routers only, t ~ U[1, T].
    const int T = cfg.T;
    const Batch ab = draw_batch(*data, sched, rng, cfg.grad_check.batch,
                                [T](Rng& r) { return static_cast<int>(r.uniform_int(1, T)); });
    store.freeze_all();
    for (const auto& p : m.router_param_names()) store.set_trainable(p, true);
    const auto ar = finite_diff_check(denoising_loss(m, ab, Mode::assembled()), store,
                                      cfg.grad_check.step, cfg.grad_check.tolerance);
    worst_foster = std::max(worst_foster, fr.max_rel_error);
    worst_assemble = std::max(worst_assemble, ar.max_rel_error);
    scalars += fr.scalars_checked + ar.scalars_checked;
  }
  const double sec = seconds_since(t0);
  const double worst = std::max(worst_foster, worst_assemble);
  return {worst < 1e-4 && sec < 60.0,
          fmt("max rel error fostering %.2e, assembling %.2e over %zu scalars, %.1f s",
              worst_foster, worst_assemble, scalars, sec)};
}

Verdict zero_init(const RunConfig& cfg) {
  const NoiseSchedule sched = cfg.make_noise_schedule();
  bool ok = true;
  int compared = 0;
  for (int trial = 0; trial < 5; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial));
    Rng base_rng(static_cast<std::uint64_t>(trial));
    const DenoiserModel base(cfg.model, cfg.T, base_rng);
    DenoiserModel m = default_model(cfg, rng, true);
    Matrix x(cfg.model.data_dim, 64);
    for (auto& v : x.data()) v = 3.0 * rng.normal();
    std::vector<int> t(64);
    for (auto& v : t) v = static_cast<int>(rng.uniform_int(1, cfg.T));

    const Matrix ref = base.predict(x, t, {}, Mode::base());
    for (const Mode& mode : {Mode::base(), Mode::fostering(0), Mode::fostering(1),
                             Mode::assembled()}) {
      ok &= same_bits(m.predict(x, t, {}, mode), ref);
      ++compared;
    }
    // Trained-looking experts, zero routers: assembled must equal core-only.
    randomize(m, m.adapter_param_names(), rng, 0.1);
    ok &= same_bits(m.predict(x, t, {}, Mode::assembled()),
                    m.predict(x, t, {}, Mode::fostering(0)));
    ++compared;
  }
  // Same for whole sampling chains.
  Rng rng(9);
  DenoiserModel m = default_model(cfg, rng, true);
  SamplerConfig sc;
  sc.batch = 16;
  sc.seed = 4;
  sc.mode = Mode::base();
  const Matrix base_samples = sample(m, sched, sc).samples;
  sc.mode = Mode::assembled();
  ok &= same_bits(sample(m, sched, sc).samples, base_samples);
  randomize(m, m.adapter_param_names(), rng, 0.1);
  const Matrix assembled = sample(m, sched, sc).samples;
  sc.mode = Mode::fostering(0);
  ok &= same_bits(assembled, sample(m, sched, sc).samples);
  compared += 2;
  return {ok, fmt("%d forward/sampling comparisons, %s", compared,
                  ok ? "all bit-identical" : "mismatch found")};
}

Verdict merged_vs_two_path(const RunConfig& cfg) {
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(1000 + static_cast<std::uint64_t>(trial));
    DenoiserModel m = default_model(cfg, rng, true);
    randomize(m, m.adapter_param_names(), rng, 0.2);
    randomize(m, m.router_param_names(), rng, 0.2);
    Matrix x(cfg.model.data_dim, 4);
    for (auto& v : x.data()) v = 2.0 * rng.normal();
    std::vector<int> t(4);
    for (auto& v : t) v = static_cast<int>(rng.uniform_int(1, cfg.T));
    const Mode mode = trial % 2 ? Mode::assembled() : Mode::fostering(trial % 4 == 0 ? 0 : 1);
    const Matrix two = m.predict(x, t, {}, mode);
    for (std::size_t b = 0; b < 4; ++b) {
      Matrix col(cfg.model.data_dim, 1);
      for (std::size_t r = 0; r < col.rows(); ++r) col(r, 0) = x(r, b);
      const Matrix merged = m.predict_merged(col, t[b], std::nullopt, mode);
      for (std::size_t r = 0; r < col.rows(); ++r)
        worst = std::max(worst, std::abs(merged(r, 0) - two(r, b)));
    }
  }
  return {worst < 1e-10, fmt("100 trials, max deviation %.3e", worst)};
}

Verdict frozen_audits(const RunConfig& cfg) {
  const NoiseSchedule sched = cfg.make_noise_schedule();
  const auto data = make_dataset(cfg.data);
  Rng rng(5);
  DenoiserModel m(cfg.model, cfg.T, rng);
  std::map<std::string, Matrix> base;
  for (const auto& n : m.params().names()) base.emplace(n, m.params().value(n));

  TrainConfig fc = cfg.foster_train();
  fc.steps = 20;
  fc.val_samples_per_interval = 0;
  train_fostering(m, sched, *data, fc);
  bool base_ok = true;
  for (const auto& [n, v] : base) base_ok &= same_bits(m.params().value(n), v);

  std::map<std::string, Matrix> experts;
  for (const auto& n : m.adapter_param_names()) experts.emplace(n, m.params().value(n));
  TrainConfig ac = cfg.assemble_train();
  ac.steps = 200;
  ac.optimizer.lr = 1e-2;
  ac.val_samples_per_interval = 0;
  train_assembling(m, sched, *data, ac);
  bool experts_ok = true;
  for (const auto& [n, v] : experts) experts_ok &= same_bits(m.params().value(n), v);
  for (const auto& [n, v] : base) experts_ok &= same_bits(m.params().value(n), v);
  bool routers_moved = false;
  for (const auto& n : m.router_param_names())
    for (double v : m.params().value(n).data()) routers_moved |= v != 0.0;

  return {base_ok && experts_ok && routers_moved,
          fmt("base %s after fostering (%zu tensors), experts %s after assembling "
              "(%zu tensors), routers %s",
              base_ok ? "identical" : "CHANGED", base.size(),
              experts_ok ? "identical" : "CHANGED", experts.size(),
              routers_moved ? "trained" : "unchanged")};
}

// Criteria 6, 7 and 9 share one pipeline per seed.
struct SeedResult {
  std::uint64_t seed = 0;
  double vanilla = 0, tsm1 = 0, tsm2 = 0;
  double energy_assembled = 0, energy_untrained = 0;
  double train_seconds = 0, sample_seconds = 0;
};

std::vector<SeedResult> run_trend_pipeline(const RunConfig& cfg, bool with_sampling) {
  std::vector<SeedResult> out;
  const NoiseSchedule sched = cfg.make_noise_schedule();
  const auto source = make_dataset(cfg.base_data);
  const auto target = make_dataset(cfg.data);
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    SeedResult r;
    r.seed = seed;
    auto t0 = Clock::now();
    Rng init(seed, streams::kBaseInit);
    DenoiserModel base(cfg.model, cfg.T, init);
    TrainConfig bt = cfg.base_train();
    bt.seed = seed;
    bt.val_samples_per_interval = 0;
    train_base(base, sched, *source, bt);

    CompareConfig cc;
    cc.n = cfg.foster.scales.front();
    cc.rank = cfg.foster.rank;
    cc.foster = cfg.foster_train();
    cc.assemble = cfg.assemble_train();
    cc.held_out = cfg.eval.held_out;
    cc.samples_per_interval = cfg.eval.samples_per_interval;
    cc.seed = seed;
    const CompareTable table = compare_param_matched(base, sched, *target, cc);
    r.vanilla = table.row("vanilla").mean_loss;
    r.tsm1 = table.row("tsm-1stage").mean_loss;
    r.tsm2 = table.row("tsm-2stage").mean_loss;
    r.train_seconds = seconds_since(t0);

    if (with_sampling) {
      // The same pipeline again, keeping the assembled model this time.
      DenoiserModel full = base;
      TrainConfig fc = cfg.foster_train();
      fc.seed = seed;
      fc.val_samples_per_interval = 0;
      train_fostering(full, sched, *target, fc);
      TrainConfig ac = cfg.assemble_train();
      ac.seed = seed;
      ac.val_samples_per_interval = 0;
      train_assembling(full, sched, *target, ac);

      DenoiserModel untrained = base;
      Rng adapter_rng(seed, streams::kAdapterInit);
      untrained.attach_adapters(cfg.adapter_spec(), adapter_rng);

      t0 = Clock::now();
      Matrix reference;
      std::vector<int> labels;
      Rng ref_rng(seed, streams::kReference);
      target->sample(ref_rng, cfg.eval.reference_count, reference, labels);
      SamplerConfig sc;
      sc.seed = seed;
      sc.batch = cfg.sample.count;
      sc.variance = variance_kind_from_string(cfg.sample.variance);
      sc.mode = Mode::assembled();
      r.energy_assembled = energy_distance(sample(full, sched, sc).samples, reference);
      sc.mode = Mode::fostering(0);
      r.energy_untrained = energy_distance(sample(untrained, sched, sc).samples, reference);
      r.sample_seconds = seconds_since(t0);
    }
    std::printf("  seed %llu: vanilla %.5f  tsm-1stage %.5f  tsm-2stage %.5f",
                static_cast<unsigned long long>(seed), r.vanilla, r.tsm1, r.tsm2);
    if (with_sampling)
      std::printf("  energy assembled %.5f untrained %.5f", r.energy_assembled,
                  r.energy_untrained);
    std::printf("  (%.0f s + %.0f s)\n", r.train_seconds, r.sample_seconds);
    std::fflush(stdout);
    out.push_back(r);
  }
  return out;
}

Verdict trend_vs_vanilla(const std::vector<SeedResult>& rs) {
  int wins = 0;
  double mv = 0, mt = 0, sec = 0;
  for (const auto& r : rs) {
    wins += r.tsm1 <= r.vanilla;
    mv += r.vanilla / rs.size();
    mt += r.tsm1 / rs.size();
    sec += r.train_seconds;
  }
  return {wins >= 2 && mt < mv && sec < 1800.0,
          fmt("tsm-1stage <= vanilla in %d/3 seeds, means %.5f vs %.5f, %.0f s", wins, mt,
              mv, sec)};
}

Verdict trend_two_stage(const std::vector<SeedResult>& rs) {
  int wins = 0;
  for (const auto& r : rs) wins += r.tsm2 <= r.tsm1;
  return {wins >= 2, fmt("assembled <= core-only in %d/3 seeds", wins)};
}

Verdict sampling_sanity(const std::vector<SeedResult>& rs) {
  int wins = 0;
  double sec = 0;
  for (const auto& r : rs) {
    wins += r.energy_assembled < r.energy_untrained;
    sec += r.sample_seconds;
  }
  return {wins == 3 && sec < 600.0,
          fmt("assembled energy distance lower in %d/3 seeds, sampling+scoring %.0f s", wins,
              sec)};
}

Verdict parameter_accounting(const RunConfig& cfg) {
  const NoiseSchedule sched = cfg.make_noise_schedule();
  const auto data = make_dataset(cfg.data);
  Rng rng(3);
  DenoiserModel m(cfg.model, cfg.T, rng);
  TrainConfig fc = cfg.foster_train();
  fc.steps = 0;
  fc.val_samples_per_interval = 0;
  const auto foster = train_fostering(m, sched, *data, fc);
  TrainConfig ac = cfg.assemble_train();
  ac.steps = 0;
  ac.val_samples_per_interval = 0;
  const auto assemble = train_assembling(m, sched, *data, ac);

  const AdapterSpec spec = cfg.adapter_spec();
  const std::size_t m_scales = spec.scales.size();
  std::size_t foster_formula = 0, assemble_formula = 0;
  bool per_tensor_ok = true;
  for (const auto& l : m.adapted_layers()) {
    const Matrix& W = m.params().value(l + ".W");
    const std::size_t d = W.rows(), k = W.cols();
    foster_formula += static_cast<std::size_t>(spec.scales.total_intervals()) *
                      adapter_param_count(d, k, spec.rank);
    assemble_formula += router_param_count(k, static_cast<std::size_t>(cfg.T), m_scales);
    for (int n : spec.scales.values())
      for (int i = 1; i <= n; ++i)
        per_tensor_ok &=
            m.params().value(DenoiserModel::lora_name(l, n, i, "A")).data().size() +
                m.params().value(DenoiserModel::lora_name(l, n, i, "B")).data().size() ==
            spec.rank * (d + k);
    std::size_t router = 0;
    for (const char* w : {"F_weight", "F_bias", "E_table"})
      router += m.params().value(DenoiserModel::router_name(l, w)).data().size();
    per_tensor_ok &= router == (m_scales - 1) * (k + 1) + cfg.T * (m_scales - 1);
  }
  const bool ok = assemble.trainable_params < foster.trainable_params &&
                  foster.trainable_params == foster_formula &&
                  assemble.trainable_params == assemble_formula && per_tensor_ok;
  return {ok, fmt("fostering %zu (formula %zu), assembling %zu (formula %zu), "
                  "per-tensor counts %s",
                  foster.trainable_params, foster_formula, assemble.trainable_params,
                  assemble_formula, per_tensor_ok ? "match" : "MISMATCH")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict determinism() {
  const fs::path root =
      fs::temp_directory_path() / ("tsm_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cfg = (root / "c.json").string();
  std::ofstream(cfg) << R"({"seed": 21, "T": 200,
    "base": {"steps": 300}, "foster": {"steps": 100}, "assemble": {"steps": 200},
    "sample": {"count": 500},
    "eval": {"samples_per_interval": 128, "held_out": 512, "reference_count": 500}})";

  std::ostringstream sink;
  auto run = [&](const std::string& tag) {
    const fs::path d = root / tag;
    const std::vector<std::vector<std::string>> cmds = {
        {"train-base", "--out", (d / "base").string()},
        {"train-foster", "--ckpt", (d / "base").string(), "--out", (d / "foster").string()},
        {"assemble", "--ckpt", (d / "foster").string(), "--out", (d / "asm").string()},
        {"sample", "--ckpt", (d / "asm").string(), "--out", (d / "sample").string()},
        {"eval", "--ckpt", (d / "asm").string(), "--out", (d / "eval").string()},
    };
    for (auto args : cmds) {
      args.insert(args.end(), {"--config", cfg});
      if (run_cli(args, sink, sink) != kExitOk) return false;
    }
    return true;
  };
  if (!run("a") || !run("b")) {
    fs::remove_all(root);
    return {false, "pipeline command failed: " + sink.str()};
  }
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file() || e.path().filename() == "timing.json") continue;
    ++files;
    const fs::path other = root / "b" / fs::relative(e.path(), root / "a");
    if (slurp(e.path()) != slurp(other)) ++differing;
  }
  bool round_trip = true;
  for (const char* stage : {"base", "foster", "asm"}) {
    const Checkpoint ck = load_checkpoint(root / "a" / stage);
    const fs::path again = root / (std::string("rt_") + stage);
    save_checkpoint(again, ck.model, ck.config, ck.rng_state);
    round_trip &= slurp(again / kManifestFile) == slurp(root / "a" / stage / kManifestFile);
    round_trip &= slurp(again / kBlobFile) == slurp(root / "a" / stage / kBlobFile);
  }
  fs::remove_all(root);
  return {differing == 0 && files > 0 && round_trip,
          fmt("%zu/%zu output files identical across reruns, checkpoint round trip %s",
              files - differing, files, round_trip ? "byte-identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int c) { return only.empty() || only.contains(c); };

  const RunConfig cfg;  // defaults are the reference configuration
  std::vector<std::pair<int, Verdict>> results;
  auto record = [&](int c, const char* name, const Verdict& v) {
    std::printf("[%s] criterion %d: %s: %s\n", v.pass ? "PASS" : "FAIL", c, name,
                v.detail.c_str());
    std::fflush(stdout);
    results.emplace_back(c, v);
  };

  if (wanted(1)) record(1, "interval oracle", interval_oracle());
  if (wanted(2)) record(2, "gradient gate", gradient_gate(cfg));
  if (wanted(3)) record(3, "zero-init neutrality and asymmetry", zero_init(cfg));
  if (wanted(4)) record(4, "merged vs two-path forward", merged_vs_two_path(cfg));
  if (wanted(5)) record(5, "frozen-stage audits", frozen_audits(cfg));
  if (wanted(6) || wanted(7) || wanted(9)) {
    const auto rs = run_trend_pipeline(cfg, wanted(9));
    if (wanted(6)) record(6, "tsm 1-stage vs vanilla lora", trend_vs_vanilla(rs));
    if (wanted(7)) record(7, "2-stage vs 1-stage", trend_two_stage(rs));
    if (wanted(9)) record(9, "sampling sanity", sampling_sanity(rs));
  }
  if (wanted(8)) record(8, "parameter accounting", parameter_accounting(cfg));
  if (wanted(10)) record(10, "determinism and persistence", determinism());

  const auto failed = std::count_if(results.begin(), results.end(),
                                    [](const auto& r) { return !r.second.pass; });
  std::printf("%zu/%zu criteria passed\n", results.size() - failed, results.size());
  return failed == 0 ? 0 : 1;
}
