// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/cli.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "tsm/checkpoint.hpp"
#include "tsm/config.hpp"
#include "tsm/errors.hpp"
#include "tsm/eval.hpp"
#include "tsm/sampling.hpp"
#include "tsm/training.hpp"

namespace tsm {

using nlohmann::json;
namespace fs = std::filesystem;

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

struct Options {
  std::string config;
  std::string ckpt;
  std::string out;
  std::optional<std::uint64_t> seed;
};

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header)
      : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      out_ << (i ? "," : "") << csv_field(cells[i]);
    out_ << "\r\n";
  }

 private:
  std::ofstream out_;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

RunConfig load_config(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  RunConfig cfg = RunConfig::load(o.config);
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

fs::path require_out(const Options& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(o.out);
  return o.out;
}

Checkpoint require_ckpt(const Options& o, const RunConfig& cfg) {
  if (o.ckpt.empty()) throw ConfigError("--ckpt is required");
  Checkpoint ck = load_checkpoint(o.ckpt);
  if (ck.model.T() != cfg.T)
    throw ConfigError("checkpoint was trained with T=" + std::to_string(ck.model.T()) +
                      ", config says T=" + std::to_string(cfg.T));
  return ck;
}

void write_training_outputs(const fs::path& dir, const TrainReport& r,
                            const RunConfig& cfg) {
  CsvWriter loss(dir / "loss.csv", {"unit", "step", "loss"});
  for (const auto& s : r.trace)
    loss.row({s.unit, std::to_string(s.step), csv_number(s.loss)});

  json final_loss = json::object();
  for (const auto& s : r.trace) final_loss[s.unit] = s.loss;
  json report = {{"stage", to_string(r.stage)},
                 {"seed", cfg.seed},
                 {"steps_recorded", r.trace.size()},
                 {"trainable_params", r.trainable_params},
                 {"final_loss", final_loss},
                 {"interval_val_loss", r.interval_val_loss},
                 {"rng_state", rng_state_to_json(r.rng_state)}};
  write_json(dir / "report.json", report);
  // Wall time varies run to run, so it lives apart from the report.
  write_json(dir / "timing.json", {{"wall_seconds", r.wall_seconds}});
}

Mode resolve_mode(const RunConfig& cfg, const DenoiserModel& model) {
  const std::string& m = cfg.sample.mode;
  Mode mode;
  if (m == "base") {
    mode = Mode::base();
  } else if (m == "fostering") {
    mode = Mode::fostering(cfg.sample.scale);
  } else if (m == "assembled") {
    mode = Mode::assembled();
  } else if (model.has_routers()) {
    mode = Mode::assembled();
  } else if (model.has_adapters()) {
    mode = Mode::fostering(cfg.sample.scale);
  } else {
    mode = Mode::base();
  }
  model.check_mode(mode);
  return mode;
}

int cmd_train_base(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const fs::path dir = require_out(o);
  const NoiseSchedule sched = cfg.make_noise_schedule();
  const auto data = make_dataset(cfg.base_data);
  ModelSpec spec = cfg.model;
  spec.data_dim = data->dim();
  Rng init(cfg.seed, streams::kBaseInit);
  DenoiserModel model(spec, cfg.T, init);
  const TrainReport r = train_base(model, sched, *data, cfg.base_train());
  save_checkpoint(dir, model, cfg.to_json(), r.rng_state);
  write_training_outputs(dir, r, cfg);
  out << "train-base: " << r.trace.size() << " steps, final loss "
      << csv_number(r.trace.empty() ? 0.0 : r.trace.back().loss) << "\n";
  return kExitOk;
}

int cmd_train_foster(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  Checkpoint ck = require_ckpt(o, cfg);
  if (ck.stage != "base")
    throw StageMismatch("train-foster needs a base checkpoint, got stage '" +
                        ck.stage + "'");
  const fs::path dir = require_out(o);
  const auto data = make_dataset(cfg.data);
  const TrainReport r =
      train_fostering(ck.model, cfg.make_noise_schedule(), *data, cfg.foster_train());
  save_checkpoint(dir, ck.model, cfg.to_json(), r.rng_state);
  write_training_outputs(dir, r, cfg);
  out << "train-foster: " << ck.model.adapter_param_names().size() / 2
      << " adapters trained\n";
  return kExitOk;
}

int cmd_assemble(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  Checkpoint ck = require_ckpt(o, cfg);
  if (ck.stage != "fostering")
    throw StageMismatch("assemble needs a fostering checkpoint, got stage '" +
                        ck.stage + "'");
  const ScaleSet want(cfg.foster.scales);
  const ScaleSet& have = ck.model.adapter_spec()->scales;
  for (int n : want.values()) {
    const auto& hv = have.values();
    if (std::find(hv.begin(), hv.end(), n) == hv.end())
      throw StageMismatch("checkpoint has no experts for scale " + std::to_string(n));
  }
  if (!(want == have))
    throw StageMismatch("checkpoint scales differ from the configured scales");
  const fs::path dir = require_out(o);
  const auto data = make_dataset(cfg.data);
  const TrainReport r = train_assembling(ck.model, cfg.make_noise_schedule(), *data,
                                         cfg.assemble_train());
  save_checkpoint(dir, ck.model, cfg.to_json(), r.rng_state);
  write_training_outputs(dir, r, cfg);
  out << "assemble: " << r.trainable_params << " router parameters trained\n";
  return kExitOk;
}

void write_samples(const fs::path& dir, const RunConfig& cfg, const Matrix& x) {
  const std::size_t dim = x.rows(), count = x.cols();
  if (cfg.sample.format == "bin") {
    std::string bytes;
    bytes.reserve(dim * count * 8);
    for (std::size_t c = 0; c < count; ++c)
      for (std::size_t r = 0; r < dim; ++r) {
        const auto bits = std::bit_cast<std::uint64_t>(x(r, c));
        for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
      }
    std::ofstream f(dir / "samples.bin", std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    return;
  }
  std::vector<std::string> header;
  for (std::size_t r = 0; r < dim; ++r) header.push_back("x" + std::to_string(r));
  CsvWriter csv(dir / "samples.csv", header);
  std::vector<std::string> cells(dim);
  for (std::size_t c = 0; c < count; ++c) {
    for (std::size_t r = 0; r < dim; ++r) cells[r] = csv_number(x(r, c));
    csv.row(cells);
  }
}

int cmd_sample(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const Checkpoint ck = require_ckpt(o, cfg);
  const Mode mode = resolve_mode(cfg, ck.model);
  const fs::path dir = require_out(o);
  SamplerConfig sc;
  sc.mode = mode;
  sc.seed = cfg.seed;
  sc.batch = cfg.sample.count;
  sc.variance = variance_kind_from_string(cfg.sample.variance);
  const SampleResult res = sample(ck.model, cfg.make_noise_schedule(), sc);
  write_samples(dir, cfg, res.samples);

  if (!res.expert_by_t.empty()) {
    CsvWriter experts(dir / "experts.csv", {"t", "expert"});
    for (std::size_t k = 0; k < res.expert_by_t.size(); ++k)
      experts.row({std::to_string(k + 1), std::to_string(res.expert_by_t[k])});
  }
  if (!res.gates.empty()) {
    std::vector<std::string> header{"t", "layer"};
    for (std::size_t j = 0; j < res.gates.front().mean_gate.size(); ++j)
      header.push_back("gate" + std::to_string(j + 1));
    CsvWriter gates(dir / "gates.csv", header);
    for (const auto& g : res.gates) {
      std::vector<std::string> row{std::to_string(g.t), g.layer};
      for (double v : g.mean_gate) row.push_back(csv_number(v));
      gates.row(row);
    }
  }
  json switches = json::array();
  for (const auto& s : res.switches)
    switches.push_back({{"t", s.t}, {"from", s.from}, {"to", s.to}});
  write_json(dir / "sample.json", {{"stage", ck.stage},
                                   {"mode", to_string(mode)},
                                   {"count", res.samples.cols()},
                                   {"seed", cfg.seed},
                                   {"variance", cfg.sample.variance},
                                   {"switches", switches}});
  out << "sample: " << res.samples.cols() << " points in mode " << to_string(mode)
      << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const Checkpoint ck = require_ckpt(o, cfg);
  const Mode mode = resolve_mode(cfg, ck.model);
  const fs::path dir = require_out(o);
  const NoiseSchedule sched = cfg.make_noise_schedule();
  const auto data = make_dataset(cfg.data);
  const IntervalPartition partition(cfg.T, cfg.eval.partition);

  const HeldOut held = draw_held_out(*data, cfg.eval.held_out, cfg.seed);
  const auto losses = per_interval_loss(ck.model, sched, held, partition, mode,
                                        cfg.eval.samples_per_interval, cfg.seed);
  CsvWriter per(dir / "per_interval.csv", {"interval", "t_lo", "t_hi", "loss"});
  for (int i = 1; i <= cfg.eval.partition; ++i) {
    const auto b = partition.bounds(i);
    per.row({std::to_string(i), std::to_string(b.lo), std::to_string(b.hi),
             csv_number(losses[static_cast<std::size_t>(i - 1)])});
  }
  const LossEstimate global =
      global_loss(ck.model, sched, held, mode,
                  cfg.eval.samples_per_interval * static_cast<std::size_t>(cfg.eval.partition),
                  cfg.seed);

  SamplerConfig sc;
  sc.mode = mode;
  sc.seed = cfg.seed;
  sc.batch = cfg.sample.count;
  sc.variance = variance_kind_from_string(cfg.sample.variance);
  const SampleResult gen = sample(ck.model, sched, sc);
  Rng ref_rng(cfg.seed, streams::kReference);
  Matrix ref;
  std::vector<int> ref_labels;
  data->sample(ref_rng, cfg.eval.reference_count, ref, ref_labels);
  const double energy = energy_distance(gen.samples, ref);

  const HeldOut probe = draw_held_out(*data, cfg.eval.drift_probe, cfg.seed + 1);
  const auto drift = hidden_state_drift(ck.model, probe.x, sched, mode,
                                        cfg.eval.drift_stride, cfg.seed);
  CsvWriter dcsv(dir / "drift.csv", {"t", "mean_norm"});
  for (const auto& d : drift) dcsv.row({std::to_string(d.t), csv_number(d.mean_norm)});

  write_json(dir / "eval.json",
             {{"stage", ck.stage},
              {"mode", to_string(mode)},
              {"seed", cfg.seed},
              {"partition", cfg.eval.partition},
              {"interval_loss", losses},
              {"mean_interval_loss", weighted_interval_mean(losses, partition)},
              {"global_loss", {{"mean", global.mean}, {"std_error", global.std_error}}},
              {"energy_distance", energy},
              {"generated", gen.samples.cols()},
              {"reference", ref.cols()},
              {"drift_cv", coefficient_of_variation(drift)}});
  out << "eval: loss " << csv_number(global.mean) << ", energy distance "
      << csv_number(energy) << "\n";
  return kExitOk;
}

// Checks the analytic gradient of the loss the checkpoint's next (or last)
// stage optimises: base tensors for a base checkpoint, each scale's experts
// in its own fostering mode, and the routers in assembled mode.
int cmd_grad_check(const Options& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  Checkpoint ck = require_ckpt(o, cfg);
  const fs::path dir = require_out(o);
  const NoiseSchedule sched = cfg.make_noise_schedule();
  const auto data = make_dataset(ck.stage == "base" ? cfg.base_data : cfg.data);
  DenoiserModel& model = ck.model;
  ParamStore& store = model.params();
  Rng rng(cfg.seed, streams::kGradCheck);
  const int T = cfg.T;
  auto uniform_t = [T](Rng& r) { return static_cast<int>(r.uniform_int(1, T)); };

  struct Target {
    std::string name;
    Mode mode;
    std::vector<std::string> params;
  };
  std::vector<Target> targets;
  if (ck.stage == "base") {
    targets.push_back({"base", Mode::base(), model.base_param_names()});
  } else if (ck.stage == "fostering") {
    const auto& scales = model.adapter_spec()->scales;
    for (std::size_t j = 0; j < scales.size(); ++j)
      targets.push_back({"fostering.n" + std::to_string(scales[j]), Mode::fostering(j),
                         model.adapter_param_names(j)});
  } else {
    targets.push_back({"assembled", Mode::assembled(), model.router_param_names()});
  }

  json results = json::array();
  double worst = 0.0;
  bool ok = true;
  for (const auto& tg : targets) {
    store.freeze_all();
    for (const auto& p : tg.params) store.set_trainable(p, true);
    const Batch batch = draw_batch(*data, sched, rng, cfg.grad_check.batch, uniform_t);
    const GradCheckResult r =
        finite_diff_check(denoising_loss(model, batch, tg.mode), store,
                          cfg.grad_check.step, cfg.grad_check.tolerance);
    results.push_back({{"target", tg.name},
                       {"max_rel_error", r.max_rel_error},
                       {"worst_tensor", r.worst_tensor},
                       {"worst_index", r.worst_index},
                       {"scalars_checked", r.scalars_checked},
                       {"passed", r.passed}});
    worst = std::max(worst, r.max_rel_error);
    ok = ok && r.passed;
  }
  store.freeze_all();
  write_json(dir / "grad_check.json", {{"stage", ck.stage},
                                       {"step", cfg.grad_check.step},
                                       {"tolerance", cfg.grad_check.tolerance},
                                       {"max_rel_error", worst},
                                       {"passed", ok},
                                       {"checks", results}});
  out << "grad-check: max relative error " << csv_number(worst)
      << (ok ? " (pass)\n" : " (FAIL)\n");
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Timestep-interval LoRA experts for a toy diffusion model", "tsm"};
  app.require_subcommand(1);
  Options o;
  using Handler = int (*)(const Options&, std::ostream&);
  std::vector<std::pair<CLI::App*, Handler>> commands;
  auto add = [&](const char* name, const char* help, Handler h) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "run config (JSON)")->required();
    sub->add_option("--ckpt", o.ckpt, "input checkpoint directory");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "overrides the config seed");
    commands.emplace_back(sub, h);
  };
  add("train-base", "pre-train the base denoiser", cmd_train_base);
  add("train-foster", "train one LoRA expert per timestep interval", cmd_train_foster);
  add("assemble", "train routers over frozen experts", cmd_assemble);
  add("sample", "draw samples with the ancestral sampler", cmd_sample);
  add("eval", "held-out losses, energy distance and hidden-state drift", cmd_eval);
  add("grad-check", "finite-difference check of the training loss", cmd_grad_check);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "tsm: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    for (const auto& [sub, handler] : commands)
      if (sub->parsed()) return handler(o, out);
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "tsm: config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "tsm: shape error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const StageMismatch& e) {
    err << "tsm: stage mismatch: " << e.what() << "\n";
    return kExitStageMismatch;
  } catch (const DivergenceError& e) {
    err << "tsm: diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const NumericalError& e) {
    err << "tsm: diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const InvariantViolation& e) {
    err << "tsm: invariant violated: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "tsm: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace tsm
