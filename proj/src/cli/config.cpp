// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/config.hpp"

#include <fstream>
#include <numbers>
#include <set>

#include "tsm/errors.hpp"

namespace tsm {

using nlohmann::json;

namespace {

// Strict reader over one JSON object: typed lookups, then finish() rejects
// any key that was not consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  void get(const char* key, std::size_t& out) { integer(key, out, 0); }
  void get(const char* key, int& out) { integer(key, out, INT32_MIN); }
  void get(const char* key, std::uint64_t& out, bool) { integer(key, out, 0); }

  void get(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw mistyped(key, "a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw mistyped(key, "a boolean");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw mistyped(key, "a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<int>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw mistyped(key, "an array of integers");
      std::vector<int> vals;
      for (const auto& e : *v) {
        if (!e.is_number_integer()) throw mistyped(key, "an array of integers");
        vals.push_back(e.get<int>());
      }
      out = std::move(vals);
    }
  }

  // Nested object, or nullptr if absent.
  const json* child(const char* key) { return find(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k))
        throw ConfigError("unknown key '" + k + "' in " + where());
  }

 private:
  template <typename T>
  void integer(const char* key, T& out, long long min) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw mistyped(key, "an integer");
      if (v->is_number_unsigned()) {
        out = static_cast<T>(v->get<std::uint64_t>());
        return;
      }
      const long long x = v->get<long long>();
      if (x < min) throw ConfigError(where() + "." + key + " must be >= " + std::to_string(min));
      out = static_cast<T>(x);
    }
  }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string where() const { return path_.empty() ? "config" : path_; }
  ConfigError mistyped(const char* key, const char* what) const {
    return ConfigError(where() + "." + key + " must be " + what);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_optim(const json* j, const std::string& path, OptimSettings& o) {
  if (!j) return;
  Section s(*j, path);
  s.get("steps", o.steps);
  s.get("batch", o.batch);
  s.get("lr", o.lr);
  s.get("weight_decay", o.weight_decay);
  s.get("beta1", o.beta1);
  s.get("beta2", o.beta2);
  s.finish();
}

json write_optim(const OptimSettings& o) {
  return {{"steps", o.steps},         {"batch", o.batch},
          {"lr", o.lr},               {"weight_decay", o.weight_decay},
          {"beta1", o.beta1},         {"beta2", o.beta2}};
}

void read_data(const json* j, const std::string& path, DataSpec& d) {
  if (!j) return;
  Section s(*j, path);
  s.get("kind", d.kind);
  s.get("modes", d.modes);
  s.get("radius", d.radius);
  s.get("sigma", d.sigma);
  s.get("rotation", d.rotation);
  s.finish();
}

json write_data(const DataSpec& d) {
  return {{"kind", d.kind},     {"modes", d.modes},
          {"radius", d.radius}, {"sigma", d.sigma},
          {"rotation", d.rotation}};
}

AdamWConfig adamw_of(const OptimSettings& o) {
  AdamWConfig c;
  c.lr = o.lr;
  c.beta1 = o.beta1;
  c.beta2 = o.beta2;
  c.weight_decay = o.weight_decay;
  return c;
}

}  // namespace

RunConfig::RunConfig() {
  // Pre-training source: four broad modes on the diagonals, so the
  // fine-tuning target (eight tight modes on the axes and diagonals) is a
  // genuine shift.
  base_data.kind = "gmm2d";
  base_data.modes = 4;
  base_data.radius = 2.5;
  base_data.sigma = 0.5;
  base_data.rotation = std::numbers::pi / 4.0;
  base.steps = 2000;
  base.lr = 1e-3;
  base.weight_decay = 0.0;
  foster.optim.steps = 1000;
  foster.optim.lr = 5e-3;
  assemble.steps = 2000;
  assemble.lr = 3e-4;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.get("seed", c.seed, true);
  root.get("T", c.T);

  if (const json* sj = root.child("schedule")) {
    Section s(*sj, "schedule");
    std::string kind = to_string(c.schedule);
    s.get("kind", kind);
    c.schedule = schedule_kind_from_string(kind);
    s.get("beta_min", c.beta_min);
    s.get("beta_max", c.beta_max);
    s.finish();
  }
  if (const json* mj = root.child("model")) {
    Section s(*mj, "model");
    s.get("hidden", c.model.hidden);
    s.get("depth", c.model.depth);
    s.get("time_dim", c.model.time_dim);
    s.get("num_classes", c.model.num_classes);
    s.get("adapt_io", c.model.adapt_io);
    s.finish();
  }
  read_data(root.child("data"), "data", c.data);
  read_data(root.child("base_data"), "base_data", c.base_data);
  read_optim(root.child("base"), "base", c.base);
  if (const json* fj = root.child("foster")) {
    json optim_part = json::object();
    json rest = json::object();
    for (const auto& [k, v] : fj->items()) {
      if (k == "scales" || k == "rank" || k == "alpha")
        rest[k] = v;
      else
        optim_part[k] = v;
    }
    if (!fj->is_object()) throw ConfigError("foster must be an object");
    read_optim(&optim_part, "foster", c.foster.optim);
    Section s(rest, "foster");
    s.get("scales", c.foster.scales);
    s.get("rank", c.foster.rank);
    s.get("alpha", c.foster.alpha);
    s.finish();
  }
  read_optim(root.child("assemble"), "assemble", c.assemble);
  if (const json* sj = root.child("sample")) {
    Section s(*sj, "sample");
    s.get("count", c.sample.count);
    s.get("variance", c.sample.variance);
    s.get("format", c.sample.format);
    s.get("mode", c.sample.mode);
    s.get("scale", c.sample.scale);
    s.finish();
  }
  if (const json* ej = root.child("eval")) {
    Section s(*ej, "eval");
    s.get("partition", c.eval.partition);
    s.get("samples_per_interval", c.eval.samples_per_interval);
    s.get("held_out", c.eval.held_out);
    s.get("reference_count", c.eval.reference_count);
    s.get("drift_probe", c.eval.drift_probe);
    s.get("drift_stride", c.eval.drift_stride);
    s.finish();
  }
  if (const json* gj = root.child("grad_check")) {
    Section s(*gj, "grad_check");
    s.get("batch", c.grad_check.batch);
    s.get("step", c.grad_check.step);
    s.get("tolerance", c.grad_check.tolerance);
    s.finish();
  }
  root.finish();

  // Semantic checks, still before any compute.
  if (c.T < 2) throw ConfigError("T must be >= 2");
  const auto target = make_dataset(c.data);
  const auto source = make_dataset(c.base_data);
  if (target->dim() != source->dim())
    throw ConfigError("data and base_data dimensions differ");
  c.model.data_dim = target->dim();
  if (c.model.hidden == 0 || c.model.depth == 0)
    throw ConfigError("model.hidden and model.depth must be positive");
  if (c.model.time_dim == 0 || c.model.time_dim % 2 != 0)
    throw ConfigError("model.time_dim must be a positive even number");
  try {
    ScaleSet scales(c.foster.scales);
    for (int n : scales.values())
      if (n > c.T) throw ConfigError("foster.scales entries must be <= T");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("foster.scales: ") + e.what());
  }
  if (c.foster.rank == 0) throw ConfigError("foster.rank must be positive");
  variance_kind_from_string(c.sample.variance);
  if (c.sample.format != "csv" && c.sample.format != "bin")
    throw ConfigError("sample.format must be csv or bin");
  if (c.sample.mode != "auto" && c.sample.mode != "base" &&
      c.sample.mode != "fostering" && c.sample.mode != "assembled")
    throw ConfigError("sample.mode must be auto, base, fostering or assembled");
  if (c.eval.partition < 1 || c.eval.partition > c.T)
    throw ConfigError("eval.partition must lie in [1, T]");
  if (c.eval.drift_stride < 1) throw ConfigError("eval.drift_stride must be >= 1");
  if (!(c.grad_check.step > 0.0)) throw ConfigError("grad_check.step must be > 0");
  for (const OptimSettings* o : {&c.base, &c.foster.optim, &c.assemble}) {
    if (o->batch == 0) throw ConfigError("batch must be positive");
    if (!(o->lr >= 0.0)) throw ConfigError("lr must be >= 0");
    if (!(o->beta1 > 0 && o->beta1 < 1 && o->beta2 > 0 && o->beta2 < 1))
      throw ConfigError("adam betas must lie in (0, 1)");
  }
  c.make_noise_schedule();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " +
                      e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["T"] = T;
  j["schedule"] = {{"kind", to_string(schedule)},
                   {"beta_min", beta_min},
                   {"beta_max", beta_max}};
  j["model"] = {{"hidden", model.hidden},
                {"depth", model.depth},
                {"time_dim", model.time_dim},
                {"num_classes", model.num_classes},
                {"adapt_io", model.adapt_io}};
  j["data"] = write_data(data);
  j["base_data"] = write_data(base_data);
  j["base"] = write_optim(base);
  json f = write_optim(foster.optim);
  f["scales"] = foster.scales;
  f["rank"] = foster.rank;
  f["alpha"] = foster.alpha;
  j["foster"] = f;
  j["assemble"] = write_optim(assemble);
  j["sample"] = {{"count", sample.count},
                 {"variance", sample.variance},
                 {"format", sample.format},
                 {"mode", sample.mode},
                 {"scale", sample.scale}};
  j["eval"] = {{"partition", eval.partition},
               {"samples_per_interval", eval.samples_per_interval},
               {"held_out", eval.held_out},
               {"reference_count", eval.reference_count},
               {"drift_probe", eval.drift_probe},
               {"drift_stride", eval.drift_stride}};
  j["grad_check"] = {{"batch", grad_check.batch},
                     {"step", grad_check.step},
                     {"tolerance", grad_check.tolerance}};
  return j;
}

NoiseSchedule RunConfig::make_noise_schedule() const {
  try {
    return make_schedule(T, schedule, beta_min, beta_max);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
}

AdapterSpec RunConfig::adapter_spec() const {
  return AdapterSpec{ScaleSet(foster.scales), foster.rank, foster.alpha};
}

TrainConfig RunConfig::base_train() const {
  TrainConfig t;
  t.stage = Stage::base;
  t.steps = base.steps;
  t.batch = base.batch;
  t.optimizer = adamw_of(base);
  t.seed = seed;
  t.val_partition = eval.partition;
  return t;
}

TrainConfig RunConfig::foster_train() const {
  TrainConfig t;
  t.stage = Stage::fostering;
  t.adapters = adapter_spec();
  t.steps = foster.optim.steps;
  t.batch = foster.optim.batch;
  t.optimizer = adamw_of(foster.optim);
  t.seed = seed;
  return t;
}

TrainConfig RunConfig::assemble_train() const {
  TrainConfig t;
  t.stage = Stage::assembling;
  t.steps = assemble.steps;
  t.batch = assemble.batch;
  t.optimizer = adamw_of(assemble);
  t.seed = seed;
  return t;
}

}  // namespace tsm
