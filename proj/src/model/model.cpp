// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/model.hpp"

#include <cmath>
#include <map>
#include <set>

#include "tsm/errors.hpp"

namespace tsm {

namespace {

void init_uniform(Matrix& m, double bound, Rng& rng) {
  for (double& v : m.data()) v = (2.0 * rng.uniform() - 1.0) * bound;
}

}  // namespace

DenoiserModel::DenoiserModel(ModelSpec spec, int T, Rng& rng)
    : spec_(spec), T_(T) {
  if (T < 1) throw std::invalid_argument("DenoiserModel: T < 1");
  if (spec_.data_dim == 0 || spec_.hidden == 0 || spec_.depth == 0)
    throw std::invalid_argument("DenoiserModel: empty layer dimensions");
  if (spec_.time_dim == 0 || spec_.time_dim % 2 != 0)
    throw std::invalid_argument("DenoiserModel: time_dim must be even");
  init_base(rng);
}

DenoiserModel::DenoiserModel(ModelSpec spec, int T,
                             std::optional<AdapterSpec> adapters, bool routers,
                             ParamStore params)
    : spec_(spec), T_(T), adapters_(std::move(adapters)), routers_(routers),
      params_(std::move(params)) {
  if (routers_ && (!adapters_ || adapters_->scales.size() < 2))
    throw std::invalid_argument("routers require at least two adapter scales");

  std::map<std::string, std::pair<std::size_t, std::size_t>> expected;
  for (const auto& l : linear_layers()) {
    expected[l + ".W"] = {out_dim(l), in_dim(l)};
    expected[l + ".b"] = {out_dim(l), 1};
  }
  expected["time.W"] = {spec_.hidden, spec_.time_dim};
  expected["time.b"] = {spec_.hidden, 1};
  if (spec_.num_classes > 0) expected["cond.E"] = {spec_.num_classes, spec_.hidden};
  if (adapters_) {
    for (const auto& l : adapted_layers()) {
      check_lora_rank(out_dim(l), in_dim(l), adapters_->rank);
      for (int n : adapters_->scales.values())
        for (int i = 1; i <= n; ++i) {
          expected[lora_name(l, n, i, "A")] = {adapters_->rank, in_dim(l)};
          expected[lora_name(l, n, i, "B")] = {out_dim(l), adapters_->rank};
        }
      if (routers_) {
        const std::size_t ctx = adapters_->scales.size() - 1;
        expected[router_name(l, "F_weight")] = {ctx, in_dim(l)};
        expected[router_name(l, "F_bias")] = {ctx, 1};
        expected[router_name(l, "E_table")] = {static_cast<std::size_t>(T_), ctx};
      }
    }
  }
  if (expected.size() != params_.names().size())
    throw ShapeError("model expects " + std::to_string(expected.size()) +
                     " tensors, store holds " +
                     std::to_string(params_.names().size()));
  for (const auto& [name, shape] : expected) {
    if (!params_.contains(name))
      throw ShapeError("model tensor '" + name + "' missing");
    const Matrix& m = params_.value(name);
    if (m.rows() != shape.first || m.cols() != shape.second)
      throw ShapeError("tensor '" + name + "' has shape " + m.shape_str() +
                       ", expected " + std::to_string(shape.first) + "x" +
                       std::to_string(shape.second));
  }
}

std::vector<std::string> DenoiserModel::linear_layers() const {
  std::vector<std::string> out{"in"};
  for (std::size_t l = 1; l <= spec_.depth; ++l)
    out.push_back("h" + std::to_string(l));
  out.push_back("out");
  return out;
}

bool DenoiserModel::is_adapted(const std::string& layer) const {
  if (layer == "in" || layer == "out") return spec_.adapt_io;
  return layer.size() > 1 && layer[0] == 'h';
}

std::vector<std::string> DenoiserModel::adapted_layers() const {
  std::vector<std::string> out;
  for (const auto& l : linear_layers())
    if (is_adapted(l)) out.push_back(l);
  return out;
}

std::size_t DenoiserModel::in_dim(const std::string& layer) const {
  return layer == "in" ? spec_.data_dim : spec_.hidden;
}

std::size_t DenoiserModel::out_dim(const std::string& layer) const {
  return layer == "out" ? spec_.data_dim : spec_.hidden;
}

std::string DenoiserModel::lora_name(const std::string& layer, int n,
                                     int interval, const char* which) {
  return layer + ".lora.n" + std::to_string(n) + ".i" +
         std::to_string(interval) + "." + which;
}

std::string DenoiserModel::router_name(const std::string& layer,
                                       const char* which) {
  return layer + ".router." + which;
}

void DenoiserModel::init_base(Rng& rng) {
  for (const auto& l : linear_layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim(l)));
    Matrix w(out_dim(l), in_dim(l));
    Matrix b(out_dim(l), 1);
    init_uniform(w, bound, rng);
    init_uniform(b, bound, rng);
    params_.add(l + ".W", std::move(w), true);
    params_.add(l + ".b", std::move(b), true);
    if (l == "in") {
      const double tb = 1.0 / std::sqrt(static_cast<double>(spec_.time_dim));
      Matrix tw(spec_.hidden, spec_.time_dim);
      Matrix tbias(spec_.hidden, 1);
      init_uniform(tw, tb, rng);
      init_uniform(tbias, tb, rng);
      params_.add("time.W", std::move(tw), true);
      params_.add("time.b", std::move(tbias), true);
      if (spec_.num_classes > 0) {
        Matrix e(spec_.num_classes, spec_.hidden);
        init_uniform(e, 1.0, rng);
        params_.add("cond.E", std::move(e), true);
      }
    }
  }
}

void DenoiserModel::attach_adapters(const AdapterSpec& spec, Rng& rng) {
  if (adapters_) throw std::logic_error("adapters already attached");
  for (const auto& l : adapted_layers())
    check_lora_rank(out_dim(l), in_dim(l), spec.rank);
  for (const auto& l : adapted_layers()) {
    for (int n : spec.scales.values()) {
      for (int i = 1; i <= n; ++i) {
        LoRAAdapter a =
            make_lora_adapter(out_dim(l), in_dim(l), spec.rank, spec.alpha, rng);
        params_.add(lora_name(l, n, i, "A"), std::move(a.A), false);
        params_.add(lora_name(l, n, i, "B"), std::move(a.B), false);
      }
    }
  }
  adapters_ = spec;
}

void DenoiserModel::attach_routers() {
  if (!adapters_ || adapters_->scales.size() < 2)
    throw std::logic_error("routers need adapters with at least two scales");
  if (routers_) throw std::logic_error("routers already attached");
  const std::size_t ctx = adapters_->scales.size() - 1;
  for (const auto& l : adapted_layers()) {
    Router r = make_router(in_dim(l), T_, ctx);
    params_.add(router_name(l, "F_weight"), std::move(r.F_weight), false);
    params_.add(router_name(l, "F_bias"), std::move(r.F_bias), false);
    params_.add(router_name(l, "E_table"), std::move(r.E_table), false);
  }
  routers_ = true;
}

std::vector<std::string> DenoiserModel::base_param_names() const {
  std::vector<std::string> out;
  for (const auto& n : params_.names())
    if (n.find(".lora.") == std::string::npos &&
        n.find(".router.") == std::string::npos)
      out.push_back(n);
  return out;
}

std::vector<std::string> DenoiserModel::adapter_param_names(
    std::optional<std::size_t> scale_id, int interval) const {
  std::vector<std::string> out;
  if (!adapters_) return out;
  for (const auto& l : adapted_layers()) {
    for (std::size_t j = 0; j < adapters_->scales.size(); ++j) {
      if (scale_id && *scale_id != j) continue;
      const int n = adapters_->scales[j];
      for (int i = 1; i <= n; ++i) {
        if (interval != 0 && interval != i) continue;
        out.push_back(lora_name(l, n, i, "A"));
        out.push_back(lora_name(l, n, i, "B"));
      }
    }
  }
  return out;
}

std::vector<std::string> DenoiserModel::router_param_names() const {
  std::vector<std::string> out;
  if (!routers_) return out;
  for (const auto& l : adapted_layers()) {
    out.push_back(router_name(l, "F_weight"));
    out.push_back(router_name(l, "F_bias"));
    out.push_back(router_name(l, "E_table"));
  }
  return out;
}

void DenoiserModel::check_mode(const Mode& mode) const {
  switch (mode.kind) {
    case ModeKind::base:
      return;
    case ModeKind::fostering:
      if (!adapters_)
        throw StageMismatch("fostering mode needs an expert bank");
      if (mode.scale >= adapters_->scales.size())
        throw StageMismatch("fostering scale id " + std::to_string(mode.scale) +
                            " outside the scale set");
      return;
    case ModeKind::assembled:
      if (!adapters_) throw StageMismatch("assembled mode needs an expert bank");
      if (adapters_->scales.size() > 1 && !routers_)
        throw StageMismatch("assembled mode needs routers");
      return;
  }
}

Matrix DenoiserModel::time_embedding(std::span<const int> t) const {
  const std::size_t half = spec_.time_dim / 2;
  Matrix e(spec_.time_dim, t.size());
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    for (std::size_t b = 0; b < t.size(); ++b) {
      const double arg = static_cast<double>(t[b]) * freq;
      e(i, b) = std::sin(arg);
      e(half + i, b) = std::cos(arg);
    }
  }
  return e;
}

ad::Var DenoiserModel::apply_layer(ad::Tape& tape, const std::string& layer,
                                   ad::Var x, std::span<const int> t,
                                   const Mode& mode, LayerTrace* trace) const {
  ad::Var y = tape.add_bias(tape.matmul(tape.param(params_, layer + ".W"), x),
                            tape.param(params_, layer + ".b"));
  if (trace) {
    trace->layer = layer;
    trace->input = x;
  }
  if (mode.kind == ModeKind::base || !adapters_ || !is_adapted(layer)) return y;

  const std::size_t batch = t.size();
  const double scaling =
      adapters_->alpha / static_cast<double>(adapters_->rank);

  // Adds the scale's expert term for every column, grouped by the interval
  // each column's timestep falls in. Returns the per-column interval ids.
  auto add_expert_term = [&](std::size_t j, std::optional<ad::Var> gate) {
    const int n = adapters_->scales[j];
    std::vector<int> idx(batch);
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t b = 0; b < batch; ++b) {
      idx[b] = interval_index(t[b], T_, n);
      groups[idx[b]].push_back(b);
    }
    for (const auto& [i, cols] : groups) {
      const bool whole = cols.size() == batch;
      ad::Var xs = whole ? x : tape.gather_cols(x, cols);
      ad::Var a = tape.param(params_, lora_name(layer, n, i, "A"));
      ad::Var bm = tape.param(params_, lora_name(layer, n, i, "B"));
      ad::Var d = tape.scale(tape.matmul(bm, tape.matmul(a, xs)), scaling);
      if (gate) d = tape.mul_cols(d, whole ? *gate : tape.gather_cols(*gate, cols));
      if (!whole) d = tape.scatter_cols(d, cols, batch);
      y = tape.add(y, d);
    }
    return idx;
  };

  if (mode.kind == ModeKind::fostering) {
    auto idx = add_expert_term(mode.scale, std::nullopt);
    if (trace) trace->expert = std::move(idx);
    return y;
  }

  auto core = add_expert_term(0, std::nullopt);
  if (trace) trace->expert = std::move(core);
  if (adapters_->scales.size() > 1) {
    ad::Var g = tape.add_bias(
        tape.matmul(tape.param(params_, router_name(layer, "F_weight")), x),
        tape.param(params_, router_name(layer, "F_bias")));
    g = tape.add(g, tape.rows_as_cols(
                        tape.param(params_, router_name(layer, "E_table")), t));
    if (trace) trace->gates = g;
    for (std::size_t j = 1; j < adapters_->scales.size(); ++j)
      add_expert_term(j, tape.row(g, j - 1));
  }
  return y;
}

ForwardResult DenoiserModel::forward(ad::Tape& tape, const Matrix& x_t,
                                     std::span<const int> t,
                                     std::span<const int> labels,
                                     const Mode& mode) const {
  check_mode(mode);
  if (x_t.rows() != spec_.data_dim || x_t.cols() != t.size())
    throw ShapeError("forward: x_t " + x_t.shape_str() + " for data_dim " +
                     std::to_string(spec_.data_dim) + " and " +
                     std::to_string(t.size()) + " timesteps");
  for (int ti : t)
    if (ti < 1 || ti > T_)
      throw RangeError("forward: timestep " + std::to_string(ti) +
                       " outside [1, " + std::to_string(T_) + "]");
  const bool use_labels = spec_.num_classes > 0 && !labels.empty();
  if (!labels.empty() && labels.size() != t.size())
    throw ShapeError("forward: label count does not match batch");

  ForwardResult res;
  auto check = [&](ad::Var v, const std::string& layer) {
    if (!all_finite(tape.value(v)))
      throw NumericalError("non-finite activation in layer '" + layer + "'");
  };

  ad::Var x = tape.constant(x_t);
  LayerTrace tr;
  ad::Var h = apply_layer(tape, "in", x, t, mode, &tr);
  res.layers.push_back(std::move(tr));
  ad::Var temb = tape.constant(time_embedding(t));
  h = tape.add(h, tape.add_bias(tape.matmul(tape.param(params_, "time.W"), temb),
                                tape.param(params_, "time.b")));
  if (use_labels) {
    std::vector<int> rows(labels.size());
    for (std::size_t b = 0; b < labels.size(); ++b) {
      if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= spec_.num_classes)
        throw RangeError("forward: label out of range");
      rows[b] = labels[b] + 1;
    }
    h = tape.add(h, tape.rows_as_cols(tape.param(params_, "cond.E"), rows));
  }
  h = tape.silu(h);
  check(h, "in");

  const std::size_t middle = (spec_.depth + 1) / 2;
  res.middle_hidden = h;
  for (std::size_t l = 1; l <= spec_.depth; ++l) {
    const std::string name = "h" + std::to_string(l);
    LayerTrace lt;
    h = tape.silu(apply_layer(tape, name, h, t, mode, &lt));
    res.layers.push_back(std::move(lt));
    check(h, name);
    if (l == middle) res.middle_hidden = h;
  }
  LayerTrace ot;
  res.output = apply_layer(tape, "out", h, t, mode, &ot);
  res.layers.push_back(std::move(ot));
  check(res.output, "out");
  return res;
}

Matrix DenoiserModel::predict(const Matrix& x_t, std::span<const int> t,
                              std::span<const int> labels,
                              const Mode& mode) const {
  ad::Tape tape(false);
  ForwardResult r = forward(tape, x_t, t, labels, mode);
  return tape.value(r.output);
}

AdaptedLinear DenoiserModel::layer(const std::string& name,
                                   const Mode& mode) const {
  AdaptedLinear out;
  out.name = name;
  out.W = params_.value(name + ".W");
  out.bias = params_.value(name + ".b");
  out.T = T_;
  out.mode = mode;
  if (adapters_ && is_adapted(name)) {
    ExpertBank bank;
    bank.scales = adapters_->scales;
    for (int n : adapters_->scales.values()) {
      std::vector<LoRAAdapter> row;
      for (int i = 1; i <= n; ++i)
        row.push_back(LoRAAdapter{params_.value(lora_name(name, n, i, "A")),
                                  params_.value(lora_name(name, n, i, "B")),
                                  adapters_->rank, adapters_->alpha});
      bank.adapters.push_back(std::move(row));
    }
    bank.frozen = !params_.trainable(lora_name(name, adapters_->scales[0], 1, "A"));
    out.bank = std::move(bank);
    if (routers_)
      out.router = Router{params_.value(router_name(name, "F_weight")),
                          params_.value(router_name(name, "F_bias")),
                          params_.value(router_name(name, "E_table"))};
  }
  return out;
}

Matrix DenoiserModel::predict_merged(const Matrix& x_col, int t,
                                     std::optional<int> label,
                                     const Mode& mode) const {
  check_mode(mode);
  if (x_col.rows() != spec_.data_dim || x_col.cols() != 1)
    throw ShapeError("predict_merged: expects a single data column");

  auto merged = [&](const std::string& name, const Matrix& z) {
    const AdaptedLinear l = layer(name, mode);
    Matrix w = l.W;
    if (l.bank && mode.kind == ModeKind::fostering)
      w = effective_weight_fostering(l, t, mode.scale);
    else if (l.bank && mode.kind == ModeKind::assembled)
      w = effective_weight_assembled(l, z, t);
    return matmul(w, z) + l.bias;
  };
  auto silu = [](Matrix m) {
    for (double& v : m.data()) v = v / (1.0 + std::exp(-v));
    return m;
  };

  const int ts[1] = {t};
  Matrix h = merged("in", x_col);
  h += matmul(params_.value("time.W"), time_embedding(ts)) + params_.value("time.b");
  if (spec_.num_classes > 0 && label) {
    const Matrix& e = params_.value("cond.E");
    for (std::size_t r = 0; r < spec_.hidden; ++r)
      h(r, 0) += e(static_cast<std::size_t>(*label), r);
  }
  h = silu(std::move(h));
  for (std::size_t l = 1; l <= spec_.depth; ++l)
    h = silu(merged("h" + std::to_string(l), h));
  return merged("out", h);
}

}  // namespace tsm
