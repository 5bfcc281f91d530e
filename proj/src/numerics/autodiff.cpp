// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/autodiff.hpp"

#include <cmath>

#include "tsm/errors.hpp"

namespace tsm::ad {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var Tape::push(Matrix value, bool requires_grad,
               std::function<void(Tape&, const Node&)> backprop) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = record_ && requires_grad;
  if (n.requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

bool Tape::any_grad(std::initializer_list<Var> vs) const {
  if (!record_) return false;
  for (Var v : vs)
    if (nodes_[v.id].requires_grad) return true;
  return false;
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (n.grad.empty())
    n.grad = g;
  else
    n.grad += g;
}

const Matrix& Tape::value(Var v) const { return nodes_.at(v.id).value(); }

Var Tape::param(const ParamStore& store, const std::string& name) {
  Node n;
  n.external = &store.value(name);
  n.requires_grad = record_ && store.trainable(name);
  n.param_name = name;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, {}); }

Var Tape::matmul(Var a, Var b) {
  Matrix out = tsm::matmul(value(a), value(b));
  return push(std::move(out), any_grad({a, b}),
              [a, b](Tape& t, const Node& self) {
                if (t.requires_grad(a))
                  t.accumulate(a, matmul_nt(self.grad, t.value(b)));
                if (t.requires_grad(b))
                  t.accumulate(b, matmul_tn(t.value(a), self.grad));
              });
}

Var Tape::add(Var a, Var b) {
  Matrix out = value(a) + value(b);
  return push(std::move(out), any_grad({a, b}),
              [a, b](Tape& t, const Node& self) {
                t.accumulate(a, self.grad);
                t.accumulate(b, self.grad);
              });
}

Var Tape::add_bias(Var a, Var bias) {
  const Matrix& av = value(a);
  const Matrix& bv = value(bias);
  if (bv.cols() != 1 || bv.rows() != av.rows())
    throw ShapeError("add_bias: " + av.shape_str() + " + " + bv.shape_str());
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(r, 0);
  return push(std::move(out), any_grad({a, bias}),
              [a, bias](Tape& t, const Node& self) {
                t.accumulate(a, self.grad);
                if (t.requires_grad(bias)) {
                  const Matrix& g = self.grad;
                  Matrix gb(g.rows(), 1);
                  for (std::size_t r = 0; r < g.rows(); ++r) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < g.cols(); ++c) acc += g(r, c);
                    gb(r, 0) = acc;
                  }
                  t.accumulate(bias, gb);
                }
              });
}

Var Tape::scale(Var a, double s) {
  Matrix out = s * value(a);
  return push(std::move(out), any_grad({a}), [a, s](Tape& t, const Node& self) {
    t.accumulate(a, s * self.grad);
  });
}

Var Tape::silu(Var a) {
  const Matrix& x = value(a);
  Matrix out(x.rows(), x.cols());
  auto xs = x.data();
  auto os = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) os[i] = xs[i] * sigmoid(xs[i]);
  return push(std::move(out), any_grad({a}), [a](Tape& t, const Node& self) {
    const Matrix& x = t.value(a);
    Matrix g(x.rows(), x.cols());
    auto xs = x.data();
    auto gs = g.data();
    auto up = self.grad.data();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double s = sigmoid(xs[i]);
      gs[i] = up[i] * s * (1.0 + xs[i] * (1.0 - s));
    }
    t.accumulate(a, g);
  });
}

Var Tape::mul_cols(Var a, Var g) {
  const Matrix& av = value(a);
  const Matrix& gv = value(g);
  if (gv.rows() != 1 || gv.cols() != av.cols())
    throw ShapeError("mul_cols: " + av.shape_str() + " by " + gv.shape_str());
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= gv(0, c);
  return push(std::move(out), any_grad({a, g}),
              [a, g](Tape& t, const Node& self) {
                const Matrix& up = self.grad;
                if (t.requires_grad(a)) {
                  const Matrix& gv = t.value(g);
                  Matrix ga = up;
                  for (std::size_t r = 0; r < ga.rows(); ++r)
                    for (std::size_t c = 0; c < ga.cols(); ++c)
                      ga(r, c) *= gv(0, c);
                  t.accumulate(a, ga);
                }
                if (t.requires_grad(g)) {
                  const Matrix& av = t.value(a);
                  Matrix gg(1, av.cols());
                  for (std::size_t r = 0; r < av.rows(); ++r)
                    for (std::size_t c = 0; c < av.cols(); ++c)
                      gg(0, c) += up(r, c) * av(r, c);
                  t.accumulate(g, gg);
                }
              });
}

Var Tape::gather_cols(Var a, std::span<const std::size_t> idx) {
  const Matrix& av = value(a);
  Matrix out(av.rows(), idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) {
    if (idx[c] >= av.cols()) throw RangeError("gather_cols: column out of range");
    for (std::size_t r = 0; r < av.rows(); ++r) out(r, c) = av(r, idx[c]);
  }
  std::vector<std::size_t> cols(idx.begin(), idx.end());
  return push(std::move(out), any_grad({a}),
              [a, cols = std::move(cols)](Tape& t, const Node& self) {
                const Matrix& av = t.value(a);
                Matrix ga(av.rows(), av.cols());
                for (std::size_t c = 0; c < cols.size(); ++c)
                  for (std::size_t r = 0; r < ga.rows(); ++r)
                    ga(r, cols[c]) += self.grad(r, c);
                t.accumulate(a, ga);
              });
}

Var Tape::scatter_cols(Var a, std::span<const std::size_t> idx,
                       std::size_t total) {
  const Matrix& av = value(a);
  if (av.cols() != idx.size())
    throw ShapeError("scatter_cols: index count mismatch");
  Matrix out(av.rows(), total);
  for (std::size_t c = 0; c < idx.size(); ++c) {
    if (idx[c] >= total) throw RangeError("scatter_cols: column out of range");
    for (std::size_t r = 0; r < av.rows(); ++r) out(r, idx[c]) = av(r, c);
  }
  std::vector<std::size_t> cols(idx.begin(), idx.end());
  return push(std::move(out), any_grad({a}),
              [a, cols = std::move(cols)](Tape& t, const Node& self) {
                Matrix ga(self.grad.rows(), cols.size());
                for (std::size_t c = 0; c < cols.size(); ++c)
                  for (std::size_t r = 0; r < ga.rows(); ++r)
                    ga(r, c) = self.grad(r, cols[c]);
                t.accumulate(a, ga);
              });
}

Var Tape::rows_as_cols(Var table, std::span<const int> rows) {
  const Matrix& tv = value(table);
  Matrix out(tv.cols(), rows.size());
  for (std::size_t b = 0; b < rows.size(); ++b) {
    if (rows[b] < 1 || static_cast<std::size_t>(rows[b]) > tv.rows())
      throw RangeError("row " + std::to_string(rows[b]) + " outside [1, " +
                       std::to_string(tv.rows()) + "]");
    const std::size_t r = static_cast<std::size_t>(rows[b] - 1);
    for (std::size_t j = 0; j < tv.cols(); ++j) out(j, b) = tv(r, j);
  }
  std::vector<int> rs(rows.begin(), rows.end());
  return push(std::move(out), any_grad({table}),
              [table, rs = std::move(rs)](Tape& t, const Node& self) {
                const Matrix& tv = t.value(table);
                Matrix gt(tv.rows(), tv.cols());
                for (std::size_t b = 0; b < rs.size(); ++b) {
                  const std::size_t r = static_cast<std::size_t>(rs[b] - 1);
                  for (std::size_t j = 0; j < tv.cols(); ++j)
                    gt(r, j) += self.grad(j, b);
                }
                t.accumulate(table, gt);
              });
}

Var Tape::row(Var a, std::size_t j) {
  const Matrix& av = value(a);
  if (j >= av.rows()) throw RangeError("row: index out of range");
  Matrix out(1, av.cols());
  for (std::size_t c = 0; c < av.cols(); ++c) out(0, c) = av(j, c);
  return push(std::move(out), any_grad({a}), [a, j](Tape& t, const Node& self) {
    const Matrix& av = t.value(a);
    Matrix ga(av.rows(), av.cols());
    for (std::size_t c = 0; c < av.cols(); ++c) ga(j, c) = self.grad(0, c);
    t.accumulate(a, ga);
  });
}

Var Tape::sq_err_mean(Var pred, const Matrix& target) {
  const Matrix& p = value(pred);
  if (!p.same_shape(target))
    throw ShapeError("sq_err_mean: " + p.shape_str() + " vs " +
                     target.shape_str());
  const double inv_batch = 1.0 / static_cast<double>(p.cols());
  double acc = 0.0;
  auto ps = p.data();
  auto ts = target.data();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double d = ps[i] - ts[i];
    acc += d * d;
  }
  Matrix out(1, 1, acc * inv_batch);
  return push(std::move(out), any_grad({pred}),
              [pred, target, inv_batch](Tape& t, const Node& self) {
                const Matrix& p = t.value(pred);
                Matrix g = p - target;
                g *= 2.0 * inv_batch * self.grad(0, 0);
                t.accumulate(pred, g);
              });
}

Var Tape::sum_sq(Var a) {
  double acc = 0.0;
  for (double v : value(a).data()) acc += v * v;
  return push(Matrix(1, 1, acc), any_grad({a}),
              [a](Tape& t, const Node& self) {
                t.accumulate(a, (2.0 * self.grad(0, 0)) * t.value(a));
              });
}

Var Tape::dot(Var a, const Matrix& coeffs) {
  const Matrix& av = value(a);
  if (!av.same_shape(coeffs))
    throw ShapeError("dot: " + av.shape_str() + " vs " + coeffs.shape_str());
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i)
    acc += av.data()[i] * coeffs.data()[i];
  return push(Matrix(1, 1, acc), any_grad({a}),
              [a, coeffs](Tape& t, const Node& self) {
                t.accumulate(a, self.grad(0, 0) * coeffs);
              });
}

void Tape::backward(Var loss, ParamStore& store) {
  if (!record_) throw std::logic_error("backward on a non-recording tape");
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw ShapeError("backward: loss must be 1x1, got " + lv.shape_str());
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad = Matrix(1, 1, 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backprop) {
      n.backprop(*this, n);
    } else if (!n.param_name.empty()) {
      store.accumulate_grad(n.param_name, n.grad);
    }
  }
}

}  // namespace tsm::ad
