// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tsm/matrix.hpp"
#include "tsm/param_store.hpp"

namespace tsm::ad {

// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

// Matrix-valued reverse-mode tape. Nodes are appended in evaluation order and
// backward() walks them in reverse. Parameter leaves reference ParamStore
// values without copying; the store must outlive the tape and stay unmodified
// until backward() returns.
//
// A node needs a gradient iff some input does; subgraphs built only from
// frozen parameters and constants cost nothing on the backward pass.
class Tape {
 public:
  // With record=false no backward closures are kept (inference only).
  explicit Tape(bool record = true) : record_(record) {}

  Var param(const ParamStore& store, const std::string& name);
  Var constant(Matrix value);

  const Matrix& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  // a[d×B] + bias[d×1] broadcast over columns.
  Var add_bias(Var a, Var bias);
  Var scale(Var a, double s);
  // x·σ(x), elementwise.
  Var silu(Var a);
  // Column b of a[d×B] multiplied by g(0, b).
  Var mul_cols(Var a, Var g);
  // Columns idx of a, in order.
  Var gather_cols(Var a, std::span<const std::size_t> idx);
  // d×total result with column idx[c] = a column c, zeros elsewhere.
  Var scatter_cols(Var a, std::span<const std::size_t> idx, std::size_t total);
  // table[R×m] → m×B with column b = table row (rows[b] − 1). Rows are 1-based.
  Var rows_as_cols(Var table, std::span<const int> rows);
  // Row j of a as 1×B.
  Var row(Var a, std::size_t j);

  // Σ (pred − target)² / pred.cols(): per-sample squared error, batch mean.
  Var sq_err_mean(Var pred, const Matrix& target);
  Var sum_sq(Var a);
  Var dot(Var a, const Matrix& coeffs);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients of trainable
  // parameter leaves into `store`. `loss` must be 1×1.
  void backward(Var loss, ParamStore& store);

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    std::string param_name;
    std::function<void(Tape&, const Node&)> backprop;

    const Matrix& value() const { return external ? *external : owned; }
  };

  Var push(Matrix value, bool requires_grad,
           std::function<void(Tape&, const Node&)> backprop);
  void accumulate(Var v, const Matrix& g);
  bool any_grad(std::initializer_list<Var> vs) const;

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace tsm::ad
