// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "tsm/errors.hpp"
#include "tsm/kernels.hpp"

namespace tsm {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(rows) + "x" +
                     std::to_string(cols));
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1,
                std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Matrix::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix& Matrix::operator+=(const Matrix& other) {
  if (!same_shape(other))
    throw ShapeError("add: " + shape_str() + " vs " + other.shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  if (!same_shape(other))
    throw ShapeError("sub: " + shape_str() + " vs " + other.shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix matmul(const Matrix& lhs, const Matrix& rhs) {
  if (lhs.cols() != rhs.rows())
    throw ShapeError("matmul: " + lhs.shape_str() + " · " + rhs.shape_str());
  Matrix out(lhs.rows(), rhs.cols());
  kernels::parallel::gemm_nn(lhs.data(), rhs.data(), out.data(), lhs.rows(),
                             lhs.cols(), rhs.cols());
  return out;
}

Matrix matmul_tn(const Matrix& lhs, const Matrix& rhs) {
  if (lhs.rows() != rhs.rows())
    throw ShapeError("matmul_tn: " + lhs.shape_str() + "ᵀ · " +
                     rhs.shape_str());
  Matrix out(lhs.cols(), rhs.cols());
  kernels::parallel::gemm_tn(lhs.data(), rhs.data(), out.data(), lhs.cols(),
                             lhs.rows(), rhs.cols());
  return out;
}

Matrix matmul_nt(const Matrix& lhs, const Matrix& rhs) {
  if (lhs.cols() != rhs.cols())
    throw ShapeError("matmul_nt: " + lhs.shape_str() + " · " +
                     rhs.shape_str() + "ᵀ");
  Matrix out(lhs.rows(), rhs.rows());
  kernels::parallel::gemm_nt(lhs.data(), rhs.data(), out.data(), lhs.rows(),
                             lhs.cols(), rhs.rows());
  return out;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw ShapeError("max_abs_diff: " + a.shape_str() + " vs " + b.shape_str());
  double worst = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i)
    worst = std::max(worst, std::abs(da[i] - db[i]));
  return worst;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(),
                     [](double v) { return std::isfinite(v); });
}

void require_finite(const Matrix& m, const std::string& what) {
  if (!all_finite(m)) throw NumericalError("non-finite values in " + what);
}

}  // namespace tsm
