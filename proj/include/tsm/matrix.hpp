// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tsm {

// Row-major dense matrix of doubles. Vectors are stored as n×1 columns;
// batches of vectors as dim×batch with one sample per column.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double value);
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_str() const;

  // Exact (bitwise for non-NaN) comparison of shape and values.
  friend bool operator==(const Matrix& a, const Matrix& b) = default;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Standard product; throws ShapeError on lhs.cols != rhs.rows.
Matrix matmul(const Matrix& lhs, const Matrix& rhs);
// lhsᵀ · rhs
Matrix matmul_tn(const Matrix& lhs, const Matrix& rhs);
// lhs · rhsᵀ
Matrix matmul_nt(const Matrix& lhs, const Matrix& rhs);

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);
Matrix transpose(const Matrix& m);

double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& m);
// Throws NumericalError naming `what` if any entry is NaN/Inf.
void require_finite(const Matrix& m, const std::string& what);

}  // namespace tsm
