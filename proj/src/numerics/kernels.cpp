// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/kernels.hpp"

#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tsm::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;

inline void row_gemm_nn(const double* a, const double* b, double* out,
                        std::size_t i, std::size_t k, std::size_t n) {
  double* orow = out + i * n;
  for (std::size_t j = 0; j < n; ++j) orow[j] = 0.0;
  const double* arow = a + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
  }
}

inline void row_gemm_tn(const double* a, const double* b, double* out,
                        std::size_t i, std::size_t m, std::size_t k,
                        std::size_t n) {
  double* orow = out + i * n;
  for (std::size_t j = 0; j < n; ++j) orow[j] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p * m + i];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
  }
}

inline void row_gemm_nt(const double* a, const double* b, double* out,
                        std::size_t i, std::size_t k, std::size_t n) {
  const double* arow = a + i * k;
  double* orow = out + i * n;
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
    orow[j] = acc;
  }
}

inline double row_distance_sum(const double* a, const double* b,
                               std::size_t i, std::size_t nb,
                               std::size_t dim) {
  const double* arow = a + i * dim;
  double acc = 0.0;
  for (std::size_t j = 0; j < nb; ++j) {
    const double* brow = b + j * dim;
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = arow[d] - brow[d];
      sq += diff * diff;
    }
    acc += std::sqrt(sq);
  }
  return acc;
}

}  // namespace

namespace serial {

void gemm_nn(std::span<const double> a, std::span<const double> b,
             std::span<double> out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    row_gemm_nn(a.data(), b.data(), out.data(), i, k, n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b,
             std::span<double> out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    row_gemm_tn(a.data(), b.data(), out.data(), i, m, k, n);
}

void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<double> out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    row_gemm_nt(a.data(), b.data(), out.data(), i, k, n);
}

double pairwise_distance_sum(std::span<const double> a, std::size_t na,
                             std::span<const double> b, std::size_t nb,
                             std::size_t dim) {
  double total = 0.0;
  for (std::size_t i = 0; i < na; ++i)
    total += row_distance_sum(a.data(), b.data(), i, nb, dim);
  return total;
}

}  // namespace serial

namespace parallel {

void gemm_nn(std::span<const double> a, std::span<const double> b,
             std::span<double> out, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    row_gemm_nn(a.data(), b.data(), out.data(), static_cast<std::size_t>(i),
                k, n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b,
             std::span<double> out, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    row_gemm_tn(a.data(), b.data(), out.data(), static_cast<std::size_t>(i),
                m, k, n);
}

void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<double> out, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    row_gemm_nt(a.data(), b.data(), out.data(), static_cast<std::size_t>(i),
                k, n);
}

double pairwise_distance_sum(std::span<const double> a, std::size_t na,
                             std::span<const double> b, std::size_t nb,
                             std::size_t dim) {
  // Per-row partials, then an ordered serial reduction: same rounding as the
  // reference regardless of thread count.
  std::vector<double> partial(na, 0.0);
  const auto rows = static_cast<std::ptrdiff_t>(na);
#pragma omp parallel for schedule(static) if (na * nb * dim > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    partial[static_cast<std::size_t>(i)] = row_distance_sum(
        a.data(), b.data(), static_cast<std::size_t>(i), nb, dim);
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace tsm::kernels
