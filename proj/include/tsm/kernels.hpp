// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

// Dense kernels in two flavours. `serial` is the reference kept for testing;
// `parallel` splits the outer loop across OpenMP threads. Each output element
// is reduced in the same order by both, so results are bit-identical.
//
// All buffers are row-major. `out` is overwritten.
namespace tsm::kernels {

namespace serial {

// out[m×n] = a[m×k] · b[k×n]
void gemm_nn(std::span<const double> a, std::span<const double> b,
             std::span<double> out, std::size_t m, std::size_t k,
             std::size_t n);
// out[m×n] = a[k×m]ᵀ · b[k×n]
void gemm_tn(std::span<const double> a, std::span<const double> b,
             std::span<double> out, std::size_t m, std::size_t k,
             std::size_t n);
// out[m×n] = a[m×k] · b[n×k]ᵀ
void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<double> out, std::size_t m, std::size_t k,
             std::size_t n);
// Σ_i Σ_j ‖a_i − b_j‖₂ over rows of a[na×dim] and b[nb×dim].
double pairwise_distance_sum(std::span<const double> a, std::size_t na,
                             std::span<const double> b, std::size_t nb,
                             std::size_t dim);

}  // namespace serial

namespace parallel {

void gemm_nn(std::span<const double> a, std::span<const double> b,
             std::span<double> out, std::size_t m, std::size_t k,
             std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b,
             std::span<double> out, std::size_t m, std::size_t k,
             std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b,
             std::span<double> out, std::size_t m, std::size_t k,
             std::size_t n);
double pairwise_distance_sum(std::span<const double> a, std::size_t na,
                             std::span<const double> b, std::size_t nb,
                             std::size_t dim);

}  // namespace parallel

// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace tsm::kernels
