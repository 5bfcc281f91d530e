// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Serial reference vs OpenMP kernels at the sizes the model and the energy
// distance actually hit. Run with OMP_NUM_THREADS set to compare scaling.

#include <benchmark/benchmark.h>

#include <vector>

#include "tsm/kernels.hpp"
#include "tsm/rng.hpp"

namespace {

namespace k = tsm::kernels;

std::vector<double> random_buffer(std::size_t n, std::uint64_t stream) {
  tsm::Rng rng(7, stream);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// 64×64 weights against a batch of columns, the hidden-layer shape.
template <auto Gemm>
void BM_gemm_nn(benchmark::State& state) {
  const std::size_t m = 64, kk = 64, n = static_cast<std::size_t>(state.range(0));
  const auto a = random_buffer(m * kk, 1);
  const auto b = random_buffer(kk * n, 2);
  std::vector<double> out(m * n);
  for (auto _ : state) {
    Gemm(a, b, out, m, kk, n);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(m * kk * n));
}

template <auto Gemm>
void BM_gemm_nt(benchmark::State& state) {
  const std::size_t m = 64, kk = static_cast<std::size_t>(state.range(0)), n = 64;
  const auto a = random_buffer(m * kk, 3);
  const auto b = random_buffer(n * kk, 4);
  std::vector<double> out(m * n);
  for (auto _ : state) {
    Gemm(a, b, out, m, kk, n);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(m * kk * n));
}

template <auto Pairwise>
void BM_pairwise(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0)), dim = 2;
  const auto a = random_buffer(n * dim, 5);
  const auto b = random_buffer(n * dim, 6);
  for (auto _ : state) benchmark::DoNotOptimize(Pairwise(a, n, b, n, dim));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n));
}

}  // namespace

BENCHMARK(BM_gemm_nn<k::serial::gemm_nn>)->Arg(64)->Arg(512)->Arg(2000);
BENCHMARK(BM_gemm_nn<k::parallel::gemm_nn>)->Arg(64)->Arg(512)->Arg(2000);
BENCHMARK(BM_gemm_nt<k::serial::gemm_nt>)->Arg(64)->Arg(512)->Arg(2000);
BENCHMARK(BM_gemm_nt<k::parallel::gemm_nt>)->Arg(64)->Arg(512)->Arg(2000);
BENCHMARK(BM_pairwise<k::serial::pairwise_distance_sum>)->Arg(500)->Arg(2000);
BENCHMARK(BM_pairwise<k::parallel::pairwise_distance_sum>)->Arg(500)->Arg(2000);

BENCHMARK_MAIN();
