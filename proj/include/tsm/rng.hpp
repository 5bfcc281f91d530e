// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>

namespace tsm {

// Philox4x32-10 counter-based generator. The full state is (seed, stream,
// counter, lane), so it serializes to four integers and any stream can be
// resumed exactly.
class Rng {
 public:
  struct State {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::uint64_t counter = 0;
    std::uint32_t lane = 4;  // next unused word of the current block; 4 = empty
  };

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);
  explicit Rng(const State& state);

  // Independent generator keyed by the same seed on another stream.
  Rng fork(std::uint64_t stream) const { return Rng(state_.seed, stream); }

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on the open interval (0, 1).
  double uniform_open();
  // Standard normal by Box–Muller (one output per two uniforms, no cache).
  double normal();
  // Uniform integer in [lo, hi] without modulo bias.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  State state() const;

 private:
  void refill();

  State state_;
  std::array<std::uint32_t, 4> block_{};
};

}  // namespace tsm
