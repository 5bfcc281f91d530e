// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tsm {

// Dimension or shape disagreement between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Timestep, interval id or other index outside its valid range.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// NaN or Inf produced where finite values are required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training loss exceeded the divergence guard.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A frozen tensor changed, or a stage touched parameters it does not own.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Checkpoint stage (or its scale set) incompatible with the requested command.
class StageMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed configuration or command-line usage.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace tsm
