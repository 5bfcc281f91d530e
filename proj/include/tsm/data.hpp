// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "tsm/matrix.hpp"
#include "tsm/rng.hpp"

namespace tsm {

// Synthetic data source generated on demand from a seed.
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual std::size_t dim() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual std::string describe() const = 0;
  // out is resized to dim × count, one sample per column.
  virtual void sample(Rng& rng, std::size_t count, Matrix& out,
                      std::vector<int>& labels) const = 0;
};

struct DataSpec {
  std::string kind = "gmm2d";  // gmm2d | raster8x8
  int modes = 8;               // gmm2d
  double radius = 4.0;         // gmm2d
  double sigma = 0.15;         // gmm2d per-mode std
  double rotation = 0.0;       // gmm2d angular offset, radians

  bool operator==(const DataSpec&) const = default;
};

// Equal-weight isotropic mixture with modes evenly spaced on a circle.
class GaussianMixture2D final : public Dataset {
 public:
  GaussianMixture2D(int modes, double radius, double sigma, double rotation);
  std::size_t dim() const override { return 2; }
  std::size_t num_classes() const override {
    return static_cast<std::size_t>(modes_);
  }
  std::string describe() const override;
  void sample(Rng& rng, std::size_t count, Matrix& out,
              std::vector<int>& labels) const override;
  std::vector<double> center(int mode) const;

 private:
  int modes_;
  double radius_;
  double sigma_;
  double rotation_;
};

// 8×8 images in [-1, 1]: a checkerboard (cell 1 or 2, either phase) plus one
// Gaussian blob at a random position. Label = checker cell/phase class (0..3).
class RasterBlobs final : public Dataset {
 public:
  std::size_t dim() const override { return 64; }
  std::size_t num_classes() const override { return 4; }
  std::string describe() const override { return "raster8x8"; }
  void sample(Rng& rng, std::size_t count, Matrix& out,
              std::vector<int>& labels) const override;
};

std::unique_ptr<Dataset> make_dataset(const DataSpec& spec);

}  // namespace tsm
