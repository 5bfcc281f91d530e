// Copyright 2026 The tsm Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tsm/data.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "tsm/errors.hpp"

namespace tsm {

GaussianMixture2D::GaussianMixture2D(int modes, double radius, double sigma,
                                     double rotation)
    : modes_(modes), radius_(radius), sigma_(sigma), rotation_(rotation) {
  if (modes < 1) throw ConfigError("gmm2d: modes must be >= 1");
  if (!(sigma > 0.0)) throw ConfigError("gmm2d: sigma must be > 0");
}

std::string GaussianMixture2D::describe() const {
  std::ostringstream os;
  os << "gmm2d(modes=" << modes_ << ", radius=" << radius_
     << ", sigma=" << sigma_ << ", rotation=" << rotation_ << ")";
  return os.str();
}

std::vector<double> GaussianMixture2D::center(int mode) const {
  const double angle = 2.0 * std::numbers::pi * mode / modes_ + rotation_;
  return {radius_ * std::cos(angle), radius_ * std::sin(angle)};
}

void GaussianMixture2D::sample(Rng& rng, std::size_t count, Matrix& out,
                               std::vector<int>& labels) const {
  out = Matrix(2, count);
  labels.resize(count);
  for (std::size_t b = 0; b < count; ++b) {
    const int k = static_cast<int>(rng.uniform_int(0, modes_ - 1));
    const auto c = center(k);
    labels[b] = k;
    out(0, b) = c[0] + sigma_ * rng.normal();
    out(1, b) = c[1] + sigma_ * rng.normal();
  }
}

void RasterBlobs::sample(Rng& rng, std::size_t count, Matrix& out,
                         std::vector<int>& labels) const {
  out = Matrix(64, count);
  labels.resize(count);
  for (std::size_t b = 0; b < count; ++b) {
    const int cls = static_cast<int>(rng.uniform_int(0, 3));
    const int cell = cls < 2 ? 1 : 2;
    const int phase = cls % 2;
    const double cy = rng.uniform() * 7.0;
    const double cx = rng.uniform() * 7.0;
    labels[b] = cls;
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        const int parity = ((y / cell) + (x / cell) + phase) % 2;
        const double checker = parity ? 0.4 : -0.4;
        const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        const double blob = 0.6 * std::exp(-r2 / (2.0 * 1.2 * 1.2));
        const double v = checker + blob + 0.05 * rng.normal();
        out(static_cast<std::size_t>(y * 8 + x), b) =
            std::max(-1.0, std::min(1.0, v));
      }
    }
  }
}

std::unique_ptr<Dataset> make_dataset(const DataSpec& spec) {
  if (spec.kind == "gmm2d")
    return std::make_unique<GaussianMixture2D>(spec.modes, spec.radius,
                                               spec.sigma, spec.rotation);
  if (spec.kind == "raster8x8") return std::make_unique<RasterBlobs>();
  throw ConfigError("unknown dataset kind '" + spec.kind + "'");
}

}  // namespace tsm
