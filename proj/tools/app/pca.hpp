// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "splatseg/image.hpp"

namespace splatseg::app {

/// Three-component PCA of feature pixels, fitted once and reused so colors stay stable across frames.
class FeaturePca {
public:
  FeaturePca() = default;
  /// Fits on up to max_samples pixels drawn evenly from the images (deterministic).
  static FeaturePca fit(const std::vector<ImageF> &features, std::size_t max_samples = 20000);

  /// H x W x 3 in [0, 1]; components scaled by the 1st/99th percentiles of the fit set.
  ImageF colorize(const ImageF &features) const;

  int dim() const { return static_cast<int>(mean_.size()); }

private:
  std::vector<double> mean_;
  std::vector<double> basis_; // 3 x dim, row-major
  double lo_[3] = {0, 0, 0};
  double hi_[3] = {1, 1, 1};
};

} // namespace splatseg::app
