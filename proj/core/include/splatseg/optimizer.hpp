// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "splatseg/rasterizer.hpp"
#include "splatseg/types.hpp"

namespace splatseg {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moments and step count of one parameter block.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  explicit AdamMoments(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
  bool operator==(const AdamMoments &) const = default;
};

/// One bias-corrected Adam update of params in place.
void adam_update(std::span<double> params, std::span<const double> grads, AdamMoments &state, double lr,
                 const AdamHyper &hyper);

/// Adam over the six parameter groups of a GaussianCloud. Each group keeps its own moments;
/// structural edits remap them (new Gaussians start with zero moments).
class GaussianOptimizer {
public:
  GaussianOptimizer() = default;
  GaussianOptimizer(const GaussianCloud &cloud, AdamHyper hyper);

  void step(GaussianCloud &cloud, const ParamGradients &grads, const std::array<double, 6> &learning_rates);

  /// Keeps moments of the listed ancestors (one entry per Gaussian of the new cloud); entries flagged
  /// in fresh get zero moments.
  void remap(const GaussianCloud &cloud, std::span<const std::size_t> ancestors, std::span<const std::uint8_t> fresh);

  AdamMoments &group(ParamGroup g) { return groups_[static_cast<std::size_t>(g)]; }
  const AdamMoments &group(ParamGroup g) const { return groups_[static_cast<std::size_t>(g)]; }
  const AdamHyper &hyper() const { return hyper_; }
  void set_hyper(const AdamHyper &h) { hyper_ = h; }

  bool operator==(const GaussianOptimizer &) const = default;

private:
  AdamHyper hyper_;
  std::array<AdamMoments, 6> groups_;
};

inline bool operator==(const AdamHyper &a, const AdamHyper &b) {
  return a.beta1 == b.beta1 && a.beta2 == b.beta2 && a.eps == b.eps;
}

} // namespace splatseg
