// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "splatseg/rasterizer.hpp"
#include "splatseg/types.hpp"

namespace splatseg {

/// Running view-space gradient statistics between densification events.
struct DensifyStats {
  std::vector<double> grad_accum;     // summed view-space gradient norms
  std::vector<double> position_accum; // 3 per Gaussian, summed world-space position gradients
  std::vector<std::int64_t> count;    // iterations in which the Gaussian was visible
  std::vector<int> max_radius;

  DensifyStats() = default;
  explicit DensifyStats(std::size_t n) { reset(n); }
  void reset(std::size_t n);
  std::size_t size() const { return count.size(); }
  double mean_grad(std::size_t i) const { return count[i] > 0 ? grad_accum[i] / static_cast<double>(count[i]) : 0.0; }
  bool operator==(const DensifyStats &) const = default;
};

/// Adds one iteration's gradients (the per-pass view-space norms are already summed in grads).
void accumulate(DensifyStats &stats, const ParamGradients &grads);

struct DensifyThresholds {
  double grad_threshold = 2e-4;   // mean view-space gradient norm (NDC units)
  double prune_opacity = 0.005;
  double split_divisor = 1.6;
  double dense_fraction = 0.01;   // clone/split boundary, fraction of scene extent
  double huge_fraction = 0.1;     // prune boundary for world size, fraction of scene extent
  int split_children = 2;

  bool operator==(const DensifyThresholds &) const = default;
};

struct DensifyResult {
  GaussianCloud cloud;
  std::vector<std::size_t> ancestor; // per new Gaussian, its index in the input cloud
  std::vector<std::uint8_t> fresh;   // 1 for clones and split children
  std::size_t cloned = 0;
  std::size_t split = 0;
  std::size_t pruned = 0;
};

/// Clone small high-gradient Gaussians, split large ones, then prune transparent or huge ones.
/// Stats are reset to the new size.
DensifyResult densify_and_prune(const GaussianCloud &cloud, DensifyStats &stats, const DensifyThresholds &thresholds,
                                double scene_extent, std::mt19937_64 &rng, bool allow_grow = true);

/// Caps every opacity at max_opacity.
void reset_opacity(GaussianCloud &cloud, double max_opacity = 0.01);

} // namespace splatseg
