// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/densify.hpp"

#include <algorithm>
#include <cmath>

#include "splatseg/error.hpp"

namespace splatseg {

void DensifyStats::reset(std::size_t n) {
  grad_accum.assign(n, 0.0);
  position_accum.assign(3 * n, 0.0);
  count.assign(n, 0);
  max_radius.assign(n, 0);
}

void accumulate(DensifyStats &stats, const ParamGradients &grads) {
  require(stats.size() == grads.size(), ErrorKind::Contract, "densify accumulate: size mismatch");
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (!grads.visible[i]) continue;
    stats.grad_accum[i] += grads.view_grad_norm[i];
    for (int c = 0; c < 3; ++c) stats.position_accum[3 * i + c] += grads.position[3 * i + c];
    ++stats.count[i];
    stats.max_radius[i] = std::max(stats.max_radius[i], grads.radius[i]);
  }
}

DensifyResult densify_and_prune(const GaussianCloud &cloud, DensifyStats &stats, const DensifyThresholds &t,
                                double scene_extent, std::mt19937_64 &rng, bool allow_grow) {
  require(stats.size() == cloud.size(), ErrorKind::Contract, "densify: stats do not match the cloud");
  require(scene_extent > 0.0, ErrorKind::InvalidParameter, "densify: scene extent must be positive");
  require(t.split_divisor > 0.0 && t.split_children >= 1, ErrorKind::InvalidParameter, "densify: bad split settings");
  const double dense_limit = t.dense_fraction * scene_extent;
  const double huge_limit = t.huge_fraction * scene_extent;

  DensifyResult r;
  r.cloud = GaussianCloud(0, cloud.feature_dim(), cloud.sh_degree());
  auto push = [&](std::size_t src, bool is_fresh) {
    r.cloud.append(cloud, src);
    r.ancestor.push_back(src);
    r.fresh.push_back(is_fresh ? 1 : 0);
  };

  std::normal_distribution<double> normal;
  std::vector<std::size_t> clones;
  std::vector<std::size_t> splits;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const bool hot = allow_grow && stats.count[i] > 0 && stats.mean_grad(i) >= t.grad_threshold;
    const double max_scale = cloud.scale_of(i).maxCoeff();
    if (hot && max_scale > dense_limit) {
      splits.push_back(i);
      continue;
    }
    push(i, false);
    if (hot) clones.push_back(i);
  }
  // Clones step one sigma down the accumulated position gradient.
  for (std::size_t i : clones) {
    push(i, true);
    const Vec3 g(stats.position_accum[3 * i], stats.position_accum[3 * i + 1], stats.position_accum[3 * i + 2]);
    const double n = g.norm();
    if (n > 0.0) r.cloud.set_position(r.cloud.size() - 1, cloud.position_of(i) - cloud.scale_of(i).maxCoeff() * g / n);
    ++r.cloned;
  }
  for (std::size_t i : splits) {
    const Vec3 scale = cloud.scale_of(i);
    const Mat3 rot = quat_to_rotation(cloud.rotation_of(i));
    for (int c = 0; c < t.split_children; ++c) {
      push(i, true);
      const Vec3 z(normal(rng), normal(rng), normal(rng));
      const std::size_t k = r.cloud.size() - 1;
      r.cloud.set_position(k, cloud.position_of(i) + rot * scale.cwiseProduct(z));
      r.cloud.set_log_scale(k, cloud.log_scale_of(i).array() - std::log(t.split_divisor));
    }
    ++r.split;
  }

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < r.cloud.size(); ++i) {
    const bool transparent = r.cloud.opacity_of(i) < t.prune_opacity;
    const bool huge = r.cloud.scale_of(i).maxCoeff() > huge_limit;
    if (!transparent && !huge) keep.push_back(i);
  }
  r.pruned = r.cloud.size() - keep.size();
  if (keep.empty()) fail(ErrorKind::DegenerateScene, "densify_and_prune removed every Gaussian");
  if (keep.size() != r.cloud.size()) {
    std::vector<std::size_t> ancestor;
    std::vector<std::uint8_t> fresh;
    for (std::size_t i : keep) {
      ancestor.push_back(r.ancestor[i]);
      fresh.push_back(r.fresh[i]);
    }
    r.cloud = r.cloud.select(keep);
    r.ancestor = std::move(ancestor);
    r.fresh = std::move(fresh);
  }
  stats.reset(r.cloud.size());
  return r;
}

void reset_opacity(GaussianCloud &cloud, double max_opacity) {
  require(max_opacity > 0.0 && max_opacity < 1.0, ErrorKind::InvalidParameter, "reset_opacity: bad cap");
  const double cap = logit(max_opacity);
  for (double &v : cloud.opacity_logit) v = std::min(v, cap);
}

} // namespace splatseg
