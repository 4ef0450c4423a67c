// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>

#include "splatseg/image.hpp"
#include "splatseg/types.hpp"

namespace splatseg {

enum class VignetteProfile { Cos4, Flat };
const char *to_string(VignetteProfile profile);
VignetteProfile vignette_profile_from_string(const std::string &name);

struct VignetteParams {
  VignetteProfile profile = VignetteProfile::Cos4;
  double valid_radius = 0.0; // <= 0: use the camera's valid_radius
};

/// Radial falloff v(rho) for rho in [0, 1].
double vignette_value(VignetteProfile profile, double rho);

struct FormationMasks {
  ImageF vignette;  // H x W x 1
  MaskImage valid;  // H x W x 1, 0 or 1

  std::size_t valid_count() const;
};

FormationMasks build_masks(const Camera &camera, const VignetteParams &params = {});

/// image * V, broadcast over channels.
ImageF apply_formation(const ImageF &image, const FormationMasks &masks);

/// Masks keyed by camera geometry; thread-safe.
class MaskCache {
public:
  explicit MaskCache(VignetteParams params = {}) : params_(params) {}
  std::shared_ptr<const FormationMasks> get(const Camera &camera);
  const VignetteParams &params() const { return params_; }

private:
  using Key = std::tuple<int, int, double, double, double>;
  VignetteParams params_;
  std::mutex mutex_;
  std::map<Key, std::shared_ptr<const FormationMasks>> cache_;
};

} // namespace splatseg
