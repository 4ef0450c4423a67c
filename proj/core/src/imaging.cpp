// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/imaging.hpp"

#include <cmath>
#include <numbers>

#include "splatseg/error.hpp"

namespace splatseg {

const char *to_string(VignetteProfile profile) {
  return profile == VignetteProfile::Cos4 ? "cos4" : "flat";
}

VignetteProfile vignette_profile_from_string(const std::string &name) {
  if (name == "cos4") return VignetteProfile::Cos4;
  if (name == "flat") return VignetteProfile::Flat;
  fail(ErrorKind::Config, "unknown vignette profile '" + name + "' (expected cos4 or flat)");
}

double vignette_value(VignetteProfile profile, double rho) {
  if (profile == VignetteProfile::Flat) return 1.0;
  const double c = std::cos(rho * std::numbers::pi / 4.0);
  return c * c * c * c;
}

std::size_t FormationMasks::valid_count() const {
  std::size_t n = 0;
  for (auto v : valid.data) n += v;
  return n;
}

FormationMasks build_masks(const Camera &camera, const VignetteParams &params) {
  const double radius = params.valid_radius > 0.0 ? params.valid_radius : camera.valid_radius;
  require(std::isfinite(radius) && radius > 0.0, ErrorKind::InvalidParameter, "valid_radius must be positive");
  const double half_diag = 0.5 * std::hypot(camera.width, camera.height);
  require(radius <= half_diag + 1e-9, ErrorKind::InvalidParameter,
          "valid_radius " + std::to_string(radius) + " exceeds half the image diagonal");
  FormationMasks m{ImageF(camera.width, camera.height, 1), MaskImage(camera.width, camera.height, 1)};
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const double r = std::hypot(x - camera.cx, y - camera.cy);
      if (r <= radius) {
        m.valid.at(x, y) = 1;
        m.vignette.at(x, y) = vignette_value(params.profile, r / radius);
      }
    }
  }
  return m;
}

ImageF apply_formation(const ImageF &image, const FormationMasks &masks) {
  require_same_extent(image, masks.vignette, "apply_formation");
  ImageF out = image;
  const std::size_t c = static_cast<std::size_t>(image.channels);
  for (std::size_t p = 0; p < image.pixel_count(); ++p) {
    const double v = masks.vignette.data[p];
    for (std::size_t k = 0; k < c; ++k) out.data[p * c + k] *= v;
  }
  return out;
}

std::shared_ptr<const FormationMasks> MaskCache::get(const Camera &camera) {
  const Key key{camera.width, camera.height, camera.cx, camera.cy,
                params_.valid_radius > 0.0 ? params_.valid_radius : camera.valid_radius};
  std::lock_guard lock(mutex_);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  auto masks = std::make_shared<const FormationMasks>(build_masks(camera, params_));
  cache_.emplace(key, masks);
  return masks;
}

} // namespace splatseg
