// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>

#include "splatseg/geometry.hpp"

namespace splatseg {

/// Zeroth-order SH basis constant; DC coefficient d maps to color kShC0 * d + 0.5.
inline constexpr double kShC0 = 0.28209479177387814;

struct ShColor {
  Vec3 rgb;
  std::array<bool, 3> clamped{}; // channel clamped at zero (gradient blocked)
};

/// View-dependent color from SH coefficients laid out [coefficient][channel]; dir must be unit length.
ShColor eval_sh(int degree, std::span<const double> coeffs, const Vec3 &dir);

/// Accumulates dL/dcoeffs into grad_coeffs and returns dL/ddir for the unit direction.
Vec3 eval_sh_backward(int degree, std::span<const double> coeffs, const Vec3 &dir, const ShColor &forward,
                      const Vec3 &grad_rgb, std::span<double> grad_coeffs);

} // namespace splatseg
