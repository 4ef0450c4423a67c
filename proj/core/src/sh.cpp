// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/sh.hpp"

#include <array>

namespace splatseg {
namespace {

constexpr double kC1 = 0.4886025119029199;
constexpr std::array<double, 5> kC2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                       -1.0925484305920792, 0.5462742152960396};
constexpr std::array<double, 7> kC3 = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                                       0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                       -0.5900435899266435};

// Real SH basis values and their partials w.r.t. (x, y, z), up to degree 3.
struct Basis {
  std::array<double, 16> value{};
  std::array<Vec3, 16> grad{};
};

Basis basis(int degree, const Vec3 &d) {
  Basis b;
  const double x = d.x(), y = d.y(), z = d.z();
  b.value[0] = kShC0;
  b.grad[0] = Vec3::Zero();
  if (degree < 1) return b;
  b.value[1] = -kC1 * y;
  b.grad[1] = {0.0, -kC1, 0.0};
  b.value[2] = kC1 * z;
  b.grad[2] = {0.0, 0.0, kC1};
  b.value[3] = -kC1 * x;
  b.grad[3] = {-kC1, 0.0, 0.0};
  if (degree < 2) return b;
  const double xx = x * x, yy = y * y, zz = z * z;
  b.value[4] = kC2[0] * x * y;
  b.grad[4] = {kC2[0] * y, kC2[0] * x, 0.0};
  b.value[5] = kC2[1] * y * z;
  b.grad[5] = {0.0, kC2[1] * z, kC2[1] * y};
  b.value[6] = kC2[2] * (2.0 * zz - xx - yy);
  b.grad[6] = {-2.0 * kC2[2] * x, -2.0 * kC2[2] * y, 4.0 * kC2[2] * z};
  b.value[7] = kC2[3] * x * z;
  b.grad[7] = {kC2[3] * z, 0.0, kC2[3] * x};
  b.value[8] = kC2[4] * (xx - yy);
  b.grad[8] = {2.0 * kC2[4] * x, -2.0 * kC2[4] * y, 0.0};
  if (degree < 3) return b;
  b.value[9] = kC3[0] * y * (3.0 * xx - yy);
  b.grad[9] = {kC3[0] * 6.0 * x * y, kC3[0] * (3.0 * xx - 3.0 * yy), 0.0};
  b.value[10] = kC3[1] * x * y * z;
  b.grad[10] = {kC3[1] * y * z, kC3[1] * x * z, kC3[1] * x * y};
  b.value[11] = kC3[2] * y * (4.0 * zz - xx - yy);
  b.grad[11] = {kC3[2] * (-2.0 * x * y), kC3[2] * (4.0 * zz - xx - 3.0 * yy), kC3[2] * 8.0 * y * z};
  b.value[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  b.grad[12] = {kC3[3] * (-6.0 * x * z), kC3[3] * (-6.0 * y * z), kC3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy)};
  b.value[13] = kC3[4] * x * (4.0 * zz - xx - yy);
  b.grad[13] = {kC3[4] * (4.0 * zz - 3.0 * xx - yy), kC3[4] * (-2.0 * x * y), kC3[4] * 8.0 * x * z};
  b.value[14] = kC3[5] * z * (xx - yy);
  b.grad[14] = {kC3[5] * 2.0 * x * z, kC3[5] * (-2.0 * y * z), kC3[5] * (xx - yy)};
  b.value[15] = kC3[6] * x * (xx - 3.0 * yy);
  b.grad[15] = {kC3[6] * (3.0 * xx - 3.0 * yy), kC3[6] * (-6.0 * x * y), 0.0};
  return b;
}

} // namespace

ShColor eval_sh(int degree, std::span<const double> coeffs, const Vec3 &dir) {
  const int k_count = (degree + 1) * (degree + 1);
  ShColor out;
  if (degree == 0) {
    for (int c = 0; c < 3; ++c) out.rgb[c] = kShC0 * coeffs[c] + 0.5;
  } else {
    const Basis b = basis(degree, dir);
    out.rgb = Vec3::Constant(0.5);
    for (int k = 0; k < k_count; ++k) {
      for (int c = 0; c < 3; ++c) out.rgb[c] += b.value[k] * coeffs[3 * k + c];
    }
  }
  for (int c = 0; c < 3; ++c) {
    if (out.rgb[c] < 0.0) {
      out.rgb[c] = 0.0;
      out.clamped[c] = true;
    }
  }
  return out;
}

Vec3 eval_sh_backward(int degree, std::span<const double> coeffs, const Vec3 &dir, const ShColor &forward,
                      const Vec3 &grad_rgb, std::span<double> grad_coeffs) {
  Vec3 g = grad_rgb;
  for (int c = 0; c < 3; ++c) {
    if (forward.clamped[c]) g[c] = 0.0;
  }
  if (degree == 0) {
    for (int c = 0; c < 3; ++c) grad_coeffs[c] += kShC0 * g[c];
    return Vec3::Zero();
  }
  const int k_count = (degree + 1) * (degree + 1);
  const Basis b = basis(degree, dir);
  Vec3 d_dir = Vec3::Zero();
  for (int k = 0; k < k_count; ++k) {
    double dot = 0.0;
    for (int c = 0; c < 3; ++c) {
      grad_coeffs[3 * k + c] += b.value[k] * g[c];
      dot += coeffs[3 * k + c] * g[c];
    }
    d_dir += dot * b.grad[k];
  }
  return d_dir;
}

} // namespace splatseg
