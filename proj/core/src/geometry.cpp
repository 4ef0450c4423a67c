// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/geometry.hpp"

#include <cmath>

#include "splatseg/error.hpp"

namespace splatseg {
namespace {

Vec4 normalized_or_throw(const Vec4 &q) {
  const double n = q.norm();
  require(n > 0.0 && std::isfinite(n), ErrorKind::InvalidParameter, "quaternion has zero or non-finite norm");
  return q / n;
}

} // namespace

Mat3 quat_to_rotation(const Vec4 &q_raw) {
  const Vec4 q = normalized_or_throw(q_raw);
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Vec4 quat_to_rotation_backward(const Vec4 &q_raw, const Mat3 &g) {
  const double n = q_raw.norm();
  const Vec4 q = normalized_or_throw(q_raw);
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 dq;
  dq[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  dq[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                 w * g(2, 1) - 2.0 * x * g(2, 2));
  dq[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                 z * g(2, 1) - 2.0 * y * g(2, 2));
  dq[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) + y * g(1, 2) +
                 x * g(2, 0) + y * g(2, 1));
  // Project through the normalization q / |q|.
  return (dq - q * q.dot(dq)) / n;
}

Mat3 covariance3d(const Vec3 &log_scale, const Vec4 &q) {
  const Mat3 m = quat_to_rotation(q) * log_scale.array().exp().matrix().asDiagonal();
  return m * m.transpose();
}

Covariance3dGrad covariance3d_backward(const Vec3 &log_scale, const Vec4 &q, const Mat3 &grad_cov) {
  const Mat3 r = quat_to_rotation(q);
  const Vec3 s = log_scale.array().exp();
  const Mat3 m = r * s.asDiagonal();
  const Mat3 g = 0.5 * (grad_cov + grad_cov.transpose());
  const Mat3 dm = 2.0 * g * m;
  Covariance3dGrad out;
  Mat3 dr;
  for (int j = 0; j < 3; ++j) {
    dr.col(j) = dm.col(j) * s[j];
    out.log_scale[j] = dm.col(j).dot(r.col(j)) * s[j];
  }
  out.rotation = quat_to_rotation_backward(q, dr);
  return out;
}

} // namespace splatseg
