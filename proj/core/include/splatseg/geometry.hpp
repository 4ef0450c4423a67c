// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

namespace splatseg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d; // quaternions are stored w, x, y, z
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p) - std::log1p(-p); }

/// Rotation matrix of the normalized quaternion. Zero-norm input throws InvalidParameter.
Mat3 quat_to_rotation(const Vec4 &q);

/// Chain rule of quat_to_rotation: maps dL/dR to dL/dq for the raw (unnormalized) q.
Vec4 quat_to_rotation_backward(const Vec4 &q, const Mat3 &grad_rotation);

/// Sigma = R diag(exp(log_scale))^2 R^T.
Mat3 covariance3d(const Vec3 &log_scale, const Vec4 &q);

struct Covariance3dGrad {
  Vec3 log_scale;
  Vec4 rotation;
};

/// Gradient of covariance3d given dL/dSigma (symmetrized internally).
Covariance3dGrad covariance3d_backward(const Vec3 &log_scale, const Vec4 &q, const Mat3 &grad_cov);

/// Axis-aligned box in world coordinates.
struct Box3 {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 center() const { return 0.5 * (min + max); }
  double volume() const {
    const Vec3 e = (max - min).cwiseMax(0.0);
    return e.x() * e.y() * e.z();
  }
  bool valid() const { return (min.array() <= max.array()).all(); }
  bool operator==(const Box3 &) const = default;
};

} // namespace splatseg
