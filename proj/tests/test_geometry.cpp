// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <random>

#include "splatseg/error.hpp"
#include "splatseg/geometry.hpp"
#include "splatseg/sh.hpp"
#include "test_support.hpp"

using namespace splatseg;
using splatseg::testing::central_difference;

TEST(Geometry, QuaternionMatchesEigen) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int t = 0; t < 20; ++t) {
    const Vec4 q(n(rng), n(rng), n(rng), n(rng));
    const Eigen::Quaterniond eq(q[0], q[1], q[2], q[3]);
    EXPECT_LT((quat_to_rotation(q) - eq.normalized().toRotationMatrix()).norm(), 1e-12);
  }
}

TEST(Geometry, ZeroQuaternionThrows) {
  EXPECT_THROW(quat_to_rotation(Vec4::Zero()), Error);
}

TEST(Geometry, CovarianceIsSymmetricPositiveDefinite) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (int t = 0; t < 50; ++t) {
    const Mat3 s = covariance3d(Vec3(n(rng), n(rng), n(rng)), Vec4(n(rng), n(rng), n(rng), n(rng)));
    EXPECT_LT((s - s.transpose()).norm(), 1e-12 * s.norm());
    Eigen::SelfAdjointEigenSolver<Mat3> eig(s);
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Geometry, CovarianceBackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n;
  Vec3 ls(-0.3, 0.1, -0.8);
  Vec4 q(0.7, -0.2, 0.4, 0.3);
  Mat3 g;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) g(r, c) = n(rng);
  auto loss = [&] { return (covariance3d(ls, q).array() * g.array()).sum(); };
  const Covariance3dGrad an = covariance3d_backward(ls, q, g);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(an.log_scale[k], central_difference(ls[k], 1e-6, loss), 1e-7);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(an.rotation[k], central_difference(q[k], 1e-6, loss), 1e-7);
}

class ShDegree : public ::testing::TestWithParam<int> {};

TEST_P(ShDegree, BackwardMatchesFiniteDifferences) {
  const int degree = GetParam();
  std::mt19937_64 rng(11 + degree);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  std::vector<double> coeffs(3 * sh_coeff_count(degree));
  for (auto &c : coeffs) c = u(rng);
  Vec3 dir = Vec3(0.3, -0.5, 0.8).normalized();
  const Vec3 g(0.7, -1.1, 0.4);
  auto loss = [&] { return eval_sh(degree, coeffs, dir.normalized()).rgb.dot(g); };
  const ShColor fwd = eval_sh(degree, coeffs, dir);
  std::vector<double> gc(coeffs.size(), 0.0);
  const Vec3 gdir = eval_sh_backward(degree, coeffs, dir, fwd, g, gc);
  for (std::size_t k = 0; k < coeffs.size(); ++k) EXPECT_NEAR(gc[k], central_difference(coeffs[k], 1e-6, loss), 1e-8);
  // Tangential part of the direction gradient (the caller projects through the normalization).
  const Vec3 tangential = gdir - dir * dir.dot(gdir);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(tangential[k], central_difference(dir[k], 1e-6, loss), 1e-7);
}

INSTANTIATE_TEST_SUITE_P(Degrees, ShDegree, ::testing::Values(0, 1, 2, 3));

TEST(Sh, DcMapsToBaseColor) {
  std::vector<double> c{(0.3 - 0.5) / kShC0, (0.6 - 0.5) / kShC0, (0.9 - 0.5) / kShC0};
  const ShColor out = eval_sh(0, c, Vec3::UnitZ());
  EXPECT_NEAR(out.rgb[0], 0.3, 1e-14);
  EXPECT_NEAR(out.rgb[1], 0.6, 1e-14);
  EXPECT_NEAR(out.rgb[2], 0.9, 1e-14);
}
