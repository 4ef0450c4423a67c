// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "splatseg/error.hpp"
#include "splatseg/parallel.hpp"
#include "splatseg/rasterizer.hpp"
#include "test_support.hpp"

using namespace splatseg;
using namespace splatseg::testing;

namespace {

double max_abs_diff(const ImageF &a, const ImageF &b) {
  EXPECT_TRUE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t k = 0; k < a.data.size(); ++k) m = std::max(m, std::abs(a.data[k] - b.data[k]));
  return m;
}

} // namespace

TEST(Rasterizer, EmptyCloudRendersBackground) {
  GaussianCloud cloud(0, 4);
  const RenderOutput out = rasterize_forward(cloud, front_camera(), Channels::Both);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      EXPECT_EQ(out.rgb.at(x, y, 1), 0.5);
      EXPECT_EQ(out.alpha.at(x, y), 0.0);
      EXPECT_EQ(out.feature.at(x, y, 3), 0.0);
    }
  }
}

TEST(Rasterizer, BehindCameraIsCulled) {
  GaussianCloud cloud = random_cloud(1, 2, 0, 1);
  cloud.set_position(0, Vec3(0, 0, -5.0));
  EXPECT_FALSE(project_gaussian(cloud, 0, front_camera()).has_value());
  EXPECT_TRUE(rasterize_forward(cloud, front_camera(), Channels::Rgb).splats.empty());
}

TEST(Rasterizer, FarOffscreenMeanIsCulled) {
  GaussianCloud cloud = random_cloud(1, 2, 0, 1);
  cloud.set_position(0, Vec3(4.0, 0, 0));
  EXPECT_FALSE(project_gaussian(cloud, 0, front_camera()).has_value());
}

TEST(Rasterizer, ProjectionMatchesPinhole) {
  GaussianCloud cloud = random_cloud(1, 2, 0, 2);
  const Camera cam = front_camera();
  const auto proj = project_gaussian(cloud, 0, cam);
  ASSERT_TRUE(proj.has_value());
  const Vec3 pc = cam.rotation * cloud.position_of(0) + cam.translation;
  EXPECT_NEAR(proj->mean2d.x(), cam.fx * pc.x() / pc.z() + cam.cx, 1e-12);
  EXPECT_NEAR(proj->mean2d.y(), cam.fy * pc.y() / pc.z() + cam.cy, 1e-12);
  EXPECT_NEAR(proj->depth, pc.z(), 1e-12);
}

class TiledVsReference : public ::testing::TestWithParam<std::tuple<int, double>> {};

TEST_P(TiledVsReference, Agree) {
  const auto [tile, alpha_min] = GetParam();
  RasterSettings s;
  s.tile_size = tile;
  s.alpha_min = alpha_min;
  const GaussianCloud cloud = random_cloud(60, 5, 2, 17);
  const Camera cam = front_camera(37, 29);
  const RenderOutput a = rasterize_forward(cloud, cam, Channels::Both, s);
  const RenderOutput b = rasterize_reference(cloud, cam, Channels::Both, s);
  EXPECT_LT(max_abs_diff(a.rgb, b.rgb), 1e-12);
  EXPECT_LT(max_abs_diff(a.feature, b.feature), 1e-12);
  EXPECT_LT(max_abs_diff(a.alpha, b.alpha), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Settings, TiledVsReference,
                         ::testing::Combine(::testing::Values(1, 7, 16, 64), ::testing::Values(0.0, 1.0 / 255.0, 0.05)));

TEST(Rasterizer, AlphaAndTransmittanceStayInRange) {
  const GaussianCloud cloud = random_cloud(200, 0, 0, 23);
  const RenderOutput out = rasterize_forward(cloud, front_camera(), Channels::Rgb);
  for (std::size_t p = 0; p < out.final_transmittance.size(); ++p) {
    EXPECT_GE(out.alpha.data[p], 0.0);
    EXPECT_LE(out.alpha.data[p], 1.0);
    EXPECT_GE(out.final_transmittance[p], out.settings.min_transmittance);
  }
}

TEST(Rasterizer, DeterministicAcrossWorkerCounts) {
  const GaussianCloud cloud = random_cloud(80, 4, 1, 29);
  const Camera cam = front_camera(40, 30);
  const ImageF g_rgb = random_image(40, 30, 3, 1);
  const ImageF g_feat = random_image(40, 30, 4, 2);
  const int saved = worker_count();
  set_worker_count(1);
  const RenderOutput a = rasterize_forward(cloud, cam, Channels::Both);
  const ParamGradients ga = rasterize_backward(cloud, a, &g_rgb, &g_feat);
  set_worker_count(3);
  const RenderOutput b = rasterize_forward(cloud, cam, Channels::Both);
  const ParamGradients gb = rasterize_backward(cloud, b, &g_rgb, &g_feat);
  set_worker_count(saved);
  EXPECT_EQ(a.rgb, b.rgb);
  EXPECT_EQ(a.feature, b.feature);
  for (ParamGroup g : kParamGroups) EXPECT_EQ(ga.group(g), gb.group(g)) << to_string(g);
  EXPECT_EQ(ga.view_grad_norm, gb.view_grad_norm);
}

TEST(Rasterizer, NonFiniteParameterIsNumericFault) {
  GaussianCloud cloud = random_cloud(3, 2, 0, 31);
  cloud.log_scale[4] = std::nan("");
  try {
    rasterize_forward(cloud, front_camera(), Channels::Rgb);
    FAIL() << "expected a numeric fault";
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::NumericFault);
  }
}

class RasterGradient : public ::testing::TestWithParam<int> {};

// Smooth configuration (no alpha cutoff) so central differences are meaningful.
TEST_P(RasterGradient, MatchesFiniteDifferences) {
  const int sh_degree = GetParam();
  RasterSettings s;
  s.alpha_min = 0.0;
  s.min_transmittance = 0.0;
  const int w = 20, h = 16;
  GaussianCloud cloud = random_cloud(12, 3, sh_degree, 41 + sh_degree);
  const Camera cam = front_camera(w, h, 18.0);
  const ImageF g_rgb = random_image(w, h, 3, 5);
  const ImageF g_feat = random_image(w, h, 3, 6);
  auto loss = [&] {
    const RenderOutput o = rasterize_forward(cloud, cam, Channels::Both, s);
    return dot(o.rgb, g_rgb) + dot(o.feature, g_feat);
  };
  const RenderOutput out = rasterize_forward(cloud, cam, Channels::Both, s);
  const ParamGradients grads = rasterize_backward(cloud, out, &g_rgb, &g_feat);
  for (ParamGroup g : kParamGroups) {
    auto &param = cloud.group(g);
    const auto &an = grads.group(g);
    double worst = 0.0, scale = 1e-3;
    for (std::size_t k = 0; k < param.size(); ++k) {
      const double fd = central_difference(param[k], 1e-6, loss);
      worst = std::max(worst, std::abs(fd - an[k]));
      scale = std::max(scale, std::abs(fd));
    }
    EXPECT_LT(worst / scale, 1e-5) << to_string(g);
  }
}

INSTANTIATE_TEST_SUITE_P(ShDegrees, RasterGradient, ::testing::Values(0, 1, 3));

TEST(Rasterizer, BackwardRejectsWrongGradientShape) {
  const GaussianCloud cloud = random_cloud(4, 2, 0, 3);
  const RenderOutput out = rasterize_forward(cloud, front_camera(), Channels::Rgb);
  const ImageF bad(5, 5, 3);
  EXPECT_THROW(rasterize_backward(cloud, out, &bad, nullptr), Error);
}
