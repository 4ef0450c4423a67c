// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "splatseg/image.hpp"
#include "splatseg/sh.hpp"
#include "splatseg/types.hpp"

namespace splatseg {

struct RasterSettings {
  double near_plane = 0.01;
  double dilation = 0.3;            // px^2 added to the projected covariance
  double cull_extent = 1.3;         // cull means farther than this multiple of the half image size
  double max_alpha = 0.99;          // cap on opacity * density
  double alpha_min = 1.0 / 255.0;   // splats below this at a pixel are skipped; 0 gives full support
  double min_transmittance = 1e-4;  // compositing stops before transmittance drops below this
  Vec3 background = Vec3::Constant(0.5);
  int tile_size = 16;
};

enum class Channels : unsigned { Rgb = 1, Feature = 2, Both = 3 };
inline bool has_rgb(Channels c) { return (static_cast<unsigned>(c) & 1u) != 0; }
inline bool has_feature(Channels c) { return (static_cast<unsigned>(c) & 2u) != 0; }

struct Projected2D {
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity(); // includes the dilation
  double depth = 0.0;
  std::size_t gaussian_index = 0;
};

/// EWA projection. Returns nullopt when the Gaussian is culled.
std::optional<Projected2D> project_gaussian(const GaussianCloud &cloud, std::size_t index, const Camera &camera,
                                            const RasterSettings &settings = {});

/// Per-visible-Gaussian data retained for compositing and backward.
struct SplatRecord {
  std::size_t gaussian = 0;
  Vec2 mean2d = Vec2::Zero();
  Vec3 conic = Vec3::Zero(); // (A, B, C): power = -0.5 (A dx^2 + C dy^2) - B dx dy
  Mat2 cov2d = Mat2::Identity();
  double depth = 0.0;
  double opacity = 0.0;      // activated
  ShColor color;
  Vec3 view_dir = Vec3::Zero();
  int radius = 0;            // 3-sigma pixel radius
  int support = 0;           // pixel half-extent beyond which the splat is below alpha_min
};

struct RenderOutput {
  int width = 0;
  int height = 0;
  int feature_dim = 0;
  Channels channels = Channels::Rgb;
  Camera camera;
  RasterSettings settings;

  ImageF rgb;     // H x W x 3 (empty when not requested)
  ImageF feature; // H x W x d (empty when not requested)
  ImageF alpha;   // H x W x 1

  // Retained for backward.
  std::vector<SplatRecord> splats;        // depth-sorted (depth, then Gaussian index)
  std::vector<std::uint32_t> tile_offsets; // tiles + 1 prefix offsets into tile_entries
  std::vector<std::uint32_t> tile_entries; // indices into splats, depth ordered per tile
  std::vector<double> final_transmittance; // per pixel
  std::vector<std::uint32_t> entries_used; // per pixel, entries of its tile list processed

  int tiles_x() const { return (width + settings.tile_size - 1) / settings.tile_size; }
  int tiles_y() const { return (height + settings.tile_size - 1) / settings.tile_size; }
};

/// Front-to-back compositing of depth-sorted splats over 16x16 tiles.
RenderOutput rasterize_forward(const GaussianCloud &cloud, const Camera &camera, Channels channels,
                               const RasterSettings &settings = {});

/// Renders feature channels at a reduced resolution of the same view.
RenderOutput rasterize_features(const GaussianCloud &cloud, const Camera &camera, int feature_width,
                                int feature_height, const RasterSettings &settings = {});

/// Reference compositor: per pixel, walks every projected splat in depth order, no tiling.
/// Kept as the oracle for the tiled path.
RenderOutput rasterize_reference(const GaussianCloud &cloud, const Camera &camera, Channels channels,
                                 const RasterSettings &settings = {});

struct ParamGradients {
  std::vector<double> position;
  std::vector<double> log_scale;
  std::vector<double> rotation;
  std::vector<double> opacity_logit;
  std::vector<double> color;
  std::vector<double> feature;
  std::vector<double> view_grad_norm; // summed NDC positional gradient norms of contributing passes
  std::vector<std::uint8_t> visible;  // rendered in at least one pass
  std::vector<int> radius;            // max 3-sigma pixel radius over passes

  ParamGradients() = default;
  explicit ParamGradients(const GaussianCloud &cloud);

  std::size_t size() const { return opacity_logit.size(); }
  std::vector<double> &group(ParamGroup g);
  const std::vector<double> &group(ParamGroup g) const;
  ParamGradients &operator+=(const ParamGradients &other);
  void scale(double factor);
};

/// Analytic gradients of the composited images. Either gradient image may be null (treated as zero).
/// view_grad_scale multiplies the NDC positional gradient before its norm is recorded.
ParamGradients rasterize_backward(const GaussianCloud &cloud, const RenderOutput &output, const ImageF *grad_rgb,
                                  const ImageF *grad_feature, double view_grad_scale = 1.0);

} // namespace splatseg
