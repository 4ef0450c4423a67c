// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splatseg/geometry.hpp"
#include "splatseg/image.hpp"

namespace splatseg {

/// Number of SH coefficients per color channel for degree L.
constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

enum class ParamGroup { Position, LogScale, Rotation, Opacity, Color, Feature };
inline constexpr ParamGroup kParamGroups[] = {ParamGroup::Position, ParamGroup::LogScale, ParamGroup::Rotation,
                                              ParamGroup::Opacity,  ParamGroup::Color,    ParamGroup::Feature};
const char *to_string(ParamGroup group);

/// The learnable scene. Flat per-group storage so optimizers and structural edits
/// treat every group uniformly.
class GaussianCloud {
public:
  GaussianCloud() = default;
  GaussianCloud(std::size_t count, int feature_dim, int sh_degree = 0);

  std::size_t size() const { return opacity_logit.size(); }
  bool empty() const { return size() == 0; }
  int feature_dim() const { return feature_dim_; }
  int sh_degree() const { return sh_degree_; }
  int color_stride() const { return 3 * sh_coeff_count(sh_degree_); }

  /// Elements per Gaussian in the given group.
  int stride(ParamGroup group) const;
  std::vector<double> &group(ParamGroup group);
  const std::vector<double> &group(ParamGroup group) const;

  Vec3 position_of(std::size_t i) const { return {position[3 * i], position[3 * i + 1], position[3 * i + 2]}; }
  Vec3 log_scale_of(std::size_t i) const { return {log_scale[3 * i], log_scale[3 * i + 1], log_scale[3 * i + 2]}; }
  Vec3 scale_of(std::size_t i) const { return log_scale_of(i).array().exp(); }
  Vec4 rotation_of(std::size_t i) const {
    return {rotation[4 * i], rotation[4 * i + 1], rotation[4 * i + 2], rotation[4 * i + 3]};
  }
  double opacity_of(std::size_t i) const { return logistic(opacity_logit[i]); }
  std::span<const double> color_of(std::size_t i) const {
    return {color.data() + i * color_stride(), static_cast<std::size_t>(color_stride())};
  }
  std::span<double> color_of(std::size_t i) { return {color.data() + i * color_stride(), static_cast<std::size_t>(color_stride())}; }
  std::span<const double> feature_of(std::size_t i) const {
    return {feature.data() + i * feature_dim_, static_cast<std::size_t>(feature_dim_)};
  }
  std::span<double> feature_of(std::size_t i) {
    return {feature.data() + i * feature_dim_, static_cast<std::size_t>(feature_dim_)};
  }

  void set_position(std::size_t i, const Vec3 &p);
  void set_log_scale(std::size_t i, const Vec3 &s);
  void set_rotation(std::size_t i, const Vec4 &q);
  /// Sets the DC color so that the view-independent color equals rgb.
  void set_base_color(std::size_t i, const Vec3 &rgb);

  void normalize_rotations();

  /// New cloud holding the listed Gaussians in the listed order.
  GaussianCloud select(std::span<const std::size_t> indices) const;
  /// Appends Gaussian i of other (feature dim and SH degree must match).
  void append(const GaussianCloud &other, std::size_t i);
  void append_all(const GaussianCloud &other);

  /// Same cloud with feature vectors widened or truncated to dim (new channels zero).
  GaussianCloud with_feature_dim(int dim) const;

  /// Checks array lengths, unit quaternions (1e-6), finite values. Throws Contract on violation.
  void validate() const;

  bool operator==(const GaussianCloud &) const = default;

  std::vector<double> position;
  std::vector<double> log_scale;
  std::vector<double> rotation;
  std::vector<double> opacity_logit;
  std::vector<double> color;
  std::vector<double> feature;

private:
  int feature_dim_ = 16;
  int sh_degree_ = 0;
};

/// Pinhole camera; pixel centers sit at integer coordinates.
struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 1, height = 1;
  Mat3 rotation = Mat3::Identity(); // world-to-camera
  Vec3 translation = Vec3::Zero();  // world-to-camera
  double valid_radius = 1.0;

  void validate() const;
  Vec3 center() const { return -rotation.transpose() * translation; }
  Mat4 world_to_camera() const;
  static Camera from_world_to_camera(const Mat4 &m, double fx, double fy, double cx, double cy, int width,
                                     int height, double valid_radius);
  /// Same pose and field of view at another resolution.
  Camera scaled(int new_width, int new_height) const;
  /// Camera at `eye` looking at `target` with world up `up` (camera y points down in the image).
  static Camera look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, double fx, double fy, double cx,
                        double cy, int width, int height, double valid_radius);

  bool operator==(const Camera &) const = default;
};

struct FrameTruth {
  LabelImage instance_labels; // consistent object ids, 0 = background
  MaskImage dynamic_mask;     // 1 where a dynamic object is visible
  bool operator==(const FrameTruth &) const = default;
};

struct Frame {
  int frame_id = 0;
  double timestamp = 0.0;
  Camera camera;
  ImageF image;     // H x W x 3 in [0,1]
  LabelImage mask;  // per-frame instance ids, 0 = unlabeled
  std::optional<FrameTruth> truth;

  void validate() const;
  bool operator==(const Frame &) const = default;
};

enum class Split { Train, Validation, Novel };
const char *to_string(Split split);
Split split_from_string(const std::string &name);
inline bool is_seen(Split s) { return s != Split::Novel; }

struct ObjectRecord {
  int id = 0;
  std::string shape;
  bool dynamic = false;
  std::vector<Box3> boxes; // ground-truth box per frame (same order as Dataset::frames)
  bool operator==(const ObjectRecord &) const = default;
};

struct SeedPoints {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;
  bool operator==(const SeedPoints &) const = default;
};

struct Dataset {
  std::vector<Frame> frames;
  std::vector<Split> split;
  std::vector<ObjectRecord> objects;
  SeedPoints seed_points;

  std::vector<std::size_t> indices_of(Split s) const;
  std::vector<std::size_t> seen_indices() const;
  const ObjectRecord *find_object(int id) const;
  bool has_truth() const;
  /// Radius of the bounding sphere of the camera centers, times 1.1.
  double scene_extent() const;
  void validate() const;
  bool operator==(const Dataset &) const = default;
};

} // namespace splatseg
