// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/types.hpp"

#include <algorithm>
#include <cmath>

#include "splatseg/sh.hpp"

namespace splatseg {

const char *to_string(ParamGroup group) {
  switch (group) {
  case ParamGroup::Position: return "position";
  case ParamGroup::LogScale: return "log_scale";
  case ParamGroup::Rotation: return "rotation";
  case ParamGroup::Opacity: return "opacity";
  case ParamGroup::Color: return "color";
  case ParamGroup::Feature: return "feature";
  }
  return "unknown";
}

GaussianCloud::GaussianCloud(std::size_t count, int feature_dim, int sh_degree)
    : feature_dim_(feature_dim), sh_degree_(sh_degree) {
  require(feature_dim >= 0, ErrorKind::InvalidParameter, "feature dimension must be non-negative");
  require(sh_degree >= 0 && sh_degree <= 3, ErrorKind::InvalidParameter, "SH degree must be in [0, 3]");
  position.assign(3 * count, 0.0);
  log_scale.assign(3 * count, 0.0);
  rotation.assign(4 * count, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    rotation[4 * i] = 1.0;
  }
  opacity_logit.assign(count, 0.0);
  color.assign(count * color_stride(), 0.0);
  feature.assign(count * feature_dim, 0.0);
}

int GaussianCloud::stride(ParamGroup g) const {
  switch (g) {
  case ParamGroup::Position: return 3;
  case ParamGroup::LogScale: return 3;
  case ParamGroup::Rotation: return 4;
  case ParamGroup::Opacity: return 1;
  case ParamGroup::Color: return color_stride();
  case ParamGroup::Feature: return feature_dim_;
  }
  return 0;
}

std::vector<double> &GaussianCloud::group(ParamGroup g) {
  return const_cast<std::vector<double> &>(static_cast<const GaussianCloud *>(this)->group(g));
}

const std::vector<double> &GaussianCloud::group(ParamGroup g) const {
  switch (g) {
  case ParamGroup::Position: return position;
  case ParamGroup::LogScale: return log_scale;
  case ParamGroup::Rotation: return rotation;
  case ParamGroup::Opacity: return opacity_logit;
  case ParamGroup::Color: return color;
  case ParamGroup::Feature: return feature;
  }
  return position;
}

void GaussianCloud::set_position(std::size_t i, const Vec3 &p) {
  for (int k = 0; k < 3; ++k) position[3 * i + k] = p[k];
}

void GaussianCloud::set_log_scale(std::size_t i, const Vec3 &s) {
  for (int k = 0; k < 3; ++k) log_scale[3 * i + k] = s[k];
}

void GaussianCloud::set_rotation(std::size_t i, const Vec4 &q) {
  for (int k = 0; k < 4; ++k) rotation[4 * i + k] = q[k];
}

void GaussianCloud::set_base_color(std::size_t i, const Vec3 &rgb) {
  auto c = color_of(i);
  std::fill(c.begin(), c.end(), 0.0);
  for (int k = 0; k < 3; ++k) c[k] = (rgb[k] - 0.5) / kShC0;
}

void GaussianCloud::normalize_rotations() {
  for (std::size_t i = 0; i < size(); ++i) {
    const Vec4 q = rotation_of(i);
    const double n = q.norm();
    require(n > 0.0 && std::isfinite(n), ErrorKind::NumericFault,
            "Gaussian " + std::to_string(i) + " has a degenerate quaternion");
    set_rotation(i, q / n);
  }
}

GaussianCloud GaussianCloud::select(std::span<const std::size_t> indices) const {
  GaussianCloud out(0, feature_dim_, sh_degree_);
  for (std::size_t idx : indices) {
    require(idx < size(), ErrorKind::Contract, "select: index " + std::to_string(idx) + " out of range");
    out.append(*this, idx);
  }
  return out;
}

void GaussianCloud::append(const GaussianCloud &other, std::size_t i) {
  require(other.feature_dim_ == feature_dim_ && other.sh_degree_ == sh_degree_, ErrorKind::Contract,
          "append: incompatible clouds");
  for (ParamGroup g : kParamGroups) {
    const int s = stride(g);
    const auto &src = other.group(g);
    auto &dst = group(g);
    dst.insert(dst.end(), src.begin() + static_cast<std::ptrdiff_t>(i * s),
               src.begin() + static_cast<std::ptrdiff_t>((i + 1) * s));
  }
}

void GaussianCloud::append_all(const GaussianCloud &other) {
  for (std::size_t i = 0; i < other.size(); ++i) append(other, i);
}

GaussianCloud GaussianCloud::with_feature_dim(int dim) const {
  GaussianCloud out = *this;
  out.feature_dim_ = dim;
  out.feature.assign(size() * dim, 0.0);
  const int keep = std::min(dim, feature_dim_);
  for (std::size_t i = 0; i < size(); ++i) {
    for (int k = 0; k < keep; ++k) out.feature[i * dim + k] = feature[i * feature_dim_ + k];
  }
  return out;
}

void GaussianCloud::validate() const {
  const std::size_t n = size();
  require(position.size() == 3 * n && log_scale.size() == 3 * n && rotation.size() == 4 * n &&
              color.size() == n * color_stride() && feature.size() == n * feature_dim_,
          ErrorKind::Contract, "GaussianCloud: array lengths disagree with count");
  for (ParamGroup g : kParamGroups) {
    const auto &v = group(g);
    for (std::size_t k = 0; k < v.size(); ++k) {
      require(std::isfinite(v[k]), ErrorKind::NumericFault,
              std::string("GaussianCloud: non-finite ") + to_string(g) + " at Gaussian " +
                  std::to_string(k / std::max(1, stride(g))));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    require(std::abs(rotation_of(i).norm() - 1.0) <= 1e-6, ErrorKind::Contract,
            "GaussianCloud: quaternion of Gaussian " + std::to_string(i) + " is not unit length");
  }
}

void Camera::validate() const {
  require(fx > 0.0 && fy > 0.0, ErrorKind::InvalidParameter, "camera focal lengths must be positive");
  require(width > 0 && height > 0, ErrorKind::InvalidParameter, "camera size must be positive");
  require(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height, ErrorKind::InvalidParameter,
          "camera principal point outside the image");
  require((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9 &&
              std::abs(rotation.determinant() - 1.0) < 1e-9,
          ErrorKind::InvalidParameter, "camera rotation is not a proper rotation");
  require(valid_radius > 0.0, ErrorKind::InvalidParameter, "camera valid_radius must be positive");
}

Mat4 Camera::world_to_camera() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Camera Camera::from_world_to_camera(const Mat4 &m, double fx, double fy, double cx, double cy, int width,
                                    int height, double valid_radius) {
  Camera c;
  c.fx = fx;
  c.fy = fy;
  c.cx = cx;
  c.cy = cy;
  c.width = width;
  c.height = height;
  c.rotation = m.topLeftCorner<3, 3>();
  c.translation = m.topRightCorner<3, 1>();
  c.valid_radius = valid_radius;
  return c;
}

Camera Camera::scaled(int new_width, int new_height) const {
  Camera c = *this;
  const double sx = static_cast<double>(new_width) / width;
  const double sy = static_cast<double>(new_height) / height;
  c.width = new_width;
  c.height = new_height;
  c.fx = fx * sx;
  c.fy = fy * sy;
  c.cx = (cx + 0.5) * sx - 0.5;
  c.cy = (cy + 0.5) * sy - 0.5;
  c.valid_radius = valid_radius * std::min(sx, sy);
  return c;
}

Camera Camera::look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, double fx, double fy, double cx,
                       double cy, int width, int height, double valid_radius) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  require(right.norm() > 1e-12, ErrorKind::InvalidParameter, "look_at: up is parallel to the view direction");
  right.normalize();
  const Vec3 down = forward.cross(right);
  Camera c;
  c.rotation.row(0) = right.transpose();
  c.rotation.row(1) = down.transpose();
  c.rotation.row(2) = forward.transpose();
  c.translation = -c.rotation * eye;
  c.fx = fx;
  c.fy = fy;
  c.cx = cx;
  c.cy = cy;
  c.width = width;
  c.height = height;
  c.valid_radius = valid_radius;
  return c;
}

void Frame::validate() const {
  camera.validate();
  require(image.width == camera.width && image.height == camera.height && image.channels == 3,
          ErrorKind::DimensionMismatch, "frame " + std::to_string(frame_id) + ": image size disagrees with camera");
  require(mask.width == camera.width && mask.height == camera.height && mask.channels == 1,
          ErrorKind::DimensionMismatch, "frame " + std::to_string(frame_id) + ": mask size disagrees with camera");
  if (truth) {
    require(truth->instance_labels.same_shape(mask) && truth->dynamic_mask.same_extent(mask),
            ErrorKind::DimensionMismatch, "frame " + std::to_string(frame_id) + ": ground truth size mismatch");
  }
}

const char *to_string(Split split) {
  switch (split) {
  case Split::Train: return "train";
  case Split::Validation: return "validation";
  case Split::Novel: return "novel";
  }
  return "unknown";
}

Split split_from_string(const std::string &name) {
  if (name == "train") return Split::Train;
  if (name == "validation") return Split::Validation;
  if (name == "novel") return Split::Novel;
  fail(ErrorKind::Parse, "unknown split tag '" + name + "'");
}

std::vector<std::size_t> Dataset::indices_of(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Dataset::seen_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (is_seen(split[i])) out.push_back(i);
  }
  return out;
}

const ObjectRecord *Dataset::find_object(int id) const {
  for (const auto &o : objects) {
    if (o.id == id) return &o;
  }
  return nullptr;
}

bool Dataset::has_truth() const {
  return !frames.empty() && std::all_of(frames.begin(), frames.end(), [](const Frame &f) { return f.truth.has_value(); });
}

double Dataset::scene_extent() const {
  if (frames.empty()) return 1.0;
  Vec3 mean = Vec3::Zero();
  for (const auto &f : frames) mean += f.camera.center();
  mean /= static_cast<double>(frames.size());
  double radius = 0.0;
  for (const auto &f : frames) radius = std::max(radius, (f.camera.center() - mean).norm());
  return 1.1 * std::max(radius, 1e-3);
}

void Dataset::validate() const {
  require(split.size() == frames.size(), ErrorKind::Contract, "dataset: split tags disagree with frame count");
  for (const auto &f : frames) f.validate();
  for (const auto &o : objects) {
    require(o.boxes.empty() || o.boxes.size() == frames.size(), ErrorKind::DimensionMismatch,
            "dataset: object " + std::to_string(o.id) + " box count disagrees with frame count");
  }
}

} // namespace splatseg
