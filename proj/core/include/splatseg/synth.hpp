// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatseg/rasterizer.hpp"
#include "splatseg/types.hpp"

namespace splatseg {

enum class ShapeKind { Box, Sphere };
const char *to_string(ShapeKind shape);
ShapeKind shape_from_string(const std::string &name);

/// Piecewise-linear translation: offsets at increasing timestamps, held constant outside the range.
struct MotionKey {
  double time = 0.0;
  Vec3 offset = Vec3::Zero();
  bool operator==(const MotionKey &) const = default;
};

Vec3 motion_offset(const std::vector<MotionKey> &script, double time);

enum class TrajectoryKind { Orbit, RandomWalk };

struct CameraPath {
  TrajectoryKind kind = TrajectoryKind::Orbit;
  int frames = 60;
  int width = 128;
  int height = 128;
  double fx = 110.0;
  double fy = 110.0;
  double valid_radius = 80.0; // pixels
  double fps = 10.0;
  double radius = 2.0;        // orbit radius / random-walk mean distance (m)
  double height_m = 1.1;      // mean camera height above the floor
  double height_swing = 0.3;  // orbit height oscillation amplitude
  double revolutions = 1.5;
  Vec3 target = Vec3(0.0, 0.0, 0.15);
  bool operator==(const CameraPath &) const = default;
};

/// An object placed explicitly; generated objects fill in whatever is not given.
struct ObjectSpec {
  int id = 0;
  ShapeKind shape = ShapeKind::Box;
  Vec3 center = Vec3::Zero(); // at t = 0
  Vec3 size = Vec3::Constant(0.3);
  Vec3 color = Vec3::Constant(0.5);
  int gaussians = 60;
  std::vector<MotionKey> motion;
  bool operator==(const ObjectSpec &) const = default;
};

struct SceneSpec {
  std::string name = "scene";
  std::uint64_t seed = 0;
  double room_extent = 1.8; // objects are placed in [-e/2, e/2]^2 on the floor
  int object_count = 8;
  std::vector<ShapeKind> shapes{ShapeKind::Box, ShapeKind::Sphere};
  int min_gaussians = 40;
  int max_gaussians = 80;
  double min_size = 0.2;
  double max_size = 0.34;
  int dynamic_count = 0;          // objects given a generated motion script
  double motion_amplitude = 0.5;  // metres per generated keyframe leg
  std::vector<ObjectSpec> objects; // explicit objects (replace generation when non-empty)
  CameraPath camera;
  double pixel_noise = 0.0;
  double mask_dropout = 0.0;
  bool background_segment = true; // background pixels form their own mask segment
  Vec3 background = Vec3::Constant(0.5);
  double seed_point_fraction = 0.5;
  double seed_point_jitter = 0.01;

  void validate() const;
  bool operator==(const SceneSpec &) const = default;
};

SceneSpec scene_spec_from_json(const std::string &text);
std::string scene_spec_to_json(const SceneSpec &spec);
/// Named benchmark scenes: static-8obj, dynamic-1of8, dynamic-3of8.
SceneSpec builtin_scene(const std::string &name);
std::vector<std::string> builtin_scene_names();

struct SynthScene {
  SceneSpec spec;                     // resolved: objects filled in
  std::vector<int> gaussian_object;   // object id per Gaussian of the ground-truth cloud
  std::vector<GaussianCloud> clouds;  // ground-truth cloud per frame
  Dataset dataset;
};

/// Ground-truth cloud at t = 0 (feature dimension 0).
GaussianCloud build_ground_truth_cloud(const SceneSpec &resolved, std::vector<int> &gaussian_object);
/// Fills generated objects and motion scripts in. Deterministic in spec.seed.
SceneSpec resolve_scene(const SceneSpec &spec);

SynthScene generate(const SceneSpec &spec);

struct ShuffleOptions {
  double dropout = 0.0;
  bool identity = false;          // keep object ids (background, if a segment, becomes max id + 1)
  bool background_segment = true;
};

/// Per-frame random relabeling of consistent instance labels; dropped masks become 0 (unlabeled).
std::vector<LabelImage> shuffle_mask_ids(const std::vector<LabelImage> &labels, std::uint64_t seed,
                                         const ShuffleOptions &options = {});

/// First floor(4M/5) frames seen, the rest novel; seen frames with index % 5 == 0 are validation.
std::vector<Split> split_seen_novel(std::size_t frame_count);

/// Static/dynamic flags from box-center displacement against the first timestamp (> threshold: dynamic).
std::vector<bool> label_static_dynamic(const std::vector<ObjectRecord> &objects, double threshold = 0.02);

/// Consistent labels by largest per-object compositing weight (0 where the background weighs most).
LabelImage render_instance_labels(const GaussianCloud &cloud, const std::vector<int> &gaussian_object,
                                  const Camera &camera, const RasterSettings &settings);

} // namespace splatseg
