// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/synth.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "json.hpp"
#include "splatseg/error.hpp"
#include "splatseg/geometry.hpp"
#include "splatseg/image.hpp"
#include "splatseg/imaging.hpp"
#include "splatseg/segment.hpp"
#include "splatseg/sh.hpp"

namespace splatseg {

using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  return std::mt19937_64(seq);
}

Vec3 hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h * 6.0, 6.0);
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Vec3 rgb;
  switch (static_cast<int>(hp)) {
  case 0: rgb = {c, x, 0}; break;
  case 1: rgb = {x, c, 0}; break;
  case 2: rgb = {0, c, x}; break;
  case 3: rgb = {0, x, c}; break;
  case 4: rgb = {x, 0, c}; break;
  default: rgb = {c, 0, x}; break;
  }
  return rgb + Vec3::Constant(v - c);
}

json vec_json(const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json &j, const std::string &key) {
  require(j.is_array() && j.size() == 3, ErrorKind::Config, key + ": expected an array of 3 numbers");
  Vec3 v;
  for (int k = 0; k < 3; ++k) {
    require(j[k].is_number(), ErrorKind::Config, key + ": expected numbers");
    v[k] = j[k].get<double>();
  }
  return v;
}

/// Rotation taking the local z axis to n.
Vec4 frame_quaternion(const Vec3 &n) {
  Vec3 helper = std::abs(n.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
  const Vec3 t1 = helper.cross(n).normalized();
  const Vec3 t2 = n.cross(t1);
  Mat3 r;
  r.col(0) = t1;
  r.col(1) = t2;
  r.col(2) = n;
  Eigen::Quaterniond q(r);
  q.normalize();
  return {q.w(), q.x(), q.y(), q.z()};
}

struct SurfaceSample {
  Vec3 point;
  Vec3 normal;
};

/// Uniform samples over the visible surface (boxes omit the face on the floor).
std::vector<SurfaceSample> sample_surface(const ObjectSpec &o, std::mt19937_64 &rng, double &area) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<SurfaceSample> out;
  if (o.shape == ShapeKind::Sphere) {
    const double r = 0.5 * o.size.x();
    area = 4.0 * kPi * r * r;
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < o.gaussians; ++i) {
      Vec3 n(g(rng), g(rng), g(rng));
      n.normalize();
      out.push_back({o.center + r * n, n});
    }
    return out;
  }
  const Vec3 h = 0.5 * o.size;
  struct Face {
    int axis;
    double sign;
    double area;
  };
  std::vector<Face> faces;
  for (int axis = 0; axis < 3; ++axis) {
    const double a = o.size[(axis + 1) % 3] * o.size[(axis + 2) % 3];
    faces.push_back({axis, 1.0, a});
    if (axis != 2) faces.push_back({axis, -1.0, a});
  }
  area = 0.0;
  for (const Face &f : faces) area += f.area;
  std::uniform_real_distribution<double> pick(0.0, area);
  for (int i = 0; i < o.gaussians; ++i) {
    double r = pick(rng);
    std::size_t fi = 0;
    while (fi + 1 < faces.size() && r > faces[fi].area) r -= faces[fi++].area;
    const Face &f = faces[fi];
    Vec3 p(u(rng) * o.size.x(), u(rng) * o.size.y(), u(rng) * o.size.z());
    p[f.axis] = f.sign * h[f.axis];
    Vec3 n = Vec3::Zero();
    n[f.axis] = f.sign;
    out.push_back({o.center + p, n});
  }
  return out;
}

Camera path_camera(const CameraPath &path, int i, std::mt19937_64 &walk_rng, double &walk_angle) {
  const int m = path.frames;
  const double s = m > 1 ? static_cast<double>(i) / (m - 1) : 0.0;
  double angle = 0.0, dist = path.radius, z = path.height_m;
  if (path.kind == TrajectoryKind::Orbit) {
    angle = 2.0 * kPi * path.revolutions * s;
    z += path.height_swing * std::sin(2.0 * kPi * 1.7 * s);
  } else {
    std::normal_distribution<double> g(0.0, 1.0);
    if (i > 0) walk_angle += 2.0 * kPi * path.revolutions / std::max(1, m - 1) * (1.0 + 0.5 * g(walk_rng));
    angle = walk_angle;
    dist *= 1.0 + 0.08 * g(walk_rng);
    z += path.height_swing * 0.5 * g(walk_rng);
  }
  const Vec3 eye = path.target + Vec3(dist * std::cos(angle), dist * std::sin(angle), z - path.target.z());
  return Camera::look_at(eye, path.target, Vec3(0, 0, 1), path.fx, path.fy, 0.5 * (path.width - 1),
                         0.5 * (path.height - 1), path.width, path.height, path.valid_radius);
}

} // namespace

const char *to_string(ShapeKind shape) { return shape == ShapeKind::Box ? "box" : "sphere"; }

ShapeKind shape_from_string(const std::string &name) {
  if (name == "box") return ShapeKind::Box;
  if (name == "sphere") return ShapeKind::Sphere;
  fail(ErrorKind::Config, "unknown shape '" + name + "' (expected box or sphere)");
}

Vec3 motion_offset(const std::vector<MotionKey> &script, double time) {
  if (script.empty()) return Vec3::Zero();
  if (time <= script.front().time) return script.front().offset;
  for (std::size_t k = 1; k < script.size(); ++k) {
    if (time <= script[k].time) {
      const double span = script[k].time - script[k - 1].time;
      const double a = span > 0.0 ? (time - script[k - 1].time) / span : 1.0;
      return (1.0 - a) * script[k - 1].offset + a * script[k].offset;
    }
  }
  return script.back().offset;
}

void SceneSpec::validate() const {
  require(camera.frames > 0, ErrorKind::Config, "scene needs at least one frame");
  require(objects.empty() ? object_count > 0 : true, ErrorKind::Config, "scene needs at least one object");
  require(camera.width > 0 && camera.height > 0 && camera.fx > 0 && camera.fy > 0, ErrorKind::Config,
          "camera intrinsics must be positive");
  require(camera.fps > 0.0 && camera.radius > 0.0, ErrorKind::Config, "camera fps and radius must be positive");
  require(!shapes.empty(), ErrorKind::Config, "shape palette is empty");
  require(min_gaussians >= 1 && max_gaussians >= min_gaussians, ErrorKind::Config, "bad Gaussian count range");
  require(min_size > 0.0 && max_size >= min_size, ErrorKind::Config, "bad object size range");
  require(dynamic_count >= 0 && (objects.empty() ? dynamic_count <= object_count : true), ErrorKind::Config,
          "dynamic_count exceeds object_count");
  require(mask_dropout >= 0.0 && mask_dropout <= 1.0, ErrorKind::Config, "mask_dropout must be in [0, 1]");
  require(pixel_noise >= 0.0, ErrorKind::Config, "pixel_noise must be >= 0");
  require(seed_point_fraction > 0.0 && seed_point_fraction <= 1.0, ErrorKind::Config,
          "seed_point_fraction must be in (0, 1]");
  std::vector<int> ids;
  for (const auto &o : objects) {
    require(o.id > 0, ErrorKind::Config, "object ids must be positive");
    require(o.gaussians > 0, ErrorKind::Config, "object " + std::to_string(o.id) + " has no Gaussians");
    require((o.size.array() > 0.0).all(), ErrorKind::Config, "object sizes must be positive");
    for (std::size_t k = 1; k < o.motion.size(); ++k)
      require(o.motion[k].time >= o.motion[k - 1].time, ErrorKind::Config, "motion keys must be time ordered");
    ids.push_back(o.id);
  }
  std::sort(ids.begin(), ids.end());
  require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), ErrorKind::Config, "object ids must be unique");
}

SceneSpec scene_spec_from_json(const std::string &text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception &e) {
    fail(ErrorKind::Config, std::string("scene spec: ") + e.what());
  }
  require(j.is_object(), ErrorKind::Config, "scene spec must be a JSON object");
  SceneSpec s;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string &k = it.key();
      const json &v = it.value();
      if (k == "name") s.name = v.get<std::string>();
      else if (k == "seed") s.seed = v.get<std::uint64_t>();
      else if (k == "room_extent") s.room_extent = v.get<double>();
      else if (k == "object_count") s.object_count = v.get<int>();
      else if (k == "shapes") {
        s.shapes.clear();
        for (const auto &e : v) s.shapes.push_back(shape_from_string(e.get<std::string>()));
      } else if (k == "gaussians_per_object") {
        s.min_gaussians = v.at(0).get<int>();
        s.max_gaussians = v.at(1).get<int>();
      } else if (k == "object_size") {
        s.min_size = v.at(0).get<double>();
        s.max_size = v.at(1).get<double>();
      } else if (k == "dynamic_count") s.dynamic_count = v.get<int>();
      else if (k == "motion_amplitude") s.motion_amplitude = v.get<double>();
      else if (k == "pixel_noise") s.pixel_noise = v.get<double>();
      else if (k == "mask_dropout") s.mask_dropout = v.get<double>();
      else if (k == "background_segment") s.background_segment = v.get<bool>();
      else if (k == "background") s.background = vec_from(v, k);
      else if (k == "seed_point_fraction") s.seed_point_fraction = v.get<double>();
      else if (k == "seed_point_jitter") s.seed_point_jitter = v.get<double>();
      else if (k == "camera") {
        CameraPath &c = s.camera;
        for (auto ci = v.begin(); ci != v.end(); ++ci) {
          const std::string &ck = ci.key();
          const json &cv = ci.value();
          if (ck == "trajectory") {
            const auto t = cv.get<std::string>();
            require(t == "orbit" || t == "random_walk", ErrorKind::Config, "camera.trajectory: orbit or random_walk");
            c.kind = t == "orbit" ? TrajectoryKind::Orbit : TrajectoryKind::RandomWalk;
          } else if (ck == "frames") c.frames = cv.get<int>();
          else if (ck == "width") c.width = cv.get<int>();
          else if (ck == "height") c.height = cv.get<int>();
          else if (ck == "fx") c.fx = cv.get<double>();
          else if (ck == "fy") c.fy = cv.get<double>();
          else if (ck == "valid_radius") c.valid_radius = cv.get<double>();
          else if (ck == "fps") c.fps = cv.get<double>();
          else if (ck == "radius") c.radius = cv.get<double>();
          else if (ck == "height_m") c.height_m = cv.get<double>();
          else if (ck == "height_swing") c.height_swing = cv.get<double>();
          else if (ck == "revolutions") c.revolutions = cv.get<double>();
          else if (ck == "target") c.target = vec_from(cv, "camera.target");
          else fail(ErrorKind::Config, "unknown scene spec key 'camera." + ck + "'");
        }
      } else if (k == "objects") {
        for (const auto &e : v) {
          ObjectSpec o;
          o.id = e.at("id").get<int>();
          o.shape = shape_from_string(e.value("shape", std::string("box")));
          o.center = vec_from(e.at("center"), "objects.center");
          o.size = vec_from(e.at("size"), "objects.size");
          o.color = vec_from(e.at("color"), "objects.color");
          o.gaussians = e.value("gaussians", 60);
          if (e.contains("motion")) {
            for (const auto &m : e.at("motion"))
              o.motion.push_back({m.at("time").get<double>(), vec_from(m.at("offset"), "motion.offset")});
          }
          s.objects.push_back(o);
        }
      } else {
        fail(ErrorKind::Config, "unknown scene spec key '" + k + "'");
      }
    }
  } catch (const json::exception &e) {
    fail(ErrorKind::Config, std::string("scene spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string scene_spec_to_json(const SceneSpec &s) {
  json shapes = json::array();
  for (ShapeKind k : s.shapes) shapes.push_back(to_string(k));
  const CameraPath &c = s.camera;
  json j = {{"name", s.name},
            {"seed", s.seed},
            {"room_extent", s.room_extent},
            {"object_count", s.object_count},
            {"shapes", shapes},
            {"gaussians_per_object", {s.min_gaussians, s.max_gaussians}},
            {"object_size", {s.min_size, s.max_size}},
            {"dynamic_count", s.dynamic_count},
            {"motion_amplitude", s.motion_amplitude},
            {"pixel_noise", s.pixel_noise},
            {"mask_dropout", s.mask_dropout},
            {"background_segment", s.background_segment},
            {"background", vec_json(s.background)},
            {"seed_point_fraction", s.seed_point_fraction},
            {"seed_point_jitter", s.seed_point_jitter},
            {"camera",
             {{"trajectory", c.kind == TrajectoryKind::Orbit ? "orbit" : "random_walk"},
              {"frames", c.frames},
              {"width", c.width},
              {"height", c.height},
              {"fx", c.fx},
              {"fy", c.fy},
              {"valid_radius", c.valid_radius},
              {"fps", c.fps},
              {"radius", c.radius},
              {"height_m", c.height_m},
              {"height_swing", c.height_swing},
              {"revolutions", c.revolutions},
              {"target", vec_json(c.target)}}}};
  if (!s.objects.empty()) {
    json objs = json::array();
    for (const auto &o : s.objects) {
      json motion = json::array();
      for (const auto &m : o.motion) motion.push_back({{"time", m.time}, {"offset", vec_json(m.offset)}});
      objs.push_back({{"id", o.id},
                      {"shape", to_string(o.shape)},
                      {"center", vec_json(o.center)},
                      {"size", vec_json(o.size)},
                      {"color", vec_json(o.color)},
                      {"gaussians", o.gaussians},
                      {"motion", motion}});
    }
    j["objects"] = objs;
  }
  return j.dump(2);
}

std::vector<std::string> builtin_scene_names() { return {"static-8obj", "dynamic-1of8", "dynamic-3of8"}; }

SceneSpec builtin_scene(const std::string &name) {
  SceneSpec s;
  s.name = name;
  if (name == "static-8obj") {
    s.seed = 8;
  } else if (name == "dynamic-1of8") {
    s.seed = 18;
    s.dynamic_count = 1;
  } else if (name == "dynamic-3of8") {
    s.seed = 38;
    s.dynamic_count = 3;
  } else {
    fail(ErrorKind::Config, "unknown builtin scene '" + name + "'");
  }
  return s;
}

SceneSpec resolve_scene(const SceneSpec &spec) {
  spec.validate();
  SceneSpec s = spec;
  if (!s.objects.empty()) return s;
  std::mt19937_64 rng = stream(s.seed, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double a, double b) { return a + (b - a) * unit(rng); };

  std::vector<double> hues(static_cast<std::size_t>(s.object_count));
  for (std::size_t k = 0; k < hues.size(); ++k) hues[k] = static_cast<double>(k) / hues.size();
  std::shuffle(hues.begin(), hues.end(), rng);

  const double half = 0.5 * s.room_extent;
  for (int k = 0; k < s.object_count; ++k) {
    ObjectSpec o;
    o.id = k + 1;
    o.shape = s.shapes[static_cast<std::size_t>(rng() % s.shapes.size())];
    if (o.shape == ShapeKind::Sphere) {
      o.size = Vec3::Constant(between(s.min_size, s.max_size));
    } else {
      o.size = Vec3(between(s.min_size, s.max_size), between(s.min_size, s.max_size), between(s.min_size, s.max_size));
    }
    o.gaussians = s.min_gaussians + static_cast<int>(rng() % static_cast<std::uint64_t>(s.max_gaussians - s.min_gaussians + 1));
    o.color = hsv_to_rgb(hues[static_cast<std::size_t>(k)], 0.55 + 0.3 * unit(rng), 0.6 + 0.35 * unit(rng));
    const double footprint = 0.5 * std::hypot(o.size.x(), o.size.y());
    bool placed = false;
    for (int attempt = 0; attempt < 5000 && !placed; ++attempt) {
      const Vec3 c(between(-half + footprint, half - footprint), between(-half + footprint, half - footprint),
                   0.5 * o.size.z());
      placed = std::all_of(s.objects.begin(), s.objects.end(), [&](const ObjectSpec &q) {
        const double other = 0.5 * std::hypot(q.size.x(), q.size.y());
        return std::hypot(c.x() - q.center.x(), c.y() - q.center.y()) > footprint + other + 0.04;
      });
      if (placed) o.center = c;
    }
    require(placed, ErrorKind::Config, "room_extent too small to place " + std::to_string(s.object_count) + " objects");
    s.objects.push_back(o);
  }

  std::vector<std::size_t> order(s.objects.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const double duration = (s.camera.frames - 1) / s.camera.fps;
  for (int k = 0; k < s.dynamic_count; ++k) {
    ObjectSpec &o = s.objects[order[static_cast<std::size_t>(k)]];
    Vec3 offset = Vec3::Zero();
    o.motion.push_back({0.0, offset});
    for (int leg = 1; leg <= 3; ++leg) {
      const double a = 2.0 * kPi * unit(rng);
      offset += s.motion_amplitude * Vec3(std::cos(a), std::sin(a), 0.0);
      for (int axis = 0; axis < 2; ++axis) {
        offset[axis] = std::clamp(o.center[axis] + offset[axis], -half, half) - o.center[axis];
      }
      o.motion.push_back({duration * leg / 3.0, offset});
    }
  }
  return s;
}

GaussianCloud build_ground_truth_cloud(const SceneSpec &resolved, std::vector<int> &gaussian_object) {
  std::size_t total = 0;
  for (const auto &o : resolved.objects) total += static_cast<std::size_t>(o.gaussians);
  GaussianCloud cloud(total, 0, 0);
  gaussian_object.assign(total, 0);
  std::size_t i = 0;
  for (const auto &o : resolved.objects) {
    std::mt19937_64 rng = stream(resolved.seed, 1000 + static_cast<std::uint64_t>(o.id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double area = 0.0;
    const auto samples = sample_surface(o, rng, area);
    const double spacing = std::sqrt(area / o.gaussians);
    for (const auto &smp : samples) {
      const double tangent = spacing * (0.55 + 0.15 * unit(rng));
      cloud.set_position(i, smp.point);
      cloud.set_log_scale(i, Vec3(std::log(tangent), std::log(tangent), std::log(0.3 * tangent)));
      cloud.set_rotation(i, frame_quaternion(smp.normal));
      cloud.opacity_logit[i] = logit(0.85 + 0.1 * unit(rng));
      Vec3 c = o.color + Vec3(unit(rng) - 0.5, unit(rng) - 0.5, unit(rng) - 0.5) * 0.12;
      cloud.set_base_color(i, c.cwiseMax(0.0).cwiseMin(1.0));
      gaussian_object[i] = o.id;
      ++i;
    }
  }
  return cloud;
}

LabelImage render_instance_labels(const GaussianCloud &cloud, const std::vector<int> &gaussian_object,
                                  const Camera &camera, const RasterSettings &settings) {
  require(gaussian_object.size() == cloud.size(), ErrorKind::Contract, "gaussian_object size mismatch");
  std::vector<int> ids(gaussian_object);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::map<int, int> slot;
  for (std::size_t k = 0; k < ids.size(); ++k) slot[ids[k]] = static_cast<int>(k);

  GaussianCloud onehot = cloud.with_feature_dim(static_cast<int>(ids.size()));
  std::fill(onehot.feature.begin(), onehot.feature.end(), 0.0);
  for (std::size_t i = 0; i < cloud.size(); ++i) onehot.feature_of(i)[static_cast<std::size_t>(slot[gaussian_object[i]])] = 1.0;
  const RenderOutput r = rasterize_forward(onehot, camera, Channels::Feature, settings);

  LabelImage labels(camera.width, camera.height, 1);
  const std::size_t d = ids.size();
  for (std::size_t p = 0; p < labels.data.size(); ++p) {
    double best = r.final_transmittance[p];
    int label = 0;
    for (std::size_t k = 0; k < d; ++k) {
      const double w = r.feature.data[p * d + k];
      if (w > best) {
        best = w;
        label = ids[k];
      }
    }
    labels.data[p] = label;
  }
  return labels;
}

SynthScene generate(const SceneSpec &spec) {
  SynthScene out;
  out.spec = resolve_scene(spec);
  const SceneSpec &s = out.spec;
  const CameraPath &path = s.camera;

  GaussianCloud base = build_ground_truth_cloud(s, out.gaussian_object);
  std::map<int, const ObjectSpec *> by_id;
  for (const auto &o : s.objects) by_id[o.id] = &o;

  RasterSettings raster;
  raster.background = s.background;

  Dataset &ds = out.dataset;
  const std::size_t m = static_cast<std::size_t>(path.frames);
  ds.frames.resize(m);
  out.clouds.resize(m);
  std::vector<LabelImage> labels(m);
  std::mt19937_64 walk = stream(s.seed, 2);
  double walk_angle = 0.0;
  MaskCache masks(VignetteParams{VignetteProfile::Cos4, 0.0});

  for (const auto &o : s.objects) ds.objects.push_back({o.id, to_string(o.shape), false, {}});

  for (std::size_t f = 0; f < m; ++f) {
    Frame &frame = ds.frames[f];
    frame.frame_id = static_cast<int>(f);
    frame.timestamp = static_cast<double>(f) / path.fps;
    frame.camera = path_camera(path, static_cast<int>(f), walk, walk_angle);

    GaussianCloud cloud = base;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const Vec3 off = motion_offset(by_id[out.gaussian_object[i]]->motion, frame.timestamp);
      cloud.set_position(i, cloud.position_of(i) + off);
    }

    std::size_t in_view = 0;
    for (auto &rec : ds.objects) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < cloud.size(); ++i)
        if (out.gaussian_object[i] == rec.id) members.push_back(i);
      const Box3 box = *selection_box(cloud, members);
      rec.boxes.push_back(box);
      const Vec3 pc = frame.camera.rotation * box.center() + frame.camera.translation;
      if (pc.z() > 0.0) {
        const double u = frame.camera.fx * pc.x() / pc.z() + frame.camera.cx;
        const double v = frame.camera.fy * pc.y() / pc.z() + frame.camera.cy;
        if (u >= 0 && v >= 0 && u <= frame.camera.width - 1 && v <= frame.camera.height - 1) ++in_view;
      }
    }
    require(2 * in_view >= ds.objects.size(), ErrorKind::Config,
            "camera trajectory keeps fewer than half of the objects in view at frame " + std::to_string(f));

    const RenderOutput render = rasterize_forward(cloud, frame.camera, Channels::Rgb, raster);
    const auto fm = masks.get(frame.camera);
    std::mt19937_64 noise = stream(s.seed, 10000 + f);
    std::normal_distribution<double> g(0.0, s.pixel_noise > 0.0 ? s.pixel_noise : 1.0);
    frame.image = ImageF(frame.camera.width, frame.camera.height, 3);
    for (std::size_t p = 0; p < frame.image.pixel_count(); ++p) {
      for (int c = 0; c < 3; ++c) {
        double v = render.rgb.data[3 * p + c];
        if (s.pixel_noise > 0.0) v += g(noise);
        frame.image.data[3 * p + c] = fm->valid.data[p] ? quantize_unit8(v) : 0.0;
      }
    }
    labels[f] = render_instance_labels(cloud, out.gaussian_object, frame.camera, raster);
    out.clouds[f] = std::move(cloud);
  }

  const auto flags = label_static_dynamic(ds.objects);
  for (std::size_t k = 0; k < ds.objects.size(); ++k) ds.objects[k].dynamic = flags[k];

  ShuffleOptions shuffle;
  shuffle.dropout = s.mask_dropout;
  shuffle.background_segment = s.background_segment;
  const auto masks_out = shuffle_mask_ids(labels, s.seed ^ 0x5EEDu, shuffle);
  for (std::size_t f = 0; f < m; ++f) {
    Frame &frame = ds.frames[f];
    frame.mask = masks_out[f];
    FrameTruth truth;
    truth.instance_labels = labels[f];
    truth.dynamic_mask = MaskImage(frame.camera.width, frame.camera.height, 1);
    for (std::size_t p = 0; p < labels[f].data.size(); ++p) {
      const int id = labels[f].data[p];
      truth.dynamic_mask.data[p] = id > 0 && ds.find_object(id)->dynamic ? 1 : 0;
    }
    frame.truth = std::move(truth);
  }
  ds.split = split_seen_novel(m);

  std::mt19937_64 pts = stream(s.seed, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, s.seed_point_jitter);
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (unit(pts) >= s.seed_point_fraction) continue;
    const Vec3 p = base.position_of(i) + Vec3(jitter(pts), jitter(pts), jitter(pts));
    Vec3 c;
    for (int k = 0; k < 3; ++k) c[k] = quantize_unit8(kShC0 * base.color_of(i)[static_cast<std::size_t>(k)] + 0.5);
    ds.seed_points.positions.push_back(p);
    ds.seed_points.colors.push_back(c);
  }
  ds.validate();
  return out;
}

std::vector<LabelImage> shuffle_mask_ids(const std::vector<LabelImage> &labels, std::uint64_t seed,
                                         const ShuffleOptions &options) {
  require(options.dropout >= 0.0 && options.dropout <= 1.0, ErrorKind::InvalidParameter, "dropout must be in [0, 1]");
  std::vector<LabelImage> out;
  out.reserve(labels.size());
  for (std::size_t f = 0; f < labels.size(); ++f) {
    const LabelImage &in = labels[f];
    std::mt19937_64 rng = stream(seed, f);
    std::vector<std::int32_t> present;
    for (std::int32_t v : in.data)
      if (v > 0 || options.background_segment) present.push_back(v);
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());

    std::vector<std::int32_t> target(present.size());
    if (options.identity) {
      const std::int32_t top = present.empty() ? 0 : std::max(0, present.back());
      for (std::size_t k = 0; k < present.size(); ++k) target[k] = present[k] > 0 ? present[k] : top + 1;
    } else {
      std::iota(target.begin(), target.end(), 1);
      std::shuffle(target.begin(), target.end(), rng);
    }
    std::bernoulli_distribution drop(options.dropout);
    std::map<std::int32_t, std::int32_t> remap{{0, 0}};
    for (std::size_t k = 0; k < present.size(); ++k) remap[present[k]] = drop(rng) ? 0 : target[k];

    LabelImage o(in.width, in.height, in.channels);
    for (std::size_t p = 0; p < in.data.size(); ++p) {
      const auto it = remap.find(in.data[p]);
      o.data[p] = it == remap.end() ? 0 : it->second;
    }
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<Split> split_seen_novel(std::size_t frame_count) {
  require(frame_count >= 5, ErrorKind::Config, "seen/novel split needs at least 5 frames");
  const std::size_t seen = 4 * frame_count / 5;
  std::vector<Split> out(frame_count, Split::Novel);
  for (std::size_t i = 0; i < seen; ++i) out[i] = i % 5 == 0 ? Split::Validation : Split::Train;
  return out;
}

std::vector<bool> label_static_dynamic(const std::vector<ObjectRecord> &objects, double threshold) {
  std::vector<bool> out;
  for (const auto &o : objects) {
    double moved = 0.0;
    for (const auto &b : o.boxes) moved = std::max(moved, (b.center() - o.boxes.front().center()).norm());
    out.push_back(moved > threshold);
  }
  return out;
}

} // namespace splatseg
