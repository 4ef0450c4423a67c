// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "splatseg/dataset_io.hpp"
#include "splatseg/error.hpp"

namespace splatseg {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_file(const fs::path &path) {
  require(fs::exists(path), ErrorKind::MissingFile, "missing file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path &path, const std::string &bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::Io, "short write to " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorKind::Io, "cannot write " + path.string() + ": " + ec.message());
}

std::string fnv1a_hex(const std::string &bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string frame_name(int id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d.png", id);
  return buf;
}

json camera_json(const Camera &c) {
  const Mat4 m = c.world_to_camera();
  json pose = json::array();
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k) pose.push_back(m(r, k));
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height},
          {"valid_radius", c.valid_radius}, {"world_to_camera", pose}};
}

Camera camera_from(const json &j, bool camera_to_world) {
  const json &pose = j.at("world_to_camera");
  require(pose.is_array() && pose.size() == 16, ErrorKind::Parse, "camera pose must have 16 entries");
  Mat4 m;
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k) m(r, k) = pose[static_cast<std::size_t>(4 * r + k)].get<double>();
  if (camera_to_world) {
    Mat4 inv = Mat4::Identity();
    const Mat3 rt = m.topLeftCorner<3, 3>().transpose();
    inv.topLeftCorner<3, 3>() = rt;
    inv.topRightCorner<3, 1>() = -rt * m.topRightCorner<3, 1>();
    m = inv;
  }
  return Camera::from_world_to_camera(m, j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                                      j.at("cy").get<double>(), j.at("width").get<int>(), j.at("height").get<int>(),
                                      j.at("valid_radius").get<double>());
}

json box_json(const Box3 &b) { return {b.min.x(), b.min.y(), b.min.z(), b.max.x(), b.max.y(), b.max.z()}; }

Box3 box_from(const json &j) {
  require(j.is_array() && j.size() == 6, ErrorKind::Parse, "box must have 6 entries");
  Box3 b;
  for (int k = 0; k < 3; ++k) {
    b.min[k] = j[static_cast<std::size_t>(k)].get<double>();
    b.max[k] = j[static_cast<std::size_t>(k + 3)].get<double>();
  }
  return b;
}

void check_extent(const std::string &path, int w, int h, const Camera &c) {
  if (w != c.width || h != c.height) {
    fail(ErrorKind::DimensionMismatch, path + " is " + std::to_string(w) + "x" + std::to_string(h) + ", camera says " +
                                           std::to_string(c.width) + "x" + std::to_string(c.height));
  }
}

} // namespace

void save_dataset(const Dataset &dataset, const fs::path &dir) {
  dataset.validate();
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  const bool truth = dataset.has_truth();
  if (truth) {
    fs::create_directories(dir / "gt" / "labels");
    fs::create_directories(dir / "gt" / "dynamic");
  }
  json frames = json::array();
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    const Frame &f = dataset.frames[i];
    const std::string name = frame_name(f.frame_id);
    write_png_rgb8(dir / "images" / name, f.image);
    write_png_label16(dir / "masks" / name, f.mask);
    json fj = {{"id", f.frame_id},
               {"timestamp", f.timestamp},
               {"split", to_string(dataset.split[i])},
               {"image", "images/" + name},
               {"mask", "masks/" + name},
               {"camera", camera_json(f.camera)}};
    if (truth && f.truth) {
      write_png_label16(dir / "gt" / "labels" / name, f.truth->instance_labels);
      write_png_mask8(dir / "gt" / "dynamic" / name, f.truth->dynamic_mask);
      fj["gt_labels"] = "gt/labels/" + name;
      fj["gt_dynamic"] = "gt/dynamic/" + name;
    }
    frames.push_back(fj);
  }
  json objects = json::array();
  json boxes = json::array();
  for (const auto &o : dataset.objects) {
    objects.push_back({{"id", o.id}, {"shape", o.shape}, {"dynamic", o.dynamic}});
    json b = json::array();
    for (const auto &box : o.boxes) b.push_back(box_json(box));
    boxes.push_back({{"id", o.id}, {"boxes", b}});
  }
  json manifest = {{"format", "splatseg-dataset"},
                   {"version", kDatasetFormatVersion},
                   {"pose_convention", "world_to_camera"},
                   {"seed_points", "points.ply"},
                   {"frames", frames},
                   {"objects", objects}};
  if (truth) {
    manifest["ground_truth"] = {{"boxes", "gt/boxes.json"}};
    write_file(dir / "gt" / "boxes.json", json{{"objects", boxes}}.dump(2) + "\n");
  }
  write_seed_points(dir / "points.ply", dataset.seed_points);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const fs::path &dir, const LoadOptions &options) {
  const fs::path manifest_path = dir / "manifest.json";
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::exception &e) {
    fail(ErrorKind::Parse, manifest_path.string() + ": " + e.what());
  }
  Dataset ds;
  try {
    require(m.value("format", std::string()) == "splatseg-dataset", ErrorKind::Parse,
            manifest_path.string() + ": not a splatseg dataset manifest");
    const int version = m.at("version").get<int>();
    require(version == kDatasetFormatVersion, ErrorKind::VersionMismatch,
            manifest_path.string() + ": format version " + std::to_string(version) + " (expected " +
                std::to_string(kDatasetFormatVersion) + ")");
    const std::string convention = m.value("pose_convention", std::string("world_to_camera"));
    require(convention == "world_to_camera" || convention == "camera_to_world", ErrorKind::Parse,
            "pose_convention must be world_to_camera or camera_to_world");
    const bool c2w = convention == "camera_to_world";

    for (const auto &fj : m.at("frames")) {
      Frame f;
      f.frame_id = fj.at("id").get<int>();
      f.timestamp = fj.at("timestamp").get<double>();
      f.camera = camera_from(fj.at("camera"), c2w);
      const fs::path image = dir / fj.at("image").get<std::string>();
      const fs::path mask = dir / fj.at("mask").get<std::string>();
      f.image = read_png_rgb8(image);
      check_extent(image.string(), f.image.width, f.image.height, f.camera);
      f.mask = read_png_label16(mask);
      check_extent(mask.string(), f.mask.width, f.mask.height, f.camera);
      if (options.load_truth && fj.contains("gt_labels")) {
        FrameTruth t;
        const fs::path labels = dir / fj.at("gt_labels").get<std::string>();
        const fs::path dynamic = dir / fj.at("gt_dynamic").get<std::string>();
        t.instance_labels = read_png_label16(labels);
        check_extent(labels.string(), t.instance_labels.width, t.instance_labels.height, f.camera);
        t.dynamic_mask = read_png_mask8(dynamic);
        check_extent(dynamic.string(), t.dynamic_mask.width, t.dynamic_mask.height, f.camera);
        f.truth = std::move(t);
      }
      ds.frames.push_back(std::move(f));
      ds.split.push_back(split_from_string(fj.at("split").get<std::string>()));
    }
    for (const auto &oj : m.at("objects")) {
      ds.objects.push_back({oj.at("id").get<int>(), oj.value("shape", std::string()), oj.value("dynamic", false), {}});
    }
    if (options.load_truth && m.contains("ground_truth")) {
      const fs::path boxes_path = dir / m.at("ground_truth").at("boxes").get<std::string>();
      const json bj = json::parse(read_file(boxes_path));
      for (const auto &entry : bj.at("objects")) {
        const int id = entry.at("id").get<int>();
        auto it = std::find_if(ds.objects.begin(), ds.objects.end(), [&](const ObjectRecord &o) { return o.id == id; });
        require(it != ds.objects.end(), ErrorKind::Parse, boxes_path.string() + ": unknown object " + std::to_string(id));
        for (const auto &b : entry.at("boxes")) it->boxes.push_back(box_from(b));
        require(it->boxes.size() == ds.frames.size(), ErrorKind::DimensionMismatch,
                boxes_path.string() + ": object " + std::to_string(id) + " has " + std::to_string(it->boxes.size()) +
                    " boxes for " + std::to_string(ds.frames.size()) + " frames");
      }
    }
    if (m.contains("seed_points")) ds.seed_points = read_seed_points(dir / m.at("seed_points").get<std::string>());
  } catch (const json::exception &e) {
    fail(ErrorKind::Parse, manifest_path.string() + ": " + e.what());
  }
  ds.validate();
  return ds;
}

} // namespace splatseg
