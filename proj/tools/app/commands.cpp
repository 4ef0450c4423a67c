// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pca.hpp"
#include "splatseg/error.hpp"
#include "splatseg/imaging.hpp"

namespace splatseg::app {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string frame_png(int id) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%06d.png", id);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

json record_json(const MetricsRecord &r) {
  json j = {{"iteration", r.iteration},
            {"frame_id", r.frame_id},
            {"loss_rgb", r.loss_rgb},
            {"loss_contrastive", r.loss_contrastive},
            {"loss_transient_reg", r.loss_transient_reg},
            {"loss_total", r.loss_total},
            {"samples", r.samples},
            {"gaussians", r.gaussians}};
  j["validation_psnr"] = r.validation_psnr ? json(*r.validation_psnr) : json(nullptr);
  return j;
}

json box_json(const std::optional<Box3> &b) {
  if (!b) return nullptr;
  return {{"min", {b->min.x(), b->min.y(), b->min.z()}}, {"max", {b->max.x(), b->max.y(), b->max.z()}}};
}

std::vector<std::size_t> select_frames(const Dataset &ds, const std::string &which) {
  if (which == "all") {
    std::vector<std::size_t> v(ds.frames.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    return v;
  }
  if (which == "train" || which == "validation" || which == "novel") return ds.indices_of(split_from_string(which));
  std::vector<std::size_t> out;
  std::stringstream s(which);
  std::string tok;
  while (std::getline(s, tok, ',')) {
    int id = 0;
    try {
      id = std::stoi(tok);
    } catch (const std::exception &) {
      fail(ErrorKind::Config, "bad frame selector '" + tok + "'");
    }
    bool found = false;
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
      if (ds.frames[i].frame_id == id) {
        out.push_back(i);
        found = true;
      }
    }
    require(found, ErrorKind::Config, "no frame with id " + std::to_string(id));
  }
  return out;
}

json read_json(const fs::path &path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception &e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
}

} // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::Config:
  case ErrorKind::InvalidParameter: return 2;
  case ErrorKind::Io:
  case ErrorKind::MissingFile:
  case ErrorKind::VersionMismatch:
  case ErrorKind::DimensionMismatch:
  case ErrorKind::Parse: return 3;
  case ErrorKind::NumericFault: return 4;
  default: return 1;
  }
}

SceneModel model_from_state(const TrainState &state) {
  SceneModel m{state.cloud, state.config.raster, state.config.vignette, std::nullopt};
  if (state.config.transient_enabled) m.predictor = state.predictor;
  return m;
}

const char *to_string(RenderMode mode) {
  switch (mode) {
  case RenderMode::Rgb: return "rgb";
  case RenderMode::FeaturePca: return "feature_pca";
  case RenderMode::Transient: return "transient";
  case RenderMode::Similarity: return "similarity";
  }
  return "?";
}

RenderMode render_mode_from_string(const std::string &name) {
  for (RenderMode m : {RenderMode::Rgb, RenderMode::FeaturePca, RenderMode::Transient, RenderMode::Similarity})
    if (name == to_string(m)) return m;
  fail(ErrorKind::Config, "unknown render mode '" + name + "' (rgb, feature_pca, transient, similarity)");
}

Mat4 parse_pose(const std::string &text) {
  std::vector<double> v;
  std::stringstream s(text);
  std::string tok;
  while (std::getline(s, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      require(used == tok.size() || tok.find_first_not_of(' ', used) == std::string::npos, ErrorKind::InvalidParameter,
              "bad pose entry '" + tok + "'");
    } catch (const std::logic_error &) {
      fail(ErrorKind::InvalidParameter, "bad pose entry '" + tok + "'");
    }
  }
  require(v.size() == 16, ErrorKind::InvalidParameter, "pose needs 16 comma-separated numbers, got " + std::to_string(v.size()));
  Mat4 m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(4 * r + c)];
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) require(std::isfinite(m(r, c)), ErrorKind::InvalidParameter, "pose entries must be finite");
  const Mat3 rot = m.topLeftCorner<3, 3>();
  require((rot * rot.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-6 && rot.determinant() > 0.0,
          ErrorKind::InvalidParameter, "pose rotation is not orthonormal");
  return m;
}

Camera camera_from_json_text(const std::string &text) {
  json j;
  try {
    j = json::parse(text);
    const json &p = j.at("world_to_camera");
    require(p.is_array() && p.size() == 16, ErrorKind::InvalidParameter, "world_to_camera needs 16 numbers");
    Mat4 m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = p[static_cast<std::size_t>(4 * r + c)].get<double>();
    Camera cam = Camera::from_world_to_camera(m, j.at("fx").get<double>(), j.at("fy").get<double>(),
                                              j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("width").get<int>(),
                                              j.at("height").get<int>(), j.at("valid_radius").get<double>());
    cam.validate();
    return cam;
  } catch (const json::exception &e) {
    fail(ErrorKind::InvalidParameter, std::string("bad camera record: ") + e.what());
  }
}

std::string encode_png(const ImageF &image) { return png_bytes(image); }

ImageF render_view(const SceneModel &model, const Camera &camera, RenderMode mode, const ImageF *input,
                   const std::vector<double> *query, const FeaturePca *pca) {
  switch (mode) {
  case RenderMode::Rgb: return rasterize_forward(model.cloud, camera, Channels::Rgb, model.raster).rgb;
  case RenderMode::FeaturePca: {
    const ImageF f = rasterize_forward(model.cloud, camera, Channels::Feature, model.raster).feature;
    if (pca != nullptr) return pca->colorize(f);
    return FeaturePca::fit({f}).colorize(f);
  }
  case RenderMode::Transient: {
    if (!model.predictor) return ImageF(camera.width, camera.height, 1);
    if (input != nullptr) return model.predictor->predict(*input);
    return model.predictor->predict(rasterize_forward(model.cloud, camera, Channels::Rgb, model.raster).rgb);
  }
  case RenderMode::Similarity: {
    require(query != nullptr, ErrorKind::Contract, "similarity rendering needs a query");
    const ImageF f = rasterize_forward(model.cloud, camera, Channels::Feature, model.raster).feature;
    ImageF d = similarity_image(f, *query);
    double top = 0.0;
    for (double v : d.data) top = std::max(top, v);
    for (double &v : d.data) v = top > 0.0 ? 1.0 - v / top : 1.0;
    return d;
  }
  }
  return {};
}

SynthScene cmd_synth(const SynthOptions &o) {
  SceneSpec spec;
  if (!o.spec_file.empty()) {
    spec = scene_spec_from_json(read_file(o.spec_file));
  } else {
    require(!o.scene.empty(), ErrorKind::Config, "synth needs --scene or --spec");
    spec = builtin_scene(o.scene);
  }
  if (o.seed) spec.seed = *o.seed;
  SynthScene scene = generate(spec);
  save_dataset(scene.dataset, o.out);
  export_ply(scene.clouds.front(), o.out / "gt" / "cloud.ply");
  json objects = json::array();
  for (std::size_t i = 0; i < scene.gaussian_object.size(); ++i) objects.push_back(scene.gaussian_object[i]);
  write_file(o.out / "gt" / "gaussian_objects.json", objects.dump() + "\n");
  write_file(o.out / "scene.json", scene_spec_to_json(scene.spec) + "\n");
  return scene;
}

TrainConfig load_config(const fs::path &config_file, const std::vector<std::string> &overrides) {
  TrainConfig cfg;
  if (!config_file.empty()) cfg = config_from_json(read_file(config_file));
  for (const auto &o : overrides) apply_override(cfg, o);
  return cfg;
}

TrainState cmd_train(const TrainOptions &o) {
  const auto started = std::chrono::steady_clock::now();
  const std::string started_at = utc_now();
  Dataset ds = load_dataset(o.data, LoadOptions{false});

  TrainState state;
  if (!o.resume.empty()) {
    require(o.config_file.empty(), ErrorKind::Config, "--resume takes its config from the checkpoint; use --set to override");
    state = load_checkpoint(o.resume);
    for (const auto &ov : o.overrides) apply_override(state.config, ov);
  } else {
    const TrainConfig cfg = load_config(o.config_file, o.overrides);
    if (!o.init_ply.empty()) {
      state = init_from_cloud(import_ply(o.init_ply, cfg.feature_dim).cloud, cfg, ds.scene_extent());
    } else {
      state = init_from_points(ds.seed_points, cfg, ds.scene_extent());
    }
  }

  fs::create_directories(o.out / "checkpoints");
  write_file(o.out / "config.json", config_to_json(state.config) + "\n");
  const fs::path metrics_path = o.out / "metrics.jsonl";
  {
    std::ofstream m(metrics_path, std::ios::trunc);
    require(static_cast<bool>(m), ErrorKind::Io, "cannot write " + metrics_path.string());
    for (const auto &r : state.curves) m << record_json(r).dump() << '\n';
  }
  std::ofstream metrics(metrics_path, std::ios::app);

  TrainCallbacks cb;
  cb.on_record = [&](const MetricsRecord &r) {
    metrics << record_json(r).dump() << '\n';
    metrics.flush();
    if (!o.quiet && (r.iteration % 100 == 0 || r.validation_psnr)) {
      std::cerr << "iter " << r.iteration << " loss " << r.loss_total << " gaussians " << r.gaussians;
      if (r.validation_psnr) std::cerr << " val_psnr " << *r.validation_psnr;
      std::cerr << '\n';
    }
  };
  cb.on_checkpoint = [&](const TrainState &s) {
    char name[32];
    std::snprintf(name, sizeof name, "iter_%06lld.ckpt", static_cast<long long>(s.iteration));
    save_checkpoint(s, o.out / "checkpoints" / name);
  };
  train(state, ds, cb);
  metrics.close();

  save_checkpoint(state, o.out / "final.ckpt");
  export_ply(state.cloud, o.out / "model.ply");
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json meta = {{"started", started_at},
               {"finished", utc_now()},
               {"seconds", seconds},
               {"dataset", fs::absolute(o.data).lexically_normal().string()},
               {"iterations", state.iteration},
               {"gaussians", state.cloud.size()}};
  write_file(o.out / "metadata.json", meta.dump(2) + "\n");
  return state;
}

void cmd_render(const RenderOptions &o) {
  const TrainState state = load_checkpoint(o.checkpoint);
  const SceneModel model = model_from_state(state);

  struct View {
    std::string name;
    Camera camera;
    const ImageF *image = nullptr;
  };
  std::vector<View> views;
  Dataset ds;
  if (!o.poses_file.empty()) {
    const json poses = read_json(o.poses_file);
    require(poses.is_array(), ErrorKind::Config, o.poses_file.string() + ": expected a JSON array of cameras");
    for (std::size_t i = 0; i < poses.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "pose_%06zu.png", i);
      views.push_back({name, camera_from_json_text(poses[i].dump()), nullptr});
    }
  } else {
    ds = load_dataset(o.data, LoadOptions{false});
    for (std::size_t i : select_frames(ds, o.frames))
      views.push_back({frame_png(ds.frames[i].frame_id), ds.frames[i].camera, &ds.frames[i].image});
  }

  std::optional<FeaturePca> pca;
  for (RenderMode mode : o.modes) {
    require(mode != RenderMode::Similarity, ErrorKind::Config, "render does not support similarity (use query)");
    fs::create_directories(o.out / to_string(mode));
    if (mode == RenderMode::FeaturePca && !pca) {
      std::vector<ImageF> feats;
      for (const auto &v : views) feats.push_back(rasterize_forward(model.cloud, v.camera, Channels::Feature, model.raster).feature);
      pca = FeaturePca::fit(feats);
    }
    for (const auto &v : views) {
      const ImageF img = render_view(model, v.camera, mode, v.image, nullptr, pca ? &*pca : nullptr);
      write_file(o.out / to_string(mode) / v.name, encode_png(img));
    }
  }
}

EvalReport cmd_eval(const EvalCommandOptions &o) {
  const TrainState state = load_checkpoint(o.checkpoint);
  const Dataset ds = load_dataset(o.data);
  const EvalReport report = evaluate(model_from_state(state), ds, o.eval);
  if (!o.out.empty()) {
    write_file(o.out, report.to_json() + "\n");
    fs::path csv = o.out;
    csv.replace_extension(".csv");
    write_file(csv, report.to_csv());
  }
  return report;
}

std::string cmd_query(const QueryOptions &o) {
  const TrainState state = load_checkpoint(o.checkpoint);
  const SceneModel model = model_from_state(state);
  const Dataset ds = load_dataset(o.data, LoadOptions{false});
  const json spec = read_json(o.clicks_file);
  auto frame_index = [&](int id) {
    for (std::size_t i = 0; i < ds.frames.size(); ++i)
      if (ds.frames[i].frame_id == id) return i;
    fail(ErrorKind::InvalidParameter, "no frame with id " + std::to_string(id));
  };

  std::vector<Click> clicks;
  std::vector<int> targets;
  double threshold = 0.0;
  try {
    for (const auto &c : spec.at("clicks")) {
      Click k;
      if (c.contains("frame_id")) {
        k.frame_id = c.at("frame_id").get<int>();
        k.camera = ds.frames[frame_index(k.frame_id)].camera;
      } else {
        k.camera = camera_from_json_text(c.at("camera").dump());
      }
      k.x = c.at("x").get<int>();
      k.y = c.at("y").get<int>();
      clicks.push_back(k);
    }
    threshold = o.threshold ? *o.threshold : spec.at("threshold").get<double>();
    if (spec.contains("frames")) {
      for (const auto &f : spec.at("frames")) targets.push_back(f.get<int>());
    }
  } catch (const json::exception &e) {
    fail(ErrorKind::Config, o.clicks_file.string() + ": " + e.what());
  }
  require(!clicks.empty(), ErrorKind::Config, "clicks file has no clicks");
  if (targets.empty()) {
    std::set<int> seen;
    for (const auto &c : clicks)
      if (c.frame_id >= 0 && seen.insert(c.frame_id).second) targets.push_back(c.frame_id);
  }

  const QueryFeature q = query_from_clicks(model.cloud, clicks, model.raster);
  fs::create_directories(o.out / "masks");
  json frames = json::array();
  for (int id : targets) {
    const Frame &f = ds.frames[frame_index(id)];
    const ImageF feat = rasterize_forward(model.cloud, f.camera, Channels::Feature, model.raster).feature;
    const MaskImage valid = build_masks(f.camera, model.vignette).valid;
    const MaskImage mask = segment_2d(similarity_image(feat, q.feature), threshold, &valid);
    write_png_mask8(o.out / "masks" / frame_png(id), mask);
    std::size_t count = 0;
    for (auto v : mask.data) count += v;
    frames.push_back({{"frame_id", id}, {"mask", "masks/" + frame_png(id)}, {"pixels", count}});
  }
  const Segmentation3D sel = segment_3d(model.cloud, q.feature, threshold);
  if (!sel.indices.empty()) export_ply(model.cloud.select(sel.indices), o.out / "selection.ply");
  const json result = {{"query", q.feature},
                       {"threshold", threshold},
                       {"frames", frames},
                       {"selected_gaussian_count", sel.indices.size()},
                       {"box", box_json(sel.box)},
                       {"selection", sel.indices.empty() ? json(nullptr) : json("selection.ply")}};
  const std::string text = result.dump(2) + "\n";
  write_file(o.out / "query.json", text);
  return text;
}

std::vector<int> cmd_cluster(const ClusterOptions &o) {
  const TrainState state = load_checkpoint(o.checkpoint);
  const std::vector<int> labels = cluster_scene(state.cloud, o.params);
  fs::create_directories(o.out);
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  json clusters = json::array();
  std::size_t noise = 0;
  for (int l : labels) noise += l < 0 ? 1 : 0;
  for (int c = 0; c < k; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) members.push_back(i);
    char name[32];
    std::snprintf(name, sizeof name, "cluster_%03d.ply", c);
    export_ply(state.cloud.select(members), o.out / name);
    clusters.push_back({{"label", c}, {"size", members.size()}, {"ply", name}, {"box", box_json(selection_box(state.cloud, members))}});
  }
  const json out = {{"min_cluster_size", o.params.min_cluster_size},
                    {"min_samples", o.params.min_samples},
                    {"cluster_count", k},
                    {"noise", noise},
                    {"clusters", clusters},
                    {"labels", labels}};
  write_file(o.out / "clusters.json", out.dump(2) + "\n");
  return labels;
}

} // namespace splatseg::app
