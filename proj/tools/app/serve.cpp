// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "serve.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "commands.hpp"
#include "httplib.h"
#include "json.hpp"
#include "pca.hpp"
#include "splatseg/error.hpp"
#include "splatseg/imaging.hpp"

namespace splatseg::app {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Request failure carrying an HTTP status.
struct HttpError {
  int status;
  std::string message;
};

[[noreturn]] void http_fail(int status, const std::string &message) { throw HttpError{status, message}; }

struct Snapshot {
  SceneModel model;
  Dataset dataset; // may be empty
  Camera default_camera;
  FeaturePca pca;
};

struct Session {
  std::mutex mutex;
  std::shared_ptr<const GaussianCloud> cloud; // snapshot cloud until the first edit
  std::optional<QueryFeature> query;
  double threshold = 0.0;
  std::vector<std::size_t> selection;
  std::string mask_png;
  int mask_version = 0;
};

fs::path newest_checkpoint(const fs::path &run) {
  if (fs::exists(run / "final.ckpt")) return run / "final.ckpt";
  fs::path best;
  if (fs::exists(run / "checkpoints")) {
    for (const auto &e : fs::directory_iterator(run / "checkpoints"))
      if (e.path().extension() == ".ckpt" && e.path().filename() > best.filename()) best = e.path();
  }
  require(!best.empty(), ErrorKind::MissingFile, "no checkpoint in run directory " + run.string());
  return best;
}

json box_json(const std::optional<Box3> &b) {
  if (!b) return nullptr;
  return {{"min", {b->min.x(), b->min.y(), b->min.z()}}, {"max", {b->max.x(), b->max.y(), b->max.z()}}};
}

} // namespace

struct StudioServer::Impl {
  ServeOptions options;
  std::shared_ptr<const Snapshot> snapshot;
  fs::path metrics_path;
  httplib::Server http;
  std::mutex sessions_mutex;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::uint64_t next_session = 1;
  std::atomic<bool> stopping{false};

  explicit Impl(const ServeOptions &o) : options(o) {
    fs::path ckpt = o.checkpoint;
    fs::path data = o.data;
    if (!o.run_dir.empty()) {
      if (ckpt.empty()) ckpt = newest_checkpoint(o.run_dir);
      metrics_path = o.run_dir / "metrics.jsonl";
      if (data.empty() && fs::exists(o.run_dir / "metadata.json")) {
        const json meta = json::parse(read_file(o.run_dir / "metadata.json"));
        if (meta.contains("dataset")) data = meta["dataset"].get<std::string>();
      }
    }
    require(!ckpt.empty(), ErrorKind::Config, "serve needs a checkpoint or a run directory");
    auto snap = std::make_shared<Snapshot>();
    snap->model = model_from_state(load_checkpoint(ckpt));
    if (!data.empty()) snap->dataset = load_dataset(data, LoadOptions{false});
    if (!snap->dataset.frames.empty()) {
      snap->default_camera = snap->dataset.frames.front().camera;
    } else {
      const CameraPath p;
      snap->default_camera = Camera::look_at(Vec3(p.radius, 0.0, p.height_m), p.target, Vec3(0, 0, 1), p.fx, p.fy,
                                             0.5 * (p.width - 1), 0.5 * (p.height - 1), p.width, p.height, p.valid_radius);
    }
    std::vector<ImageF> feats;
    const std::size_t n = snap->dataset.frames.size();
    const std::size_t step = std::max<std::size_t>(1, n / 8);
    for (std::size_t i = 0; i < n; i += step)
      feats.push_back(rasterize_forward(snap->model.cloud, snap->dataset.frames[i].camera, Channels::Feature,
                                        snap->model.raster).feature);
    if (feats.empty())
      feats.push_back(rasterize_forward(snap->model.cloud, snap->default_camera, Channels::Feature, snap->model.raster).feature);
    snap->pca = FeaturePca::fit(feats);
    snapshot = snap;
    routes();
  }

  std::shared_ptr<Session> session_for(const httplib::Request &req, bool required = true) {
    std::string id = req.get_param_value("session");
    if (id.empty()) id = req.get_header_value("X-Session");
    if (id.empty()) {
      if (required) http_fail(404, "missing session (create one with POST /session)");
      return nullptr;
    }
    std::lock_guard<std::mutex> lock(sessions_mutex);
    const auto it = sessions.find(id);
    if (it == sessions.end()) http_fail(404, "unknown session '" + id + "'");
    return it->second;
  }

  const Frame &frame_by_id(int id) const {
    for (const auto &f : snapshot->dataset.frames)
      if (f.frame_id == id) return f;
    http_fail(400, "unknown frame_id " + std::to_string(id));
  }

  Camera camera_for(const std::string &pose, const std::string &frame_id) const {
    if (!frame_id.empty()) {
      int id = 0;
      try {
        id = std::stoi(frame_id);
      } catch (const std::exception &) {
        http_fail(400, "malformed frame_id");
      }
      return frame_by_id(id).camera;
    }
    if (pose.empty()) return snapshot->default_camera;
    Camera c = snapshot->default_camera;
    try {
      const Mat4 m = parse_pose(pose);
      c.rotation = m.topLeftCorner<3, 3>();
      c.translation = m.topRightCorner<3, 1>();
    } catch (const Error &e) {
      http_fail(400, std::string("malformed pose: ") + e.what());
    }
    return c;
  }

  Camera camera_from_json(const json &j) const {
    if (j.contains("frame_id")) return frame_by_id(j["frame_id"].get<int>()).camera;
    if (j.contains("pose")) {
      const json &p = j["pose"];
      std::string text;
      if (p.is_string()) {
        text = p.get<std::string>();
      } else if (p.is_array()) {
        for (std::size_t k = 0; k < p.size(); ++k) text += (k ? "," : "") + p[k].dump();
      } else {
        http_fail(400, "pose must be a string or an array");
      }
      return camera_for(text, "");
    }
    return snapshot->default_camera;
  }

  SceneModel session_model(const Session &s) const {
    SceneModel m = snapshot->model;
    m.cloud = *s.cloud;
    return m;
  }

  static void send_json(httplib::Response &res, const json &j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  template <typename F> httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request &req, httplib::Response &res) {
      try {
        f(req, res);
      } catch (const HttpError &e) {
        send_json(res, {{"error", e.message}}, e.status);
      } catch (const Error &e) {
        const int status = e.kind() == ErrorKind::InvalidParameter || e.kind() == ErrorKind::Config ? 400 : 500;
        send_json(res, {{"error", std::string(to_string(e.kind())) + ": " + e.what()}}, status);
      } catch (const json::exception &e) {
        send_json(res, {{"error", std::string("bad JSON: ") + e.what()}}, 400);
      }
    };
  }

  void routes() {
    http.Get("/health", guarded([](const httplib::Request &, httplib::Response &res) { send_json(res, {{"ok", true}}); }));

    http.Post("/session", guarded([this](const httplib::Request &, httplib::Response &res) {
      auto s = std::make_shared<Session>();
      s->cloud = std::make_shared<const GaussianCloud>(snapshot->model.cloud);
      std::string id;
      {
        std::lock_guard<std::mutex> lock(sessions_mutex);
        id = "s" + std::to_string(next_session++);
        sessions[id] = s;
      }
      send_json(res, {{"session", id}, {"gaussians", s->cloud->size()}});
    }));

    http.Delete("/session", guarded([this](const httplib::Request &req, httplib::Response &res) {
      session_for(req);
      std::lock_guard<std::mutex> lock(sessions_mutex);
      sessions.erase(req.get_param_value("session"));
      send_json(res, {{"closed", true}});
    }));

    http.Get("/render", guarded([this](const httplib::Request &req, httplib::Response &res) {
      const std::string mode_name = req.has_param("mode") ? req.get_param_value("mode") : "rgb";
      RenderMode mode;
      try {
        mode = render_mode_from_string(mode_name);
      } catch (const Error &) {
        http_fail(400, "unknown mode '" + mode_name + "'");
      }
      const Camera cam = camera_for(req.get_param_value("pose"), req.get_param_value("frame_id"));
      auto s = session_for(req, false);
      SceneModel model = snapshot->model;
      std::optional<std::vector<double>> query;
      if (s) {
        std::lock_guard<std::mutex> lock(s->mutex);
        model.cloud = *s->cloud;
        if (s->query) query = s->query->feature;
      }
      if (mode == RenderMode::Similarity && !query) http_fail(409, "similarity mode needs an active query");
      const ImageF *input = nullptr;
      if (mode == RenderMode::Transient && req.has_param("frame_id")) input = &frame_by_id(std::stoi(req.get_param_value("frame_id"))).image;
      const ImageF img = render_view(model, cam, mode, input, query ? &*query : nullptr, &snapshot->pca);
      res.set_content(encode_png(img), "image/png");
    }));

    http.Post("/query", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto s = session_for(req);
      const json body = req.body.empty() ? json::object() : json::parse(req.body);
      std::lock_guard<std::mutex> lock(s->mutex);
      std::optional<QueryFeature> q = s->query;
      Camera view = snapshot->default_camera;
      bool view_set = false;
      if (body.contains("clicks") && !body["clicks"].empty()) {
        std::vector<Click> clicks;
        for (const auto &c : body["clicks"]) {
          if (!c.contains("x") || !c.contains("y")) http_fail(400, "click needs x and y");
          Click k;
          k.camera = camera_from_json(c);
          k.frame_id = c.value("frame_id", -1);
          k.x = c["x"].get<int>();
          k.y = c["y"].get<int>();
          if (k.x < 0 || k.y < 0 || k.x >= k.camera.width || k.y >= k.camera.height) http_fail(400, "click outside the image");
          clicks.push_back(k);
        }
        try {
          q = query_from_clicks(*s->cloud, clicks, snapshot->model.raster);
        } catch (const Error &e) {
          http_fail(400, std::string("invalid click: ") + e.what());
        }
        view = clicks.front().camera;
        view_set = true;
      }
      if (!q) http_fail(400, "no clicks and no stored query");
      if (body.contains("view")) {
        view = camera_from_json(body["view"]);
        view_set = true;
      } else if (!view_set && !q->provenance.empty()) {
        view = q->provenance.front().camera;
      }
      const double threshold = body.contains("threshold") ? body["threshold"].get<double>() : s->threshold;
      if (!(threshold >= 0.0)) http_fail(400, "threshold must be >= 0");

      const ImageF feat = rasterize_forward(*s->cloud, view, Channels::Feature, snapshot->model.raster).feature;
      const MaskImage valid = build_masks(view, snapshot->model.vignette).valid;
      const MaskImage mask = segment_2d(similarity_image(feat, q->feature), threshold, &valid);
      ImageF mask_img(mask.width, mask.height, 1);
      std::size_t pixels = 0;
      for (std::size_t p = 0; p < mask.data.size(); ++p) {
        mask_img.data[p] = mask.data[p];
        pixels += mask.data[p];
      }
      const Segmentation3D sel = segment_3d(*s->cloud, q->feature, threshold);
      s->query = q;
      s->threshold = threshold;
      s->selection = sel.indices;
      s->mask_png = encode_png(mask_img);
      ++s->mask_version;
      const json out = {{"mask", "/mask?session=" + req.get_param_value("session")},
                        {"mask_pixels", pixels},
                        {"threshold", threshold},
                        {"selected_gaussian_count", sel.indices.size()},
                        {"box", box_json(sel.box)},
                        {"query", q->feature}};
      send_json(res, out, sel.indices.empty() ? 422 : 200);
    }));

    http.Get("/mask", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto s = session_for(req);
      std::lock_guard<std::mutex> lock(s->mutex);
      if (s->mask_png.empty()) http_fail(409, "no query mask yet");
      res.set_content(s->mask_png, "image/png");
    }));

    http.Post("/edit", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto s = session_for(req);
      const json body = req.body.empty() ? json::object() : json::parse(req.body);
      if (!body.contains("action") || !body["action"].is_string()) http_fail(400, "edit needs an action");
      EditAction action;
      try {
        action.kind = edit_kind_from_string(body["action"].get<std::string>());
      } catch (const Error &) {
        http_fail(400, "invalid action '" + body["action"].get<std::string>() + "'");
      }
      if (action.kind == EditKind::Translate) {
        if (!body.contains("offset") || !body["offset"].is_array() || body["offset"].size() != 3)
          http_fail(400, "translate needs offset [x, y, z]");
        for (int k = 0; k < 3; ++k) action.offset[k] = body["offset"][static_cast<std::size_t>(k)].get<double>();
      }
      std::lock_guard<std::mutex> lock(s->mutex);
      std::vector<std::size_t> selection = s->selection;
      if (body.contains("selection")) selection = body["selection"].get<std::vector<std::size_t>>();
      for (std::size_t i : selection)
        if (i >= s->cloud->size()) http_fail(400, "selection index out of range");
      GaussianCloud edited;
      try {
        edited = edit_scene(*s->cloud, selection, action);
      } catch (const Error &e) {
        http_fail(400, e.what());
      }
      s->cloud = std::make_shared<const GaussianCloud>(std::move(edited));
      s->selection.clear();
      if (s->query) s->selection = segment_3d(*s->cloud, s->query->feature, s->threshold).indices;
      send_json(res, {{"action", body["action"]}, {"affected", selection.size()}, {"gaussians", s->cloud->size()}});
    }));

    http.Get("/cluster", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto s = session_for(req);
      HdbscanParams p;
      try {
        if (req.has_param("min_cluster_size")) p.min_cluster_size = std::stoi(req.get_param_value("min_cluster_size"));
        if (req.has_param("min_samples")) p.min_samples = std::stoi(req.get_param_value("min_samples"));
      } catch (const std::exception &) {
        http_fail(400, "malformed clustering parameters");
      }
      std::shared_ptr<const GaussianCloud> cloud;
      {
        std::lock_guard<std::mutex> lock(s->mutex);
        cloud = s->cloud;
      }
      const std::vector<int> labels = cluster_scene(*cloud, p);
      int k = 0;
      std::size_t noise = 0;
      for (int l : labels) {
        k = std::max(k, l + 1);
        noise += l < 0;
      }
      std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
      for (int l : labels)
        if (l >= 0) ++sizes[static_cast<std::size_t>(l)];
      json out = {{"cluster_count", k}, {"noise", noise}, {"sizes", sizes}};
      if (req.get_param_value("labels") == "1") out["labels"] = labels;
      send_json(res, out);
    }));

    http.Get("/export", guarded([this](const httplib::Request &req, httplib::Response &res) {
      auto s = session_for(req);
      const std::string what = req.has_param("what") ? req.get_param_value("what") : "scene";
      std::lock_guard<std::mutex> lock(s->mutex);
      if (what == "scene") {
        res.set_content(export_ply_bytes(*s->cloud), "application/octet-stream");
      } else if (what == "selection") {
        if (s->selection.empty()) http_fail(409, "no selection to export");
        res.set_content(export_ply_bytes(s->cloud->select(s->selection)), "application/octet-stream");
      } else {
        http_fail(400, "what must be scene or selection");
      }
    }));

    http.Get("/metrics", guarded([this](const httplib::Request &, httplib::Response &res) {
      json all = json::array();
      if (!metrics_path.empty() && fs::exists(metrics_path)) {
        std::ifstream in(metrics_path);
        std::string line;
        while (std::getline(in, line))
          if (!line.empty()) all.push_back(json::parse(line));
      }
      send_json(res, all);
    }));

    // Server-sent events: one "data:" line per metrics record; follow=0 closes after the current backlog.
    http.Get("/events", [this](const httplib::Request &req, httplib::Response &res) {
      const bool follow = req.get_param_value("follow") != "0";
      auto offset = std::make_shared<std::streamoff>(0);
      res.set_chunked_content_provider("text/event-stream", [this, follow, offset](std::size_t, httplib::DataSink &sink) {
        std::string batch;
        if (!metrics_path.empty() && fs::exists(metrics_path)) {
          std::ifstream in(metrics_path);
          in.seekg(*offset);
          std::string line;
          while (std::getline(in, line) && !in.eof()) {
            *offset = in.tellg();
            if (!line.empty()) batch += "data: " + line + "\n\n";
          }
        }
        if (!batch.empty() && !sink.write(batch.data(), batch.size())) return false;
        if (!follow || stopping) {
          sink.done();
          return true;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
        return sink.is_writable();
      });
    });
  }
};

StudioServer::StudioServer(const ServeOptions &options) : impl_(std::make_unique<Impl>(options)) {}
StudioServer::~StudioServer() { stop(); }

int StudioServer::bind() {
  if (impl_->options.port == 0) return impl_->http.bind_to_any_port(impl_->options.host);
  require(impl_->http.bind_to_port(impl_->options.host, impl_->options.port), ErrorKind::Io,
          "cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  return impl_->options.port;
}

void StudioServer::run() { impl_->http.listen_after_bind(); }

void StudioServer::stop() {
  if (!impl_) return;
  impl_->stopping = true;
  impl_->http.stop();
}

} // namespace splatseg::app
