// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
// HTTP integration tests against an in-process server on a free port.
#include <gtest/gtest.h>

#include <thread>

#include "app/commands.hpp"
#include "app/pca.hpp"
#include "app/serve.hpp"
#include "httplib.h"
#include "json.hpp"
#include "scene_fixtures.hpp"
#include "splatseg/dataset_io.hpp"
#include "splatseg/segment.hpp"
#include "splatseg/synth.hpp"
#include "splatseg/trainer.hpp"

using namespace splatseg;
using namespace splatseg::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string pose_param(const Camera &c) {
  std::ostringstream s;
  s.precision(17);
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) s << c.rotation(r, k) << ',';
    s << c.translation[r] << ',';
  }
  s << "0,0,0,1";
  return s.str();
}

class Serve : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("serve");
    scene_ = new SynthScene(generate(tiny_spec(51, 3, 0, 10)));
    save_dataset(scene_->dataset, (*dir_) / "data");

    // Ground-truth geometry with one-hot object features.
    TrainConfig cfg;
    const int dim = static_cast<int>(scene_->spec.objects.size()) + 1;
    cfg.feature_dim = dim;
    cfg.sh_degree = scene_->clouds.front().sh_degree();
    cfg.transient_net.channels = {4, 8};
    cfg.transient_net.working_resolution = 16;
    GaussianCloud cloud = scene_->clouds.front().with_feature_dim(dim);
    for (std::size_t i = 0; i < cloud.size(); ++i) cloud.feature_of(i)[scene_->gaussian_object[i]] = 1.0;
    TrainState state = init_from_cloud(cloud, cfg, scene_->dataset.scene_extent());
    fs::create_directories((*dir_) / "run");
    save_checkpoint(state, (*dir_) / "run" / "final.ckpt");
    std::string log;
    for (int k = 1; k <= 3; ++k) log += "{\"iteration\":" + std::to_string(k) + ",\"loss_total\":1.5}\n";
    write_file((*dir_) / "run" / "metrics.jsonl", log);
    model_ = new SceneModel(app::model_from_state(state));
    before_ = snapshot_files();

    app::ServeOptions o;
    o.run_dir = (*dir_) / "run";
    o.data = (*dir_) / "data";
    o.port = 0;
    server_ = new app::StudioServer(o);
    port_ = server_->bind();
    thread_ = new std::thread([] { server_->run(); });
  }

  static void TearDownTestSuite() {
    // Nothing the server did may have touched the files it serves.
    if (snapshot_files() != before_) ADD_FAILURE() << "serve modified files on disk";
    server_->stop();
    thread_->join();
    delete thread_;
    delete server_;
    delete model_;
    delete scene_;
    delete dir_;
  }

  static std::map<std::string, std::string> snapshot_files() {
    std::map<std::string, std::string> files;
    for (const auto &e : fs::recursive_directory_iterator(dir_->path()))
      if (e.is_regular_file()) files[e.path().string()] = read_file(e.path());
    return files;
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }

  std::string new_session() {
    auto res = client().Post("/session");
    EXPECT_TRUE(res && res->status == 200);
    return json::parse(res->body).at("session").get<std::string>();
  }

  httplib::Result post(const std::string &path, const json &body) {
    return client().Post(path.c_str(), body.dump(), "application/json");
  }

  /// A pixel of frame 0 covered by the object with the most pixels there.
  static std::pair<int, int> object_pixel() {
    const Frame &f = scene_->dataset.frames[0];
    std::map<int, int> counts;
    for (int v : f.truth->instance_labels.data)
      if (v > 0) ++counts[v];
    int best = 0, most = 0;
    for (auto [id, n] : counts)
      if (n > most) {
        best = id;
        most = n;
      }
    const auto &labels = f.truth->instance_labels;
    for (int y = labels.height / 4; y < labels.height; ++y)
      for (int x = labels.width / 4; x < labels.width; ++x)
        if (labels.at(x, y) == best) return {x, y};
    return {-1, -1};
  }

  /// Query feature of a click on object_pixel(), and a threshold that selects exactly the nearest feature group.
  std::pair<std::vector<double>, double> probe_query() {
    const std::string s = new_session();
    const auto [x, y] = object_pixel();
    auto r = post("/query?session=" + s, {{"clicks", {{{"frame_id", 0}, {"x", x}, {"y", y}}}}, {"threshold", 100.0}});
    const auto q = json::parse(r->body).at("query").get<std::vector<double>>();
    auto d = feature_distances(model_->cloud, q);
    std::sort(d.begin(), d.end());
    const double next = *std::upper_bound(d.begin(), d.end(), d.front());
    return {q, 0.5 * (d.front() + next)};
  }

  static TempDir *dir_;
  static SynthScene *scene_;
  static SceneModel *model_;
  static app::StudioServer *server_;
  static std::thread *thread_;
  static int port_;
  static std::map<std::string, std::string> before_;
};

TempDir *Serve::dir_ = nullptr;
SynthScene *Serve::scene_ = nullptr;
SceneModel *Serve::model_ = nullptr;
app::StudioServer *Serve::server_ = nullptr;
std::thread *Serve::thread_ = nullptr;
int Serve::port_ = 0;
std::map<std::string, std::string> Serve::before_;

} // namespace

TEST_F(Serve, HealthAndSessions) {
  auto res = client().Get("/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const std::string a = new_session(), b = new_session();
  EXPECT_NE(a, b);
  EXPECT_EQ(client().Delete(("/session?session=" + b).c_str())->status, 200);
  EXPECT_EQ(client().Get(("/mask?session=" + b).c_str())->status, 404);
}

TEST_F(Serve, RenderMatchesTheCommandCodePath) {
  const Frame &f = scene_->dataset.frames[2];
  auto res = client().Get(("/render?mode=rgb&frame_id=" + std::to_string(f.frame_id)).c_str());
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(res->body, app::encode_png(app::render_view(*model_, f.camera, app::RenderMode::Rgb, nullptr, nullptr, nullptr)));

  auto by_pose = client().Get(("/render?mode=rgb&pose=" + pose_param(f.camera)).c_str());
  ASSERT_TRUE(by_pose);
  EXPECT_EQ(by_pose->status, 200);
}

TEST_F(Serve, RenderErrors) {
  EXPECT_EQ(client().Get("/render?mode=similarity")->status, 409);
  const std::string s = new_session();
  EXPECT_EQ(client().Get(("/render?mode=similarity&session=" + s).c_str())->status, 409);
  EXPECT_EQ(client().Get("/render?mode=rgb&pose=1,2,3")->status, 400);
  EXPECT_EQ(client().Get("/render?mode=rgb&pose=a,b")->status, 400);
  EXPECT_EQ(client().Get("/render?mode=sepia")->status, 400);
  EXPECT_EQ(client().Get("/render?mode=rgb&frame_id=9999")->status, 400);
  EXPECT_EQ(client().Get("/render?mode=rgb&session=nope")->status, 404);
}

TEST_F(Serve, QueryIsIdempotentAndMonotoneInThreshold) {
  const std::string s = new_session();
  const auto [x, y] = object_pixel();
  ASSERT_GE(x, 0);
  const double t0 = probe_query().second;
  const json click = {{"clicks", {{{"frame_id", 0}, {"x", x}, {"y", y}}}}, {"threshold", t0}};
  auto r1 = post("/query?session=" + s, click);
  auto r2 = post("/query?session=" + s, click);
  ASSERT_TRUE(r1 && r2);
  EXPECT_EQ(r1->status, 200) << r1->body;
  EXPECT_EQ(r1->body, r2->body);
  const json j = json::parse(r1->body);
  EXPECT_GT(j.at("selected_gaussian_count").get<int>(), 0);
  EXPECT_FALSE(j.at("box").is_null());

  // Threshold-only updates reuse the stored query.
  std::size_t previous = 0;
  for (double t : {0.0, 0.5 * t0, t0, 2.0 * t0, 3.0 * t0, 100.0}) {
    auto r = post("/query?session=" + s, {{"threshold", t}});
    ASSERT_TRUE(r);
    const json k = json::parse(r->body);
    const std::size_t count = k.at("selected_gaussian_count").get<std::size_t>();
    EXPECT_GE(count, previous) << t;
    EXPECT_EQ(k.at("query"), j.at("query"));
    previous = count;
  }
  EXPECT_EQ(previous, model_->cloud.size());
  auto mask = client().Get(("/mask?session=" + s).c_str());
  ASSERT_TRUE(mask);
  EXPECT_EQ(mask->status, 200);
  EXPECT_EQ(client().Get(("/render?mode=similarity&session=" + s).c_str())->status, 200);
}

TEST_F(Serve, QueryErrors) {
  const std::string s = new_session();
  EXPECT_EQ(post("/query?session=nope", {{"threshold", 0.1}})->status, 404);
  EXPECT_EQ(post("/query", {{"threshold", 0.1}})->status, 404);
  EXPECT_EQ(post("/query?session=" + s, {{"threshold", 0.1}})->status, 400); // no stored query
  EXPECT_EQ(post("/query?session=" + s, {{"clicks", {{{"frame_id", 0}, {"x", 500}, {"y", 1}}}}})->status, 400);
  EXPECT_EQ(post("/query?session=" + s, {{"clicks", {{{"frame_id", 0}, {"y", 1}}}}})->status, 400);
  EXPECT_EQ(client().Post(("/query?session=" + s).c_str(), "{oops", "application/json")->status, 400);

  // Rendered query features are blends, so no Gaussian sits at distance zero: an empty selection.
  const auto [x, y] = object_pixel();
  auto r = post("/query?session=" + s, {{"clicks", {{{"frame_id", 0}, {"x", x}, {"y", y}}}}, {"threshold", 0.0}});
  ASSERT_TRUE(r);
  const json j = json::parse(r->body);
  const auto q = j.at("query").get<std::vector<double>>();
  const auto d = feature_distances(model_->cloud, q);
  ASSERT_GT(*std::min_element(d.begin(), d.end()), 0.0);
  EXPECT_EQ(r->status, 422);
  EXPECT_EQ(j.at("selected_gaussian_count").get<int>(), 0);
}

TEST_F(Serve, RemoveEditMatchesLibraryAndIsSessionLocal) {
  const std::string a = new_session(), b = new_session();
  const auto [x, y] = object_pixel();
  const double t0 = probe_query().second;
  auto q = post("/query?session=" + b, {{"clicks", {{{"frame_id", 0}, {"x", x}, {"y", y}}}}, {"threshold", t0}});
  ASSERT_EQ(q->status, 200);
  const json qj = json::parse(q->body);
  const Segmentation3D sel = segment_3d(model_->cloud, qj.at("query").get<std::vector<double>>(), t0);
  ASSERT_LT(sel.indices.size(), model_->cloud.size());
  ASSERT_EQ(sel.indices.size(), qj.at("selected_gaussian_count").get<std::size_t>());

  const std::string frame = "&mode=rgb&frame_id=" + std::to_string(scene_->dataset.frames[0].frame_id);
  const std::string a_before = client().Get(("/render?session=" + a + frame).c_str())->body;
  auto e = post("/edit?session=" + b, {{"action", "remove"}});
  ASSERT_EQ(e->status, 200) << e->body;
  EXPECT_EQ(json::parse(e->body).at("gaussians").get<std::size_t>(), model_->cloud.size() - sel.indices.size());

  SceneModel edited = *model_;
  edited.cloud = edit_scene(model_->cloud, sel.indices, EditAction{EditKind::Remove});
  const std::string b_after = client().Get(("/render?session=" + b + frame).c_str())->body;
  EXPECT_EQ(b_after, app::encode_png(app::render_view(edited, scene_->dataset.frames[0].camera, app::RenderMode::Rgb,
                                                      nullptr, nullptr, nullptr)));
  EXPECT_NE(b_after, a_before);
  EXPECT_EQ(client().Get(("/render?session=" + a + frame).c_str())->body, a_before);
  EXPECT_EQ(client().Get(("/render" + std::string("?") + frame.substr(1)).c_str())->body, a_before);
}

TEST_F(Serve, EditErrors) {
  const std::string s = new_session();
  EXPECT_EQ(post("/edit?session=" + s, {{"action", "explode"}})->status, 400);
  EXPECT_EQ(post("/edit?session=" + s, json::object())->status, 400);
  EXPECT_EQ(post("/edit?session=" + s, {{"action", "translate"}, {"selection", {0}}})->status, 400);
  EXPECT_EQ(post("/edit?session=" + s, {{"action", "remove"}, {"selection", {1u << 30}}})->status, 400);
  EXPECT_EQ(post("/edit?session=nope", {{"action", "remove"}})->status, 404);
  auto t = post("/edit?session=" + s, {{"action", "translate"}, {"selection", {0, 1}}, {"offset", {0.1, 0, 0}}});
  EXPECT_EQ(t->status, 200);
}

TEST_F(Serve, ExportOfUneditedSessionEqualsPlyExport) {
  const std::string s = new_session();
  auto res = client().Get(("/export?what=scene&session=" + s).c_str());
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->body, export_ply_bytes(model_->cloud));
  EXPECT_EQ(client().Get(("/export?what=selection&session=" + s).c_str())->status, 409);
  EXPECT_EQ(client().Get(("/export?what=everything&session=" + s).c_str())->status, 400);
}

TEST_F(Serve, ClusterSummaryMatchesLibrary) {
  const std::string s = new_session();
  auto res = client().Get(("/cluster?min_cluster_size=5&labels=1&session=" + s).c_str());
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const json j = json::parse(res->body);
  HdbscanParams p;
  p.min_cluster_size = 5;
  EXPECT_EQ(j.at("labels").get<std::vector<int>>(), cluster_scene(model_->cloud, p));
  std::size_t total = j.at("noise").get<std::size_t>();
  for (auto n : j.at("sizes")) total += n.get<std::size_t>();
  EXPECT_EQ(total, model_->cloud.size());
  EXPECT_EQ(client().Get(("/cluster?min_cluster_size=x&session=" + s).c_str())->status, 400);
}

TEST_F(Serve, MetricsAndEventStream) {
  auto m = client().Get("/metrics");
  ASSERT_TRUE(m);
  EXPECT_EQ(json::parse(m->body).size(), 3u);
  auto ev = client().Get("/events?follow=0");
  ASSERT_TRUE(ev);
  EXPECT_EQ(ev->get_header_value("Content-Type"), "text/event-stream");
  std::size_t events = 0;
  for (std::size_t p = ev->body.find("data: "); p != std::string::npos; p = ev->body.find("data: ", p + 1)) ++events;
  EXPECT_EQ(events, 3u);
}

TEST_F(Serve, ConcurrentSessionsAgree) {
  const auto [x, y] = object_pixel();
  const double t0 = probe_query().second;
  const json click = {{"clicks", {{{"frame_id", 0}, {"x", x}, {"y", y}}}}, {"threshold", t0}};
  std::vector<json> bodies(6);
  std::vector<std::thread> workers;
  for (std::size_t k = 0; k < bodies.size(); ++k) {
    workers.emplace_back([&, k] {
      const std::string s = new_session();
      if (k % 2 == 1) {
        post("/query?session=" + s, click);
        post("/edit?session=" + s, {{"action", "remove"}}); // drops the selected object
      }
      bodies[k] = json::parse(post("/query?session=" + s, click)->body);
      bodies[k].erase("mask");
    });
  }
  for (auto &w : workers) w.join();
  for (std::size_t k = 2; k < bodies.size(); ++k) EXPECT_EQ(bodies[k], bodies[k % 2]) << k;
  EXPECT_GT(bodies[0].at("selected_gaussian_count").get<int>(), 0);
  EXPECT_NE(bodies[1].at("query"), bodies[0].at("query")); // the click now lands behind the removed object
}
