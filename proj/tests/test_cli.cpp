// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
// Runs the splatseg binary end to end on a tiny scene.
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <fstream>

#include "app/commands.hpp"
#include "json.hpp"
#include "scene_fixtures.hpp"
#include "splatseg/config.hpp"
#include "splatseg/dataset_io.hpp"
#include "splatseg/error.hpp"
#include "splatseg/synth.hpp"

using namespace splatseg;
using namespace splatseg::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string &args, const fs::path &scratch) {
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string(SPLATSEG_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

/// Every regular file under dir (relative path -> bytes), skipping names in `skip`.
std::map<std::string, std::string> tree(const fs::path &dir, const std::set<std::string> &skip = {}) {
  std::map<std::string, std::string> files;
  for (const auto &e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || skip.count(e.path().filename().string())) continue;
    files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return files;
}

class Cli : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    SceneSpec spec = tiny_spec(41, 3, 0, 10);
    write_file((*dir_) / "scene.json", scene_spec_to_json(spec));
    const RunResult r = run_cli("synth --spec " + ((*dir_) / "scene.json").string() + " --out " + ((*dir_) / "data").string(), dir_->path());
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path path(const std::string &name) { return (*dir_) / name; }
  static RunResult run(const std::string &args) { return run_cli(args, dir_->path()); }
  static std::string fast_flags() {
    return "--quiet --set feature_dim=4 --set feature_width=24 --set feature_height=24 --set sample_budget=64 "
           "--set transient.channels=[4,8] --set transient.working_resolution=16 --set validation_interval=0 "
           "--set workers=1";
  }

  static TempDir *dir_;
};

TempDir *Cli::dir_ = nullptr;

} // namespace

TEST_F(Cli, SynthOutputLoadsAndIsDeterministic) {
  const Dataset ds = load_dataset(path("data"));
  EXPECT_EQ(ds.frames.size(), 10u);
  EXPECT_TRUE(fs::exists(path("data") / "gt" / "cloud.ply"));
  ASSERT_EQ(run("synth --spec " + path("scene.json").string() + " --out " + path("data2").string()).code, 0);
  EXPECT_EQ(tree(path("data")), tree(path("data2")));
}

TEST_F(Cli, TrainWithZeroIterationsWritesInitialCheckpoint) {
  const RunResult r = run("train --data " + path("data").string() + " --out " + path("run0").string() + " --set iterations=0 " + fast_flags());
  ASSERT_EQ(r.code, 0) << r.err;
  const TrainState s = load_checkpoint(path("run0") / "final.ckpt");
  EXPECT_EQ(s.iteration, 0);
  EXPECT_EQ(s.cloud.size(), load_dataset(path("data")).seed_points.positions.size());
  EXPECT_TRUE(fs::exists(path("run0") / "config.json"));
  EXPECT_TRUE(fs::exists(path("run0") / "model.ply"));
}

TEST_F(Cli, TrainIsByteIdenticalOutsideMetadata) {
  for (const char *name : {"runA", "runB"}) {
    const RunResult r = run("train --data " + path("data").string() + " --out " + path(name).string() +
                            " --set iterations=12 --set checkpoint_interval=5 " + fast_flags());
    ASSERT_EQ(r.code, 0) << r.err;
  }
  const auto a = tree(path("runA"), {"metadata.json"});
  EXPECT_EQ(a, tree(path("runB"), {"metadata.json"}));
  EXPECT_TRUE(a.count("metrics.jsonl"));
  EXPECT_TRUE(a.count("checkpoints/iter_000005.ckpt"));
  EXPECT_TRUE(a.count("checkpoints/iter_000010.ckpt"));
  std::istringstream lines(a.at("metrics.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const json j = json::parse(line);
    EXPECT_EQ(j.at("iteration").get<int>(), ++n);
  }
  EXPECT_EQ(n, 12);
}

TEST_F(Cli, ResumeContinuesTheMetricsLog) {
  ASSERT_EQ(run("train --data " + path("data").string() + " --out " + path("full").string() +
                " --set iterations=10 --set checkpoint_interval=5 " + fast_flags()).code, 0);
  fs::path mid;
  for (const auto &e : fs::directory_iterator(path("full") / "checkpoints")) mid = e.path();
  ASSERT_FALSE(mid.empty());
  const RunResult r = run("train --data " + path("data").string() + " --out " + path("resumed").string() + " --resume " + mid.string() + " --quiet");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_file(path("resumed") / "final.ckpt"), read_file(path("full") / "final.ckpt"));
}

TEST_F(Cli, EvalOfGroundTruthInitializedModelHitsTheCap) {
  ASSERT_EQ(run("train --data " + path("data").string() + " --out " + path("gtrun").string() + " --init-ply " +
                (path("data") / "gt" / "cloud.ply").string() + " --set iterations=0 " + fast_flags()).code, 0);
  const RunResult r = run("eval --checkpoint " + (path("gtrun") / "final.ckpt").string() + " --data " + path("data").string() +
                          " --out " + (path("gtrun") / "eval.json").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(read_file(path("gtrun") / "eval.json"));
  ASSERT_FALSE(j.at("psnr").at("frames").empty());
  for (const auto &f : j.at("psnr").at("frames")) EXPECT_EQ(f.at("all").get<double>(), 99.0);
  EXPECT_TRUE(fs::exists(path("gtrun") / "eval.csv"));
}

TEST_F(Cli, RenderQueryAndClusterWriteTheirOutputs) {
  ASSERT_EQ(run("train --data " + path("data").string() + " --out " + path("small").string() + " --set iterations=5 " + fast_flags()).code, 0);
  const std::string ckpt = (path("small") / "final.ckpt").string();
  RunResult r = run("render --checkpoint " + ckpt + " --data " + path("data").string() + " --frames 0,3 --out " + path("renders").string());
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char *mode : {"rgb", "feature_pca", "transient"}) EXPECT_EQ(std::distance(fs::directory_iterator(path("renders") / mode), {}), 2) << mode;

  write_file(path("clicks.json"), R"({"clicks": [{"frame_id": 0, "x": 24, "y": 24}], "threshold": 1e9})");
  r = run("query --checkpoint " + ckpt + " --data " + path("data").string() + " --clicks " + path("clicks.json").string() + " --out " + path("q").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const json q = json::parse(read_file(path("q") / "query.json"));
  EXPECT_EQ(q.at("selected_gaussian_count").get<std::size_t>(), load_checkpoint(ckpt).cloud.size());
  EXPECT_TRUE(fs::exists(path("q") / "masks" / "000000.png"));

  r = run("cluster --checkpoint " + ckpt + " --min-cluster-size 5 --out " + path("clusters").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("clusters") / "clusters.json"));
}

TEST_F(Cli, ErrorsUseDistinctExitCodesAndOneLine) {
  RunResult r = run("train --data " + path("nowhere").string() + " --out " + path("x").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(r.err.rfind("error: missing_file: ", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);

  r = run("train --data " + path("data").string() + " --out " + path("x").string() + " --set no.such.key=1");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: config: ", 0), 0u) << r.err;

  write_file(path("bad.ckpt"), "not a checkpoint");
  r = run("cluster --checkpoint " + path("bad.ckpt").string() + " --out " + path("x").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(r.err.rfind("error: parse: ", 0), 0u) << r.err;

  EXPECT_NE(run("frobnicate").code, 0);
  EXPECT_EQ(app::exit_code_for(ErrorKind::Config), 2);
  EXPECT_EQ(app::exit_code_for(ErrorKind::Io), 3);
  EXPECT_EQ(app::exit_code_for(ErrorKind::NumericFault), 4);
}

TEST_F(Cli, HelpEnumeratesEveryConfigKey) {
  const RunResult help = run("train --help");
  const RunResult table = run("config");
  ASSERT_EQ(help.code, 0);
  for (const auto &d : config_key_docs()) {
    EXPECT_NE(help.out.find("  " + d.key + " ("), std::string::npos) << d.key;
    EXPECT_NE(table.out.find("  " + d.key + " ("), std::string::npos) << d.key;
  }
  const RunResult defaults = run("config --defaults");
  EXPECT_EQ(config_from_json(defaults.out), TrainConfig{});
}
