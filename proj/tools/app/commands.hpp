// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "splatseg/dataset_io.hpp"
#include "splatseg/metrics.hpp"
#include "splatseg/segment.hpp"
#include "splatseg/synth.hpp"
#include "splatseg/trainer.hpp"

namespace splatseg::app {

/// Process exit code for an error kind: 2 config, 3 I/O, 4 numeric fault, 1 anything else.
int exit_code_for(ErrorKind kind);

/// Loads a checkpoint into the read-only model used by eval, render, query, cluster and serve.
SceneModel model_from_state(const TrainState &state);

struct SynthOptions {
  std::string scene;                     // builtin name, used when spec_file is empty
  std::filesystem::path spec_file;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;     // overrides the scene seed
};
/// Writes the dataset plus gt/cloud.ply (ground-truth cloud at t = 0) and scene.json (resolved spec).
SynthScene cmd_synth(const SynthOptions &options);

struct TrainOptions {
  std::filesystem::path data;
  std::filesystem::path config_file;     // optional
  std::vector<std::string> overrides;    // key=value
  std::filesystem::path out;
  std::filesystem::path init_ply;        // optional: start from this cloud instead of seed points
  std::filesystem::path resume;          // optional: continue from this checkpoint
  bool quiet = false;
};
/// Run directory: config.json, metrics.jsonl, checkpoints/, final.ckpt, model.ply, metadata.json.
TrainState cmd_train(const TrainOptions &options);

TrainConfig load_config(const std::filesystem::path &config_file, const std::vector<std::string> &overrides);

enum class RenderMode { Rgb, FeaturePca, Transient, Similarity };
const char *to_string(RenderMode mode);
RenderMode render_mode_from_string(const std::string &name);

struct RenderOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path poses_file;      // optional JSON list of {camera} records instead of dataset frames
  std::string frames = "all";            // all | train | validation | novel | comma-separated frame ids
  std::vector<RenderMode> modes{RenderMode::Rgb, RenderMode::FeaturePca, RenderMode::Transient};
  std::filesystem::path out;
};
void cmd_render(const RenderOptions &options);

struct EvalCommandOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;             // report JSON; CSV written next to it
  EvalOptions eval;
};
EvalReport cmd_eval(const EvalCommandOptions &options);

struct QueryOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path clicks_file;
  std::optional<double> threshold;       // overrides the clicks file
  std::filesystem::path out;
};
/// Writes query.json, masks/<frame>.png and selection.ply.
std::string cmd_query(const QueryOptions &options);

struct ClusterOptions {
  std::filesystem::path checkpoint;
  HdbscanParams params;
  std::filesystem::path out;
};
/// Writes clusters.json and cluster_<label>.ply per cluster.
std::vector<int> cmd_cluster(const ClusterOptions &options);

/// Camera from a JSON record {fx, fy, cx, cy, width, height, valid_radius, world_to_camera[16]}.
Camera camera_from_json_text(const std::string &text);
/// Parses "a,b,...,p" (16 numbers, row-major world-to-camera).
Mat4 parse_pose(const std::string &text);

/// PNG bytes (8-bit) of an image with 1 or 3 channels in [0, 1].
std::string encode_png(const ImageF &image);

/// Image for a frame or pose in one of the render modes. Transient maps use `input` as the predictor input
/// when given, else the render itself. Similarity needs a query.
ImageF render_view(const SceneModel &model, const Camera &camera, RenderMode mode, const ImageF *input,
                   const std::vector<double> *query, const class FeaturePca *pca);

} // namespace splatseg::app
