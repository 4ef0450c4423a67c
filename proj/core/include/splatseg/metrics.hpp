// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splatseg/image.hpp"
#include "splatseg/imaging.hpp"
#include "splatseg/rasterizer.hpp"
#include "splatseg/transient_net.hpp"
#include "splatseg/types.hpp"

namespace splatseg {

/// Reported for exact matches.
inline constexpr double kPsnrCap = 99.0;

/// PSNR over pixels where region != 0 (all pixels when region is null). nullopt for an empty region.
std::optional<double> psnr(const ImageF &gt, const ImageF &rendered, const MaskImage *region = nullptr);

struct BestIou {
  double iou = 0.0;
  double threshold = 0.0;
};

/// Maximum IoU of {distance <= t} against gt over valid pixels, sweeping t over the distinct distances.
/// nullopt when gt has no valid pixel.
std::optional<BestIou> best_iou(const ImageF &distance, const MaskImage &gt, const MaskImage *valid = nullptr);

double iou_3d(const Box3 &a, const Box3 &b);

/// Best IoU against gt_box of the padded box of {Gaussians with distance <= t}, sweeping t over the distinct
/// distances. iou stays 0 when no threshold overlaps the box.
BestIou best_box_iou(const GaussianCloud &cloud, std::span<const double> distances, const Box3 &gt_box);

/// A trained scene as seen by evaluation, query and serving code.
struct SceneModel {
  GaussianCloud cloud;
  RasterSettings raster;
  VignetteParams vignette;
  std::optional<TransientPredictor> predictor;
};

struct EvalOptions {
  std::uint64_t seed = 0;
  Split split = Split::Novel;   // frames segmented and scored
  int max_frames = 0;           // 0: all frames of the split, else uniform subsample
  int cross_view_clicks = 5;
  int min_object_pixels = 20;   // smaller GT masks count as not visible
  bool quantize = true;         // round renders to 8 bits before PSNR, like the stored images
};

struct FramePsnr {
  int frame_id = 0;
  std::optional<double> all;
  std::optional<double> static_region;
  std::optional<double> dynamic_region;
};

struct FrameIou {
  int frame_id = 0;
  double iou = 0.0;
  double threshold = 0.0;
};

struct ObjectIou {
  int object_id = 0;
  bool dynamic = false;
  double iou = 0.0; // mean over frames
  std::vector<FrameIou> frames;
  std::string excluded; // non-empty: reason the object has no score
};

struct Object3dIou {
  int object_id = 0;
  double iou = 0.0;
  double threshold = 0.0;
};

struct EvalReport {
  EvalOptions options;
  std::vector<FramePsnr> psnr_frames;
  double psnr_all = 0.0;
  double psnr_static = 0.0;
  double psnr_dynamic = 0.0;
  std::vector<ObjectIou> in_view;
  std::vector<ObjectIou> cross_view;
  std::vector<Object3dIou> iou3d;

  /// Mean over scored objects; dynamic filter: nullopt = all, true = dynamic only, false = static only.
  static double miou(const std::vector<ObjectIou> &objects, std::optional<bool> dynamic);
  double miou_3d() const;

  std::string to_json() const;
  std::string to_csv() const;
};

std::vector<FramePsnr> eval_psnr(const SceneModel &model, const Dataset &dataset, const EvalOptions &options);
std::vector<ObjectIou> eval_in_view(const SceneModel &model, const Dataset &dataset, const EvalOptions &options);
std::vector<ObjectIou> eval_cross_view(const SceneModel &model, const Dataset &dataset, const EvalOptions &options);
std::vector<Object3dIou> eval_3d(const SceneModel &model, const Dataset &dataset, const EvalOptions &options);

/// All of the above.
EvalReport evaluate(const SceneModel &model, const Dataset &dataset, const EvalOptions &options);

/// Frames of the evaluated split after optional subsampling.
std::vector<std::size_t> evaluation_frames(const Dataset &dataset, const EvalOptions &options);

/// Area under the ROC curve of scores against binary labels (ties counted half).
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

} // namespace splatseg
