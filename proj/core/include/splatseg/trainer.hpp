// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "splatseg/config.hpp"
#include "splatseg/densify.hpp"
#include "splatseg/imaging.hpp"
#include "splatseg/losses.hpp"
#include "splatseg/optimizer.hpp"
#include "splatseg/transient_net.hpp"
#include "splatseg/types.hpp"

namespace splatseg {

/// One line of the metrics log.
struct MetricsRecord {
  std::int64_t iteration = 0;
  int frame_id = -1;
  double loss_rgb = 0.0;
  double loss_contrastive = 0.0;
  double loss_transient_reg = 0.0;
  double loss_total = 0.0;
  std::size_t samples = 0;
  std::size_t gaussians = 0;
  std::optional<double> validation_psnr;

  bool operator==(const MetricsRecord &) const = default;
};

struct TrainState {
  TrainConfig config;
  GaussianCloud cloud;
  GaussianOptimizer optimizer;
  TransientPredictor predictor;
  DensifyStats stats;
  std::int64_t iteration = 0;
  std::mt19937_64 rng;
  std::vector<std::size_t> frame_order; // current epoch permutation of training frame indices
  std::size_t order_cursor = 0;
  double scene_extent = 1.0;
  std::vector<MetricsRecord> curves;

  bool operator==(const TrainState &) const;
};

/// One Gaussian per seed point (or config.random_init_points uniform points inside the seed bounds).
TrainState init_from_points(const SeedPoints &points, const TrainConfig &config, double scene_extent);

/// Starts from an existing cloud (features widened or truncated to config.feature_dim).
TrainState init_from_cloud(const GaussianCloud &cloud, const TrainConfig &config, double scene_extent);

/// Mean distance to the (up to) 3 nearest other points, per point.
std::vector<double> nearest_neighbor_scales(const std::vector<Vec3> &points);

/// Uniform sample without replacement of pixels that are labeled, valid and (if given) below delta.
SamplePlan sample_contrastive_pixels(const LabelImage &mask, const MaskImage &valid, const TransientMap *transient,
                                     double delta, int budget, std::mt19937_64 &rng);

/// Loss bookkeeping of one step plus the images it used.
struct StepResult {
  MetricsRecord record;
  TransientMap transient; // full resolution (zeros when disabled)
};

/// Shared per-run caches (formation masks at both resolutions).
class TrainContext {
public:
  explicit TrainContext(const TrainConfig &config);
  std::shared_ptr<const FormationMasks> full_masks(const Camera &camera) { return full_.get(camera); }
  std::shared_ptr<const FormationMasks> feature_masks(const Camera &feature_camera) { return feature_.get(feature_camera); }

private:
  MaskCache full_;
  MaskCache feature_;
};

/// Loss terms of one step, computed without mutating anything.
struct StepGradients {
  LossParts parts;
  double total = 0.0;
  std::size_t samples = 0;
  ParamGradients gaussians;
  std::vector<double> predictor; // empty when the predictor is disabled
  TransientMap transient;
};

/// Forward and backward for one frame. rng drives contrastive sampling.
StepGradients compute_step(const TrainState &state, const Frame &frame, TrainContext &context, std::mt19937_64 &rng);

/// Full optimization step on one training frame, including density control at schedule points.
StepResult train_step(TrainState &state, const Frame &frame, TrainContext &context);

/// Position learning rate at a given iteration (log-linear decay, optionally scaled by extent).
double position_learning_rate(const TrainConfig &config, std::int64_t iteration, double scene_extent);

struct TrainCallbacks {
  std::function<void(const MetricsRecord &)> on_record;
  std::function<void(const TrainState &)> on_checkpoint;
};

/// Validation PSNR over the valid pixels of the Validation frames (nullopt if there are none).
std::optional<double> validation_psnr(const TrainState &state, const Dataset &dataset, TrainContext &context);

/// Runs until state.iteration == state.config.iterations.
void train(TrainState &state, const Dataset &dataset, const TrainCallbacks &callbacks = {});

/// Index of the next training frame in the epoch-shuffled order.
std::size_t next_training_frame(TrainState &state, const Dataset &dataset);

} // namespace splatseg
