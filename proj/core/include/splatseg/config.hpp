// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatseg/densify.hpp"
#include "splatseg/imaging.hpp"
#include "splatseg/losses.hpp"
#include "splatseg/rasterizer.hpp"
#include "splatseg/transient_net.hpp"

namespace splatseg {

/// Version tag written into every config file.
inline constexpr int kConfigVersion = 1;

struct LearningRates {
  double position_init = 1.6e-4;
  double position_final = 1.6e-6;
  bool position_scaled_by_extent = true;
  double scale = 5e-3;
  double rotation = 1e-3;
  double opacity = 5e-2;
  double color = 2.5e-3;
  double feature = 2.5e-3;
  double transient = 1e-5;

  bool operator==(const LearningRates &) const = default;
};

struct DensifySchedule {
  bool enabled = true;
  int start = 500;
  int interval = 100;
  int stop = 15000;
  int opacity_reset_interval = 3000;
  DensifyThresholds thresholds;

  bool operator==(const DensifySchedule &) const = default;
};

struct TrainConfig {
  int feature_dim = 16;
  double gamma = 0.01;
  double delta = 0.5;
  LossWeights weights;
  int sample_budget = 4096;
  int iterations = 3000;
  LearningRates lr;
  DensifySchedule densify;
  int sh_degree = 0;
  int feature_width = 64;
  int feature_height = 64;
  std::uint64_t seed = 0;

  bool transient_enabled = true;
  TransientNetConfig transient_net;
  VignetteParams vignette;
  RasterSettings raster;

  double init_opacity = 0.1;
  double init_feature_std = 0.01;
  int random_init_points = 0; // > 0: ignore seed points and draw this many uniformly in the seed bounds

  int validation_interval = 500;
  int checkpoint_interval = 0; // 0: only the final checkpoint
  int workers = 0;             // 0: hardware concurrency

  /// Throws Config on any violated invariant.
  void validate() const;
  bool operator==(const TrainConfig &) const;
};

struct ConfigKeyDoc {
  std::string key; // dotted path
  std::string type;
  std::string default_value;
  std::string description;
};

/// Every configuration key with its type, default and meaning.
const std::vector<ConfigKeyDoc> &config_key_docs();

/// Serializes the full config as a nested JSON document.
std::string config_to_json(const TrainConfig &config, int indent = 2);

/// Parses a JSON document over the defaults. Unknown keys and wrong types are Config errors.
TrainConfig config_from_json(const std::string &text, const TrainConfig &base = {});

/// Applies one "dotted.key=value" override (value parsed as JSON, falling back to a bare string).
void apply_override(TrainConfig &config, const std::string &assignment);

} // namespace splatseg
