// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "splatseg/image.hpp"
#include "splatseg/losses.hpp"
#include "splatseg/optimizer.hpp"

namespace splatseg {

struct TransientNetConfig {
  int working_resolution = 64;           // square; must be divisible by 2^levels
  std::vector<int> channels{16, 32, 64, 64}; // encoder widths, one stride-2 block each
  double leaky_slope = 0.1;
  double final_bias = -2.0;
  std::uint64_t seed = 7;

  void validate() const;
  bool operator==(const TransientNetConfig &) const = default;
};

/// Activations retained by TransientPredictor::forward for the backward pass.
struct TransientForward {
  int width = 0;  // full-resolution output size
  int height = 0;
  std::vector<Eigen::MatrixXd> activations; // channels x (res*res), one per layer input/output
  std::vector<int> resolutions;
  Eigen::MatrixXd probability_small; // 1 x (R*R), after the logistic
  TransientMap probability;          // H x W x 1

  bool retained() const { return !activations.empty(); }
};

/// Small encoder-decoder producing per-pixel transient probabilities.
class TransientPredictor {
public:
  struct Layer {
    int in = 0;
    int out = 0;
    int kernel = 3;
    int stride = 1;
    std::size_t weight_offset = 0; // out x (in * kernel * kernel), row-major
    std::size_t bias_offset = 0;
    bool operator==(const Layer &) const = default;
  };

  TransientPredictor() : TransientPredictor(TransientNetConfig{}) {}
  explicit TransientPredictor(const TransientNetConfig &config);

  const TransientNetConfig &config() const { return config_; }
  const std::vector<Layer> &layers() const { return layers_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::vector<double> &parameters() { return params_; }
  const std::vector<double> &parameters() const { return params_; }
  AdamMoments &moments() { return moments_; }
  const AdamMoments &moments() const { return moments_; }

  TransientForward forward(const ImageF &image) const;
  TransientMap predict(const ImageF &image) const { return forward(image).probability; }

  /// Parameter gradient for dL/dP at full resolution.
  std::vector<double> backward(const TransientForward &fwd, const TransientMap &grad) const;

  /// Adam step (0.9, 0.999, 1e-8).
  void step(std::span<const double> grads, double learning_rate);

  bool operator==(const TransientPredictor &) const = default;

private:
  TransientNetConfig config_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
  AdamMoments moments_;
};

} // namespace splatseg
