// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "splatseg/image.hpp"
#include "splatseg/imaging.hpp"

namespace splatseg {

/// Per-pixel transient probability, H x W x 1 with entries in [0, 1].
using TransientMap = ImageF;

struct ImageLoss {
  double value = 0.0;
  ImageF grad; // d value / d rendered
};

/// Sum over pixels of |V*gt - V*rendered|^2.
ImageLoss loss_rgb(const ImageF &gt, const ImageF &rendered, const FormationMasks &masks);

struct WeightedImageLoss {
  double value = 0.0;
  ImageF grad_rendered;
  ImageF grad_transient;
};

/// Sum over pixels of (1 - P) |V*gt - V*rendered|^2.
WeightedImageLoss loss_rgb_weighted(const ImageF &gt, const ImageF &rendered, const TransientMap &transient,
                                    const FormationMasks &masks);

/// exp(-gamma |a - b|^2).
double rbf_similarity(std::span<const double> a, std::span<const double> b, double gamma);

struct SamplePixel {
  int x = 0;
  int y = 0;
  int label = 0;
  bool operator==(const SamplePixel &) const = default;
};

/// Pixels of the feature image used by one contrastive evaluation.
struct SamplePlan {
  std::vector<SamplePixel> pixels;
  std::size_t size() const { return pixels.size(); }
  bool empty() const { return pixels.empty(); }
};

struct ContrastiveLoss {
  double value = 0.0;
  std::vector<double> grad; // |U| x d, gradient per sampled feature vector
};

/// Contrastive lifting loss over sampled features. The anchor itself is counted among its positives
/// and in the denominator.
ContrastiveLoss loss_contrastive(const ImageF &feature_image, const SamplePlan &plan, double gamma);

/// Same loss from a packed |U| x d feature matrix and labels.
ContrastiveLoss loss_contrastive(std::span<const double> features, std::span<const int> labels, int dim,
                                 double gamma);

/// Scatters per-sample gradients into a zero feature-image gradient.
ImageF scatter_plan_gradient(const SamplePlan &plan, std::span<const double> grad, int width, int height, int dim);

/// Sum of P over valid pixels; gradient is the valid mask.
ImageLoss loss_transient_reg(const TransientMap &transient, const FormationMasks &masks);

struct LossParts {
  double rgb = 0.0;
  double contrastive = 0.0;
  double transient_reg = 0.0;
};

struct LossWeights {
  double rgb = 1.0;
  double contrastive = 0.1;
  double transient_reg = 0.01;
};

double loss_total(const LossParts &parts, const LossWeights &weights);

} // namespace splatseg
