// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/losses.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "splatseg/error.hpp"

namespace splatseg {
namespace {

void check_transient(const TransientMap &p, const ImageF &rendered) {
  require(p.channels == 1, ErrorKind::Contract, "transient map must have one channel");
  require_same_extent(p, rendered, "transient map");
  for (double v : p.data) {
    require(v >= 0.0 && v <= 1.0, ErrorKind::Contract, "transient probability outside [0, 1]");
  }
}

} // namespace

ImageLoss loss_rgb(const ImageF &gt, const ImageF &rendered, const FormationMasks &masks) {
  require_same_shape(gt, rendered, "loss_rgb");
  require_same_extent(rendered, masks.vignette, "loss_rgb masks");
  ImageLoss out{0.0, ImageF(rendered.width, rendered.height, rendered.channels)};
  const std::size_t c = static_cast<std::size_t>(rendered.channels);
  for (std::size_t p = 0; p < rendered.pixel_count(); ++p) {
    const double v = masks.vignette.data[p];
    if (v == 0.0) continue;
    // Per-pixel partial sums, in the same order as loss_rgb_weighted.
    double sq = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double d = v * rendered.data[p * c + k] - v * gt.data[p * c + k];
      sq += d * d;
      out.grad.data[p * c + k] = 2.0 * v * d;
    }
    out.value += sq;
  }
  return out;
}

WeightedImageLoss loss_rgb_weighted(const ImageF &gt, const ImageF &rendered, const TransientMap &transient,
                                    const FormationMasks &masks) {
  require_same_shape(gt, rendered, "loss_rgb_weighted");
  require_same_extent(rendered, masks.vignette, "loss_rgb_weighted masks");
  check_transient(transient, rendered);
  WeightedImageLoss out{0.0, ImageF(rendered.width, rendered.height, rendered.channels),
                        ImageF(rendered.width, rendered.height, 1)};
  const std::size_t c = static_cast<std::size_t>(rendered.channels);
  for (std::size_t p = 0; p < rendered.pixel_count(); ++p) {
    const double v = masks.vignette.data[p];
    if (v == 0.0) continue;
    const double w = 1.0 - transient.data[p];
    double sq = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double d = v * rendered.data[p * c + k] - v * gt.data[p * c + k];
      sq += d * d;
      out.grad_rendered.data[p * c + k] = 2.0 * w * v * d;
    }
    out.value += w * sq;
    out.grad_transient.data[p] = -sq;
  }
  return out;
}

double rbf_similarity(std::span<const double> a, std::span<const double> b, double gamma) {
  require(a.size() == b.size(), ErrorKind::Contract, "rbf_similarity: dimension mismatch");
  require(gamma > 0.0, ErrorKind::InvalidParameter, "rbf_similarity: gamma must be positive");
  double sq = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sq += (a[k] - b[k]) * (a[k] - b[k]);
  return std::exp(-gamma * sq);
}

ContrastiveLoss loss_contrastive(std::span<const double> features, std::span<const int> labels, int dim,
                                 double gamma) {
  const std::size_t n = labels.size();
  require(n >= 2, ErrorKind::DegeneratePlan, "contrastive loss needs at least 2 sampled pixels");
  require(gamma > 0.0, ErrorKind::InvalidParameter, "contrastive loss: gamma must be positive");
  require(dim > 0 && features.size() == n * static_cast<std::size_t>(dim), ErrorKind::Contract,
          "contrastive loss: feature buffer does not match |U| x d");

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto m = static_cast<Eigen::Index>(n);
  const Eigen::Map<const RowMat> f(features.data(), m, dim);
  const Eigen::VectorXd sq_norm = f.rowwise().squaredNorm();
  // Logits s_uv = -gamma |f_u - f_v|^2 are <= 0 with s_uu = 0, so every column max is exactly 0 and
  // exp(s) needs no shift. k holds exp(s), then is overwritten column by column with dloss/ds.
  Eigen::MatrixXd k = f * f.transpose();
  for (Eigen::Index u = 0; u < m; ++u) {
    k(u, u) = 1.0;
    for (Eigen::Index v = u + 1; v < m; ++v) {
      const double d2 = std::max(0.0, sq_norm[u] + sq_norm[v] - 2.0 * k(v, u));
      k(v, u) = std::exp(-gamma * d2);
    }
  }
  for (Eigen::Index u = 0; u < m; ++u)
    for (Eigen::Index v = 0; v < u; ++v) k(v, u) = k(u, v);

  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index u = 0; u < m; ++u) {
    double *col = k.col(u).data();
    double all = 0.0, pos = 0.0;
    for (Eigen::Index v = 0; v < m; ++v) {
      all += col[v];
      if (labels[v] == labels[u]) pos += col[v];
    }
    total += std::log(all) - std::log(pos);
    const double inv_all = inv_n / all, inv_pos = inv_n / pos;
    for (Eigen::Index v = 0; v < m; ++v) {
      col[v] = labels[v] == labels[u] ? col[v] * (inv_all - inv_pos) : col[v] * inv_all;
    }
  }

  // d s_uv / d f_u = -2 gamma (f_u - f_v) and s is symmetric, so both endpoints take a share.
  // Columns of k sum to zero, leaving the row sums as the diagonal term.
  const Eigen::VectorXd row_sum = k.rowwise().sum();
  RowMat grad = row_sum.asDiagonal() * f;
  grad.noalias() -= k * f;
  grad.noalias() -= k.transpose() * f;
  grad *= -2.0 * gamma;

  ContrastiveLoss out;
  out.value = total * inv_n;
  out.grad.assign(grad.data(), grad.data() + grad.size());
  return out;
}

ContrastiveLoss loss_contrastive(const ImageF &feature_image, const SamplePlan &plan, double gamma) {
  require(plan.size() >= 2, ErrorKind::DegeneratePlan, "contrastive loss needs at least 2 sampled pixels");
  const int dim = feature_image.channels;
  std::vector<double> packed(plan.size() * dim);
  std::vector<int> labels(plan.size());
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const SamplePixel &px = plan.pixels[k];
    require(px.x >= 0 && px.y >= 0 && px.x < feature_image.width && px.y < feature_image.height,
            ErrorKind::Contract, "contrastive plan pixel outside the feature image");
    const auto f = feature_image.pixel(px.x, px.y);
    std::copy(f.begin(), f.end(), packed.begin() + static_cast<std::ptrdiff_t>(k * dim));
    labels[k] = px.label;
  }
  return loss_contrastive(packed, labels, dim, gamma);
}

ImageF scatter_plan_gradient(const SamplePlan &plan, std::span<const double> grad, int width, int height, int dim) {
  require(grad.size() == plan.size() * static_cast<std::size_t>(dim), ErrorKind::Contract,
          "scatter_plan_gradient: gradient does not match plan");
  ImageF out(width, height, dim);
  for (std::size_t k = 0; k < plan.size(); ++k) {
    auto dst = out.pixel(plan.pixels[k].x, plan.pixels[k].y);
    for (int c = 0; c < dim; ++c) dst[c] += grad[k * dim + c];
  }
  return out;
}

ImageLoss loss_transient_reg(const TransientMap &transient, const FormationMasks &masks) {
  require_same_extent(transient, masks.valid, "loss_transient_reg");
  ImageLoss out{0.0, ImageF(transient.width, transient.height, 1)};
  for (std::size_t p = 0; p < transient.pixel_count(); ++p) {
    if (masks.valid.data[p] == 0) continue;
    out.value += std::abs(transient.data[p]);
    out.grad.data[p] = 1.0;
  }
  return out;
}

double loss_total(const LossParts &parts, const LossWeights &weights) {
  require(std::isfinite(parts.rgb), ErrorKind::NumericFault, "non-finite loss term: rgb");
  require(std::isfinite(parts.contrastive), ErrorKind::NumericFault, "non-finite loss term: contrastive");
  require(std::isfinite(parts.transient_reg), ErrorKind::NumericFault, "non-finite loss term: transient_reg");
  return weights.rgb * parts.rgb + weights.contrastive * parts.contrastive +
         weights.transient_reg * parts.transient_reg;
}

} // namespace splatseg
