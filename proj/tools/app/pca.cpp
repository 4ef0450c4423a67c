// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "pca.hpp"

#include <Eigen/Dense>
#include <algorithm>

#include "splatseg/error.hpp"

namespace splatseg::app {

FeaturePca FeaturePca::fit(const std::vector<ImageF> &features, std::size_t max_samples) {
  require(!features.empty(), ErrorKind::InvalidParameter, "PCA needs at least one feature image");
  const int d = features.front().channels;
  std::size_t total = 0;
  for (const auto &f : features) {
    require(f.channels == d, ErrorKind::DimensionMismatch, "feature images disagree in channel count");
    total += f.pixel_count();
  }
  const std::size_t stride = std::max<std::size_t>(1, total / std::max<std::size_t>(1, max_samples));
  std::vector<const double *> rows;
  std::size_t k = 0;
  for (const auto &f : features)
    for (std::size_t p = 0; p < f.pixel_count(); ++p, ++k)
      if (k % stride == 0) rows.push_back(f.data.data() + p * d);

  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < d; ++c) x(static_cast<Eigen::Index>(r), c) = rows[r][c];
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = x.transpose() * x / std::max<double>(1.0, static_cast<double>(rows.size()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);

  FeaturePca pca;
  pca.mean_.assign(mean.data(), mean.data() + d);
  pca.basis_.assign(3 * static_cast<std::size_t>(d), 0.0);
  for (int c = 0; c < 3 && c < d; ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - c);
    // Sign convention: largest-magnitude entry positive, so refits give the same colors.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    for (int j = 0; j < d; ++j) pca.basis_[static_cast<std::size_t>(c * d + j)] = v[j];
  }
  for (int c = 0; c < 3; ++c) {
    std::vector<double> proj(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += x(static_cast<Eigen::Index>(r), j) * pca.basis_[static_cast<std::size_t>(c * d + j)];
      proj[r] = s;
    }
    if (proj.empty()) continue;
    std::sort(proj.begin(), proj.end());
    pca.lo_[c] = proj[proj.size() / 100];
    pca.hi_[c] = proj[proj.size() - 1 - proj.size() / 100];
    if (pca.hi_[c] - pca.lo_[c] < 1e-12) pca.hi_[c] = pca.lo_[c] + 1e-12;
  }
  return pca;
}

ImageF FeaturePca::colorize(const ImageF &features) const {
  const int d = dim();
  require(features.channels == d, ErrorKind::DimensionMismatch, "feature image does not match the PCA basis");
  ImageF out(features.width, features.height, 3);
  for (std::size_t p = 0; p < features.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int j = 0; j < d; ++j)
        s += (features.data[p * d + j] - mean_[static_cast<std::size_t>(j)]) * basis_[static_cast<std::size_t>(c * d + j)];
      out.data[3 * p + c] = std::clamp((s - lo_[c]) / (hi_[c] - lo_[c]), 0.0, 1.0);
    }
  }
  return out;
}

} // namespace splatseg::app
