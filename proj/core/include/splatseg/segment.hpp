// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "splatseg/image.hpp"
#include "splatseg/rasterizer.hpp"
#include "splatseg/types.hpp"

namespace splatseg {

/// A clicked pixel in a given view.
struct Click {
  Camera camera;
  int frame_id = -1; // -1 when the view is an arbitrary pose
  int x = 0;
  int y = 0;
};

struct QueryFeature {
  std::vector<double> feature;
  std::vector<Click> provenance;
};

/// Averages the rendered features at the clicked pixels. A click outside its view's valid
/// circle is rejected with an InvalidParameter error naming its index.
QueryFeature query_from_clicks(const GaussianCloud &cloud, std::span<const Click> clicks,
                               const RasterSettings &settings = {});

/// Per-pixel Euclidean distance to the query, H x W x 1.
ImageF similarity_image(const ImageF &feature_image, std::span<const double> query);

/// distance <= threshold, restricted to valid pixels when a valid mask is given.
MaskImage segment_2d(const ImageF &distance, double threshold, const MaskImage *valid = nullptr);

struct Segmentation3D {
  std::vector<std::size_t> indices;
  double threshold = 0.0;
  std::optional<Box3> box;
};

/// Axis-aligned box of the selected Gaussians, each padded by its 1-sigma extent.
std::optional<Box3> selection_box(const GaussianCloud &cloud, std::span<const std::size_t> indices);

/// Gaussians whose feature lies within threshold of the query.
Segmentation3D segment_3d(const GaussianCloud &cloud, std::span<const double> query, double threshold);

/// Euclidean feature distance of every Gaussian to the query.
std::vector<double> feature_distances(const GaussianCloud &cloud, std::span<const double> query);

struct HdbscanParams {
  int min_cluster_size = 20;
  int min_samples = 0; // 0: same as min_cluster_size
};

/// HDBSCAN over row-major points (n x dim). Noise is labeled -1; labels are 0..k-1 ordered by first member.
std::vector<int> hdbscan(std::span<const double> points, int dim, const HdbscanParams &params);

/// HDBSCAN over the Gaussians' feature vectors.
std::vector<int> cluster_scene(const GaussianCloud &cloud, const HdbscanParams &params);

enum class EditKind { Remove, Extract, Translate };
struct EditAction {
  EditKind kind = EditKind::Remove;
  Vec3 offset = Vec3::Zero();
};
EditKind edit_kind_from_string(const std::string &name);

/// Applies an edit to the selected Gaussians. Extract returns only the selection.
GaussianCloud edit_scene(const GaussianCloud &cloud, std::span<const std::size_t> selection, const EditAction &action);

} // namespace splatseg
