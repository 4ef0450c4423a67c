// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/segment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "splatseg/error.hpp"
#include "splatseg/imaging.hpp"

namespace splatseg {

QueryFeature query_from_clicks(const GaussianCloud &cloud, std::span<const Click> clicks,
                               const RasterSettings &settings) {
  require(!clicks.empty(), ErrorKind::InvalidParameter, "query needs at least one click");
  require(cloud.feature_dim() > 0, ErrorKind::Contract, "query needs a cloud with features");
  QueryFeature q;
  q.feature.assign(static_cast<std::size_t>(cloud.feature_dim()), 0.0);
  std::vector<bool> done(clicks.size(), false);
  for (std::size_t k = 0; k < clicks.size(); ++k) {
    const Camera &cam = clicks[k].camera;
    const MaskImage valid = build_masks(cam, {VignetteProfile::Flat, 0.0}).valid;
    const Click &c = clicks[k];
    if (c.x < 0 || c.y < 0 || c.x >= cam.width || c.y >= cam.height || valid.at(c.x, c.y) == 0) {
      fail(ErrorKind::InvalidParameter, "click " + std::to_string(k) + " at (" + std::to_string(c.x) + ", " +
                                            std::to_string(c.y) + ") is outside the valid region");
    }
  }
  // One feature render per distinct view.
  for (std::size_t k = 0; k < clicks.size(); ++k) {
    if (done[k]) continue;
    const RenderOutput out = rasterize_forward(cloud, clicks[k].camera, Channels::Feature, settings);
    for (std::size_t j = k; j < clicks.size(); ++j) {
      if (done[j] || !(clicks[j].camera == clicks[k].camera)) continue;
      const auto f = out.feature.pixel(clicks[j].x, clicks[j].y);
      for (std::size_t c = 0; c < f.size(); ++c) q.feature[c] += f[c];
      done[j] = true;
    }
  }
  for (double &v : q.feature) v /= static_cast<double>(clicks.size());
  q.provenance.assign(clicks.begin(), clicks.end());
  return q;
}

ImageF similarity_image(const ImageF &feature_image, std::span<const double> query) {
  require(static_cast<std::size_t>(feature_image.channels) == query.size(), ErrorKind::Contract,
          "similarity_image: query dimension " + std::to_string(query.size()) + " does not match feature image (" +
              std::to_string(feature_image.channels) + ")");
  ImageF out(feature_image.width, feature_image.height, 1);
  const std::size_t d = query.size();
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = feature_image.data[p * d + c] - query[c];
      sq += diff * diff;
    }
    out.data[p] = std::sqrt(sq);
  }
  return out;
}

MaskImage segment_2d(const ImageF &distance, double threshold, const MaskImage *valid) {
  require(threshold >= 0.0, ErrorKind::InvalidParameter, "segment_2d: threshold must be >= 0");
  require(distance.channels == 1, ErrorKind::Contract, "segment_2d: distance image must have one channel");
  if (valid != nullptr) require_same_extent(distance, *valid, "segment_2d");
  MaskImage out(distance.width, distance.height, 1);
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    const bool inside = distance.data[p] <= threshold && (valid == nullptr || valid->data[p] != 0);
    out.data[p] = inside ? 1 : 0;
  }
  return out;
}

std::vector<double> feature_distances(const GaussianCloud &cloud, std::span<const double> query) {
  require(static_cast<std::size_t>(cloud.feature_dim()) == query.size(), ErrorKind::Contract,
          "query dimension does not match the cloud's features");
  std::vector<double> out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto f = cloud.feature_of(i);
    double sq = 0.0;
    for (std::size_t c = 0; c < query.size(); ++c) sq += (f[c] - query[c]) * (f[c] - query[c]);
    out[i] = std::sqrt(sq);
  }
  return out;
}

std::optional<Box3> selection_box(const GaussianCloud &cloud, std::span<const std::size_t> indices) {
  if (indices.empty()) return std::nullopt;
  Box3 box{Vec3::Constant(std::numeric_limits<double>::infinity()),
           Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (std::size_t i : indices) {
    require(i < cloud.size(), ErrorKind::Contract, "selection index out of range");
    const Mat3 cov = covariance3d(cloud.log_scale_of(i), cloud.rotation_of(i));
    const Vec3 pad = cov.diagonal().cwiseSqrt();
    const Vec3 p = cloud.position_of(i);
    box.min = box.min.cwiseMin(p - pad);
    box.max = box.max.cwiseMax(p + pad);
  }
  return box;
}

Segmentation3D segment_3d(const GaussianCloud &cloud, std::span<const double> query, double threshold) {
  require(threshold >= 0.0, ErrorKind::InvalidParameter, "segment_3d: threshold must be >= 0");
  const std::vector<double> d = feature_distances(cloud, query);
  Segmentation3D s;
  s.threshold = threshold;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] <= threshold) s.indices.push_back(i);
  s.box = selection_box(cloud, s.indices);
  return s;
}

namespace {

struct LinkageNode {
  std::size_t left = 0;
  std::size_t right = 0;
  double distance = 0.0;
  std::size_t size = 1;
};

double to_lambda(double distance) { return 1.0 / std::max(distance, 1e-150); }

} // namespace

std::vector<int> hdbscan(std::span<const double> points, int dim, const HdbscanParams &params) {
  require(dim > 0 && points.size() % static_cast<std::size_t>(dim) == 0, ErrorKind::Contract,
          "hdbscan: point buffer is not n x dim");
  const std::size_t n = points.size() / static_cast<std::size_t>(dim);
  const int mcs = params.min_cluster_size;
  const int min_samples = params.min_samples > 0 ? params.min_samples : mcs;
  require(mcs >= 2, ErrorKind::Config, "min_cluster_size must be >= 2");
  if (n < static_cast<std::size_t>(mcs)) {
    fail(ErrorKind::Config, "cannot cluster " + std::to_string(n) + " points with min_cluster_size " +
                                std::to_string(mcs));
  }
  const Eigen::Map<const Eigen::MatrixXd> x(points.data(), dim, static_cast<Eigen::Index>(n));

  // Core distance: distance to the min_samples-th nearest point, the point itself included.
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(min_samples), n) - 1;
  std::vector<double> core(n);
  Eigen::VectorXd row(n);
  for (std::size_t i = 0; i < n; ++i) {
    row = (x.colwise() - x.col(static_cast<Eigen::Index>(i))).colwise().squaredNorm().transpose();
    row[static_cast<Eigen::Index>(i)] = 0.0;
    std::nth_element(row.data(), row.data() + k, row.data() + n);
    core[i] = std::sqrt(row[static_cast<Eigen::Index>(k)]);
  }

  // Prim's MST over mutual reachability distances.
  struct Edge {
    std::size_t a, b;
    double w;
  };
  std::vector<Edge> edges;
  edges.reserve(n - 1);
  std::vector<char> in_tree(n, 0);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> from(n, 0);
  std::size_t current = 0;
  in_tree[0] = 1;
  for (std::size_t step = 1; step < n; ++step) {
    row = (x.colwise() - x.col(static_cast<Eigen::Index>(current))).colwise().squaredNorm().transpose();
    std::size_t next = n;
    double next_w = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < n; ++v) {
      if (in_tree[v]) continue;
      const double mr = std::max({std::sqrt(row[static_cast<Eigen::Index>(v)]), core[current], core[v]});
      if (mr < best[v]) {
        best[v] = mr;
        from[v] = current;
      }
      if (best[v] < next_w || next == n) {
        next_w = best[v];
        next = v;
      }
    }
    in_tree[next] = 1;
    edges.push_back({from[next], next, next_w});
    current = next;
  }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge &a, const Edge &b) { return a.w < b.w; });

  // Single-linkage tree: leaves 0..n-1, merges n..2n-2.
  std::vector<LinkageNode> tree(2 * n - 1);
  std::vector<std::size_t> parent(2 * n - 1);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t v) {
    while (parent[v] != v) {
      parent[v] = parent[parent[v]];
      v = parent[v];
    }
    return v;
  };
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const std::size_t ra = find(edges[e].a), rb = find(edges[e].b);
    const std::size_t node = n + e;
    tree[node] = {ra, rb, edges[e].w, tree[ra].size + tree[rb].size};
    parent[ra] = parent[rb] = node;
  }
  const std::size_t root = 2 * n - 2;

  // Condensed tree.
  std::vector<std::size_t> cluster_parent{0};
  std::vector<double> birth{0.0};
  std::vector<double> stability{0.0};
  std::vector<std::vector<std::size_t>> children(1);
  std::vector<std::size_t> point_cluster(n, 0);
  auto drop_points = [&](std::size_t node, std::size_t cluster) {
    std::vector<std::size_t> stack{node};
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      if (v < n) {
        point_cluster[v] = cluster;
      } else {
        stack.push_back(tree[v].left);
        stack.push_back(tree[v].right);
      }
    }
  };
  std::vector<std::pair<std::size_t, std::size_t>> work{{root, 0}};
  const std::size_t min_size = static_cast<std::size_t>(mcs);
  while (!work.empty()) {
    const auto [node, cluster] = work.back();
    work.pop_back();
    if (node < n) {
      point_cluster[node] = cluster;
      continue;
    }
    const LinkageNode &t = tree[node];
    const double lambda = to_lambda(t.distance);
    const std::size_t sl = tree[t.left].size, sr = tree[t.right].size;
    stability[cluster] += static_cast<double>((sl >= min_size ? 0 : sl) + (sr >= min_size ? 0 : sr)) *
                          (lambda - birth[cluster]);
    if (sl >= min_size && sr >= min_size) {
      stability[cluster] += static_cast<double>(sl + sr) * (lambda - birth[cluster]);
      for (std::size_t child : {t.left, t.right}) {
        const std::size_t id = birth.size();
        cluster_parent.push_back(cluster);
        birth.push_back(lambda);
        stability.push_back(0.0);
        children.emplace_back();
        children[cluster].push_back(id);
        work.emplace_back(child, id);
      }
      continue;
    }
    for (std::size_t child : {t.left, t.right}) {
      if (tree[child].size >= min_size) {
        work.emplace_back(child, cluster);
      } else {
        drop_points(child, cluster);
      }
    }
  }

  std::vector<int> labels(n, -1);
  const std::size_t clusters = birth.size();
  if (clusters == 1) {
    std::fill(labels.begin(), labels.end(), 0);
    return labels;
  }

  // Excess-of-mass selection, children before parents (ids grow with depth).
  std::vector<char> selected(clusters, 0);
  std::vector<double> value(clusters, 0.0);
  for (std::size_t c = clusters; c-- > 1;) {
    double sum = 0.0;
    for (std::size_t ch : children[c]) sum += value[ch];
    if (children[c].empty() || stability[c] >= sum) {
      selected[c] = 1;
      value[c] = stability[c];
      std::vector<std::size_t> stack(children[c].begin(), children[c].end());
      while (!stack.empty()) {
        const std::size_t d = stack.back();
        stack.pop_back();
        selected[d] = 0;
        stack.insert(stack.end(), children[d].begin(), children[d].end());
      }
    } else {
      value[c] = sum;
    }
  }
  std::vector<std::size_t> owner(clusters, clusters); // selected ancestor-or-self
  for (std::size_t c = 1; c < clusters; ++c) {
    owner[c] = selected[c] ? c : owner[cluster_parent[c]];
  }
  std::vector<int> relabel(clusters, -1);
  int next_label = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t o = owner[point_cluster[p]];
    if (o == clusters) continue;
    if (relabel[o] < 0) relabel[o] = next_label++;
    labels[p] = relabel[o];
  }
  return labels;
}

std::vector<int> cluster_scene(const GaussianCloud &cloud, const HdbscanParams &params) {
  return hdbscan(cloud.feature, cloud.feature_dim(), params);
}

EditKind edit_kind_from_string(const std::string &name) {
  if (name == "remove") return EditKind::Remove;
  if (name == "extract") return EditKind::Extract;
  if (name == "translate") return EditKind::Translate;
  fail(ErrorKind::InvalidParameter, "unknown edit action '" + name + "'");
}

GaussianCloud edit_scene(const GaussianCloud &cloud, std::span<const std::size_t> selection, const EditAction &action) {
  std::vector<char> chosen(cloud.size(), 0);
  for (std::size_t i : selection) {
    require(i < cloud.size(), ErrorKind::Contract, "edit selection index " + std::to_string(i) + " out of range");
    require(!chosen[i], ErrorKind::Contract, "edit selection repeats index " + std::to_string(i));
    chosen[i] = 1;
  }
  std::vector<std::size_t> keep;
  switch (action.kind) {
  case EditKind::Remove:
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (!chosen[i]) keep.push_back(i);
    return cloud.select(keep);
  case EditKind::Extract:
    for (std::size_t i = 0; i < cloud.size(); ++i)
      if (chosen[i]) keep.push_back(i);
    return cloud.select(keep);
  case EditKind::Translate: {
    GaussianCloud out = cloud;
    for (std::size_t i : selection) out.set_position(i, cloud.position_of(i) + action.offset);
    return out;
  }
  }
  return cloud;
}

} // namespace splatseg
