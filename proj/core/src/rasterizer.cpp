// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/rasterizer.hpp"

#include <algorithm>
#include <climits>
#include <cmath>

#include "splatseg/parallel.hpp"

namespace splatseg {
namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

struct ProjectionTerms {
  Vec3 p_cam;
  Mat3 cov3;
  Mat23 jacobian;
  Mat23 transform; // jacobian * world-to-camera rotation
};

bool project(const GaussianCloud &cloud, std::size_t i, const Camera &cam, const RasterSettings &s,
             Projected2D &out, ProjectionTerms *terms) {
  const Vec3 p_cam = cam.rotation * cloud.position_of(i) + cam.translation;
  const double z = p_cam.z();
  if (!(z > s.near_plane)) {
    return false;
  }
  const double inv_z = 1.0 / z;
  const Vec2 mean(cam.fx * p_cam.x() * inv_z + cam.cx, cam.fy * p_cam.y() * inv_z + cam.cy);
  const double half_w = 0.5 * cam.width;
  const double half_h = 0.5 * cam.height;
  if (std::abs(mean.x() - (half_w - 0.5)) > s.cull_extent * half_w ||
      std::abs(mean.y() - (half_h - 0.5)) > s.cull_extent * half_h) {
    return false;
  }
  Mat23 jac;
  jac << cam.fx * inv_z, 0.0, -cam.fx * p_cam.x() * inv_z * inv_z, 0.0, cam.fy * inv_z,
      -cam.fy * p_cam.y() * inv_z * inv_z;
  const Mat23 t = jac * cam.rotation;
  const Mat3 cov3 = covariance3d(cloud.log_scale_of(i), cloud.rotation_of(i));
  out.mean2d = mean;
  out.cov2d = t * cov3 * t.transpose() + s.dilation * Mat2::Identity();
  out.depth = z;
  out.gaussian_index = i;
  if (terms != nullptr) {
    terms->p_cam = p_cam;
    terms->cov3 = cov3;
    terms->jacobian = jac;
    terms->transform = t;
  }
  return true;
}

void check_finite(const GaussianCloud &cloud) {
  for (ParamGroup g : kParamGroups) {
    const auto &v = cloud.group(g);
    const int stride = std::max(1, cloud.stride(g));
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!std::isfinite(v[k])) {
        fail(ErrorKind::NumericFault, std::string("non-finite ") + to_string(g) + " parameter at Gaussian " +
                                          std::to_string(k / stride));
      }
    }
  }
}

Vec3 conic_of(const Mat2 &cov) {
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
  return {cov(1, 1) / det, -cov(0, 1) / det, cov(0, 0) / det};
}

double max_eigenvalue(const Mat2 &cov) {
  const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
  const double half_diff = 0.5 * (cov(0, 0) - cov(1, 1));
  return mid + std::sqrt(half_diff * half_diff + cov(0, 1) * cov(0, 1));
}

std::vector<SplatRecord> prepare_splats(const GaussianCloud &cloud, const Camera &camera, Channels channels,
                                        const RasterSettings &s, bool clip_to_image) {
  std::vector<SplatRecord> splats;
  splats.reserve(cloud.size());
  const Vec3 eye = camera.center();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Projected2D proj;
    if (!project(cloud, i, camera, s, proj, nullptr)) {
      continue;
    }
    const double opacity = cloud.opacity_of(i);
    if (s.alpha_min > 0.0 && opacity < s.alpha_min) {
      continue;
    }
    SplatRecord rec;
    rec.gaussian = i;
    rec.mean2d = proj.mean2d;
    rec.cov2d = proj.cov2d;
    rec.conic = conic_of(proj.cov2d);
    rec.depth = proj.depth;
    rec.opacity = opacity;
    const double lambda = max_eigenvalue(proj.cov2d);
    rec.radius = static_cast<int>(std::ceil(3.0 * std::sqrt(lambda)));
    if (s.alpha_min > 0.0) {
      const double r = std::sqrt(2.0 * std::log(opacity / s.alpha_min) * lambda);
      rec.support = static_cast<int>(std::min(std::ceil(r) + 1.0, static_cast<double>(INT_MAX / 4)));
      if (clip_to_image && (rec.mean2d.x() + rec.support < 0.0 || rec.mean2d.x() - rec.support > camera.width - 1 ||
                            rec.mean2d.y() + rec.support < 0.0 || rec.mean2d.y() - rec.support > camera.height - 1)) {
        continue;
      }
    } else {
      rec.support = INT_MAX / 4;
    }
    if (has_rgb(channels)) {
      const Vec3 offset = cloud.position_of(i) - eye;
      rec.view_dir = offset / offset.norm();
      rec.color = eval_sh(cloud.sh_degree(), cloud.color_of(i), rec.view_dir);
    }
    splats.push_back(rec);
  }
  std::sort(splats.begin(), splats.end(), [](const SplatRecord &a, const SplatRecord &b) {
    return a.depth < b.depth || (a.depth == b.depth && a.gaussian < b.gaussian);
  });
  return splats;
}

// Splat parameters gathered contiguously for the pixel loops of one tile.
struct TileSplats {
  std::vector<double> mx, my, ca, cb, cc, opacity;
  std::vector<double> rgb;              // 3 per splat
  std::vector<const double *> features; // pointer into the cloud

  void gather(const RenderOutput &out, const GaussianCloud &cloud, std::uint32_t begin, std::uint32_t end) {
    const std::size_t n = end - begin;
    mx.resize(n);
    my.resize(n);
    ca.resize(n);
    cb.resize(n);
    cc.resize(n);
    opacity.resize(n);
    rgb.resize(3 * n);
    features.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const SplatRecord &s = out.splats[out.tile_entries[begin + k]];
      mx[k] = s.mean2d.x();
      my[k] = s.mean2d.y();
      ca[k] = s.conic.x();
      cb[k] = s.conic.y();
      cc[k] = s.conic.z();
      opacity[k] = s.opacity;
      for (int c = 0; c < 3; ++c) rgb[3 * k + c] = s.color.rgb[c];
      features[k] = cloud.feature_dim() > 0 ? cloud.feature_of(s.gaussian).data() : nullptr;
    }
  }
};

void bin_tiles(RenderOutput &out) {
  const int ts = out.settings.tile_size;
  const int tx_count = out.tiles_x();
  const int ty_count = out.tiles_y();
  const std::size_t tile_count = static_cast<std::size_t>(tx_count) * ty_count;
  struct Range {
    int x0, x1, y0, y1;
  };
  std::vector<Range> ranges(out.splats.size());
  std::vector<std::uint32_t> counts(tile_count + 1, 0);
  for (std::size_t k = 0; k < out.splats.size(); ++k) {
    const SplatRecord &s = out.splats[k];
    const double sup = s.support;
    const double px0 = std::max(0.0, std::ceil(s.mean2d.x() - sup));
    const double px1 = std::min(static_cast<double>(out.width - 1), std::floor(s.mean2d.x() + sup));
    const double py0 = std::max(0.0, std::ceil(s.mean2d.y() - sup));
    const double py1 = std::min(static_cast<double>(out.height - 1), std::floor(s.mean2d.y() + sup));
    Range r{0, -1, 0, -1};
    if (px0 <= px1 && py0 <= py1) {
      r = {static_cast<int>(px0) / ts, static_cast<int>(px1) / ts, static_cast<int>(py0) / ts,
           static_cast<int>(py1) / ts};
    }
    ranges[k] = r;
    for (int ty = r.y0; ty <= r.y1; ++ty) {
      for (int tx = r.x0; tx <= r.x1; ++tx) {
        ++counts[static_cast<std::size_t>(ty) * tx_count + tx + 1];
      }
    }
  }
  for (std::size_t t = 0; t < tile_count; ++t) counts[t + 1] += counts[t];
  out.tile_offsets = counts;
  out.tile_entries.assign(counts.back(), 0);
  std::vector<std::uint32_t> cursor(counts.begin(), counts.end() - 1);
  for (std::size_t k = 0; k < out.splats.size(); ++k) {
    const Range &r = ranges[k];
    for (int ty = r.y0; ty <= r.y1; ++ty) {
      for (int tx = r.x0; tx <= r.x1; ++tx) {
        out.tile_entries[cursor[static_cast<std::size_t>(ty) * tx_count + tx]++] = static_cast<std::uint32_t>(k);
      }
    }
  }
}

} // namespace

std::optional<Projected2D> project_gaussian(const GaussianCloud &cloud, std::size_t index, const Camera &camera,
                                            const RasterSettings &settings) {
  require(index < cloud.size(), ErrorKind::Contract, "project_gaussian: index out of range");
  Projected2D out;
  if (!project(cloud, index, camera, settings, out, nullptr)) {
    return std::nullopt;
  }
  return out;
}

RenderOutput rasterize_forward(const GaussianCloud &cloud, const Camera &camera, Channels channels,
                               const RasterSettings &settings) {
  camera.validate();
  require(settings.tile_size > 0, ErrorKind::InvalidParameter, "tile size must be positive");
  check_finite(cloud);

  RenderOutput out;
  out.width = camera.width;
  out.height = camera.height;
  out.feature_dim = cloud.feature_dim();
  out.channels = channels;
  out.camera = camera;
  out.settings = settings;
  if (has_rgb(channels)) out.rgb = ImageF(out.width, out.height, 3);
  if (has_feature(channels)) out.feature = ImageF(out.width, out.height, cloud.feature_dim());
  out.alpha = ImageF(out.width, out.height, 1);
  out.final_transmittance.assign(static_cast<std::size_t>(out.width) * out.height, 1.0);
  out.entries_used.assign(static_cast<std::size_t>(out.width) * out.height, 0);

  out.splats = prepare_splats(cloud, camera, channels, settings, true);
  bin_tiles(out);

  const int ts = settings.tile_size;
  const int tiles_x = out.tiles_x();
  const std::size_t tile_count = static_cast<std::size_t>(tiles_x) * out.tiles_y();
  const bool want_rgb = has_rgb(channels);
  const bool want_feat = has_feature(channels) && cloud.feature_dim() > 0;
  const int dim = cloud.feature_dim();

  parallel_for(tile_count, [&](std::size_t tile) {
    const std::uint32_t begin = out.tile_offsets[tile];
    const std::uint32_t end = out.tile_offsets[tile + 1];
    TileSplats local;
    local.gather(out, cloud, begin, end);
    const int n = static_cast<int>(end - begin);
    const int x_begin = static_cast<int>(tile % tiles_x) * ts;
    const int y_begin = static_cast<int>(tile / tiles_x) * ts;
    const int x_end = std::min(out.width, x_begin + ts);
    const int y_end = std::min(out.height, y_begin + ts);
    std::vector<double> feat(static_cast<std::size_t>(std::max(dim, 1)));
    for (int py = y_begin; py < y_end; ++py) {
      for (int px = x_begin; px < x_end; ++px) {
        double t = 1.0;
        double r = 0.0, g = 0.0, b = 0.0;
        if (want_feat) std::fill(feat.begin(), feat.end(), 0.0);
        std::uint32_t used = 0;
        for (int k = 0; k < n; ++k) {
          const double dx = px - local.mx[k];
          const double dy = py - local.my[k];
          const double power = -0.5 * (local.ca[k] * dx * dx + local.cc[k] * dy * dy) - local.cb[k] * dx * dy;
          const double a = std::min(settings.max_alpha, local.opacity[k] * std::exp(power));
          if (a < settings.alpha_min) {
            continue;
          }
          const double next_t = t * (1.0 - a);
          if (next_t < settings.min_transmittance) {
            break;
          }
          const double w = a * t;
          if (want_rgb) {
            r += w * local.rgb[3 * k];
            g += w * local.rgb[3 * k + 1];
            b += w * local.rgb[3 * k + 2];
          }
          if (want_feat) {
            const double *f = local.features[k];
            for (int c = 0; c < dim; ++c) feat[c] += w * f[c];
          }
          t = next_t;
          used = static_cast<std::uint32_t>(k + 1);
        }
        const std::size_t pix = static_cast<std::size_t>(py) * out.width + px;
        out.final_transmittance[pix] = t;
        out.entries_used[pix] = used;
        out.alpha.data[pix] = 1.0 - t;
        if (want_rgb) {
          out.rgb.at(px, py, 0) = r + t * settings.background[0];
          out.rgb.at(px, py, 1) = g + t * settings.background[1];
          out.rgb.at(px, py, 2) = b + t * settings.background[2];
        }
        if (want_feat) {
          std::copy(feat.begin(), feat.begin() + dim, out.feature.data.begin() + static_cast<std::ptrdiff_t>(pix * dim));
        }
      }
    }
  });
  return out;
}

RenderOutput rasterize_features(const GaussianCloud &cloud, const Camera &camera, int feature_width,
                                int feature_height, const RasterSettings &settings) {
  return rasterize_forward(cloud, camera.scaled(feature_width, feature_height), Channels::Feature, settings);
}

RenderOutput rasterize_reference(const GaussianCloud &cloud, const Camera &camera, Channels channels,
                                 const RasterSettings &settings) {
  camera.validate();
  check_finite(cloud);
  RenderOutput out;
  out.width = camera.width;
  out.height = camera.height;
  out.feature_dim = cloud.feature_dim();
  out.channels = channels;
  out.camera = camera;
  out.settings = settings;
  out.alpha = ImageF(out.width, out.height, 1);
  if (has_rgb(channels)) out.rgb = ImageF(out.width, out.height, 3);
  if (has_feature(channels)) out.feature = ImageF(out.width, out.height, cloud.feature_dim());

  // Project every Gaussian independently and order by (depth, index).
  struct Item {
    Projected2D proj;
    double opacity;
    Vec3 color;
  };
  std::vector<Item> items;
  const Vec3 eye = camera.center();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto proj = project_gaussian(cloud, i, camera, settings);
    if (!proj) continue;
    Item item{*proj, cloud.opacity_of(i), Vec3::Zero()};
    if (has_rgb(channels)) {
      item.color = eval_sh(cloud.sh_degree(), cloud.color_of(i), (cloud.position_of(i) - eye).normalized()).rgb;
    }
    items.push_back(item);
  }
  std::stable_sort(items.begin(), items.end(), [](const Item &a, const Item &b) {
    if (a.proj.depth != b.proj.depth) return a.proj.depth < b.proj.depth;
    return a.proj.gaussian_index < b.proj.gaussian_index;
  });

  for (int py = 0; py < out.height; ++py) {
    for (int px = 0; px < out.width; ++px) {
      double transmittance = 1.0;
      Vec3 rgb = Vec3::Zero();
      std::vector<double> feat(static_cast<std::size_t>(cloud.feature_dim()), 0.0);
      for (const Item &item : items) {
        const Mat2 inv = item.proj.cov2d.inverse();
        const Vec2 d(px - item.proj.mean2d.x(), py - item.proj.mean2d.y());
        const double density = std::exp(-0.5 * d.dot(inv * d));
        const double a = std::min(settings.max_alpha, item.opacity * density);
        if (a < settings.alpha_min) continue;
        if (transmittance * (1.0 - a) < settings.min_transmittance) break;
        const double w = a * transmittance;
        rgb += w * item.color;
        const auto f = cloud.feature_of(item.proj.gaussian_index);
        for (std::size_t c = 0; c < feat.size(); ++c) feat[c] += w * f[c];
        transmittance *= 1.0 - a;
      }
      out.alpha.at(px, py) = 1.0 - transmittance;
      if (has_rgb(channels)) {
        for (int c = 0; c < 3; ++c) out.rgb.at(px, py, c) = rgb[c] + transmittance * settings.background[c];
      }
      if (has_feature(channels)) {
        for (std::size_t c = 0; c < feat.size(); ++c) out.feature.at(px, py, static_cast<int>(c)) = feat[c];
      }
    }
  }
  return out;
}

ParamGradients::ParamGradients(const GaussianCloud &cloud)
    : position(cloud.position.size(), 0.0), log_scale(cloud.log_scale.size(), 0.0),
      rotation(cloud.rotation.size(), 0.0), opacity_logit(cloud.opacity_logit.size(), 0.0),
      color(cloud.color.size(), 0.0), feature(cloud.feature.size(), 0.0), view_grad_norm(cloud.size(), 0.0),
      visible(cloud.size(), 0), radius(cloud.size(), 0) {}

std::vector<double> &ParamGradients::group(ParamGroup g) {
  return const_cast<std::vector<double> &>(static_cast<const ParamGradients *>(this)->group(g));
}

const std::vector<double> &ParamGradients::group(ParamGroup g) const {
  switch (g) {
  case ParamGroup::Position: return position;
  case ParamGroup::LogScale: return log_scale;
  case ParamGroup::Rotation: return rotation;
  case ParamGroup::Opacity: return opacity_logit;
  case ParamGroup::Color: return color;
  case ParamGroup::Feature: return feature;
  }
  return position;
}

ParamGradients &ParamGradients::operator+=(const ParamGradients &other) {
  require(other.size() == size(), ErrorKind::Contract, "ParamGradients: size mismatch");
  for (ParamGroup g : kParamGroups) {
    auto &dst = group(g);
    const auto &src = other.group(g);
    require(dst.size() == src.size(), ErrorKind::Contract, "ParamGradients: group size mismatch");
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
  for (std::size_t i = 0; i < size(); ++i) {
    view_grad_norm[i] += other.view_grad_norm[i];
    visible[i] = static_cast<std::uint8_t>(visible[i] | other.visible[i]);
    radius[i] = std::max(radius[i], other.radius[i]);
  }
  return *this;
}

void ParamGradients::scale(double factor) {
  for (ParamGroup g : kParamGroups) {
    for (double &v : group(g)) v *= factor;
  }
}

ParamGradients rasterize_backward(const GaussianCloud &cloud, const RenderOutput &output, const ImageF *grad_rgb,
                                  const ImageF *grad_feature, double view_grad_scale) {
  if (grad_rgb != nullptr) {
    require(has_rgb(output.channels), ErrorKind::Contract, "rasterize_backward: RGB gradient for a pass without RGB");
    require(grad_rgb->width == output.width && grad_rgb->height == output.height && grad_rgb->channels == 3,
            ErrorKind::Contract, "rasterize_backward: RGB gradient image has the wrong shape");
  }
  if (grad_feature != nullptr) {
    require(has_feature(output.channels), ErrorKind::Contract,
            "rasterize_backward: feature gradient for a pass without features");
    require(grad_feature->width == output.width && grad_feature->height == output.height &&
                grad_feature->channels == cloud.feature_dim(),
            ErrorKind::Contract, "rasterize_backward: feature gradient image has the wrong shape");
  }
  require(output.final_transmittance.size() == static_cast<std::size_t>(output.width) * output.height,
          ErrorKind::Contract, "rasterize_backward: render output has no retained compositing records");
  for (const auto &s : output.splats) {
    require(s.gaussian < cloud.size(), ErrorKind::Contract, "rasterize_backward: cloud does not match render output");
  }

  ParamGradients grads(cloud);
  const RasterSettings &settings = output.settings;
  const int dim = cloud.feature_dim();
  const bool use_rgb = grad_rgb != nullptr;
  const bool use_feat = grad_feature != nullptr && dim > 0;
  const std::size_t entries = output.tile_entries.size();

  // Per-entry partials (tile-local slots), reduced in entry order below.
  constexpr int kBase = 9; // mean(2), conic(3), opacity(1), rgb(3)
  const int slot = kBase + (use_feat ? dim : 0);
  std::vector<double> partial(entries * slot, 0.0);

  const int ts = settings.tile_size;
  const int tiles_x = output.tiles_x();
  const std::size_t tile_count = static_cast<std::size_t>(tiles_x) * output.tiles_y();

  parallel_for(tile_count, [&](std::size_t tile) {
    const std::uint32_t begin = output.tile_offsets[tile];
    const std::uint32_t end = output.tile_offsets[tile + 1];
    if (begin == end) return;
    TileSplats local;
    local.gather(output, cloud, begin, end);
    const int x_begin = static_cast<int>(tile % tiles_x) * ts;
    const int y_begin = static_cast<int>(tile / tiles_x) * ts;
    const int x_end = std::min(output.width, x_begin + ts);
    const int y_end = std::min(output.height, y_begin + ts);
    std::vector<double> suffix_feat(static_cast<std::size_t>(std::max(dim, 1)));
    for (int py = y_begin; py < y_end; ++py) {
      for (int px = x_begin; px < x_end; ++px) {
        const std::size_t pix = static_cast<std::size_t>(py) * output.width + px;
        const int used = static_cast<int>(output.entries_used[pix]);
        if (used == 0) continue;
        Vec3 d_rgb = Vec3::Zero();
        if (use_rgb) d_rgb = {grad_rgb->at(px, py, 0), grad_rgb->at(px, py, 1), grad_rgb->at(px, py, 2)};
        const double *d_feat = use_feat ? grad_feature->data.data() + pix * dim : nullptr;
        double t = output.final_transmittance[pix];
        Vec3 suffix_rgb = settings.background;
        std::fill(suffix_feat.begin(), suffix_feat.end(), 0.0);
        for (int k = used - 1; k >= 0; --k) {
          const double dx = px - local.mx[k];
          const double dy = py - local.my[k];
          const double power = -0.5 * (local.ca[k] * dx * dx + local.cc[k] * dy * dy) - local.cb[k] * dx * dy;
          const double density = std::exp(power);
          const double raw = local.opacity[k] * density;
          const double a = std::min(settings.max_alpha, raw);
          if (a < settings.alpha_min) continue;
          t /= (1.0 - a);
          const double w = a * t;
          double *p = partial.data() + static_cast<std::size_t>(begin + k) * slot;
          double d_a = 0.0;
          if (use_rgb) {
            for (int c = 0; c < 3; ++c) {
              p[6 + c] += w * d_rgb[c];
              d_a += (local.rgb[3 * k + c] - suffix_rgb[c]) * d_rgb[c];
              suffix_rgb[c] = a * local.rgb[3 * k + c] + (1.0 - a) * suffix_rgb[c];
            }
          }
          if (use_feat) {
            const double *f = local.features[k];
            for (int c = 0; c < dim; ++c) {
              p[kBase + c] += w * d_feat[c];
              d_a += (f[c] - suffix_feat[c]) * d_feat[c];
              suffix_feat[c] = a * f[c] + (1.0 - a) * suffix_feat[c];
            }
          }
          d_a *= t;
          if (raw >= settings.max_alpha) continue; // capped: no gradient through opacity or density
          const double d_density = d_a * local.opacity[k];
          p[5] += d_a * density;
          const double gd = d_density * density;
          p[0] += gd * (local.ca[k] * dx + local.cb[k] * dy);
          p[1] += gd * (local.cb[k] * dx + local.cc[k] * dy);
          p[2] += gd * (-0.5 * dx * dx);
          p[3] += gd * (-dx * dy);
          p[4] += gd * (-0.5 * dy * dy);
        }
      }
    }
  });

  // Deterministic reduction into per-splat partials.
  std::vector<double> per_splat(output.splats.size() * slot, 0.0);
  for (std::size_t e = 0; e < entries; ++e) {
    const double *src = partial.data() + e * slot;
    double *dst = per_splat.data() + static_cast<std::size_t>(output.tile_entries[e]) * slot;
    for (int c = 0; c < slot; ++c) dst[c] += src[c];
  }

  const Camera &cam = output.camera;
  const Vec3 eye = cam.center();
  const double ndc_x = 0.5 * output.width;
  const double ndc_y = 0.5 * output.height;
  parallel_for(output.splats.size(), [&](std::size_t k) {
    const SplatRecord &s = output.splats[k];
    const std::size_t i = s.gaussian;
    const double *p = per_splat.data() + k * slot;
    grads.visible[i] = 1;
    grads.radius[i] = std::max(grads.radius[i], s.radius);

    // Opacity through the logistic.
    grads.opacity_logit[i] += p[5] * s.opacity * (1.0 - s.opacity);

    Vec3 d_position = Vec3::Zero();
    if (use_rgb) {
      const Vec3 d_color(p[6], p[7], p[8]);
      std::span<double> d_coeffs(grads.color.data() + i * cloud.color_stride(),
                                 static_cast<std::size_t>(cloud.color_stride()));
      const Vec3 d_dir = eval_sh_backward(cloud.sh_degree(), cloud.color_of(i), s.view_dir, s.color, d_color, d_coeffs);
      if (cloud.sh_degree() > 0) {
        const Vec3 offset = cloud.position_of(i) - eye;
        const double len = offset.norm();
        d_position += (d_dir - s.view_dir * s.view_dir.dot(d_dir)) / len;
      }
    }
    if (use_feat) {
      for (int c = 0; c < dim; ++c) grads.feature[i * dim + c] += p[kBase + c];
    }

    Projected2D proj;
    ProjectionTerms terms;
    project(cloud, i, cam, settings, proj, &terms);
    const Vec2 d_mean(p[0], p[1]);
    grads.view_grad_norm[i] += view_grad_scale * std::hypot(d_mean.x() * ndc_x, d_mean.y() * ndc_y);

    // Conic (A, B, C) -> full symmetric inverse -> covariance.
    const Mat2 conic_full = (Mat2() << s.conic.x(), s.conic.y(), s.conic.y(), s.conic.z()).finished();
    const Mat2 d_conic_full = (Mat2() << p[2], 0.5 * p[3], 0.5 * p[3], p[4]).finished();
    const Mat2 d_cov2 = -conic_full * d_conic_full * conic_full;

    const Mat23 &t = terms.transform;
    const Mat3 d_cov3 = t.transpose() * d_cov2 * t;
    const Mat23 d_t = 2.0 * d_cov2 * t * terms.cov3;
    const Mat23 d_j = d_t * cam.rotation.transpose();

    const double x = terms.p_cam.x(), y = terms.p_cam.y(), z = terms.p_cam.z();
    const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
    Vec3 d_pcam;
    d_pcam.x() = d_mean.x() * cam.fx * iz + d_j(0, 2) * (-cam.fx * iz2);
    d_pcam.y() = d_mean.y() * cam.fy * iz + d_j(1, 2) * (-cam.fy * iz2);
    d_pcam.z() = d_mean.x() * (-cam.fx * x * iz2) + d_mean.y() * (-cam.fy * y * iz2) + d_j(0, 0) * (-cam.fx * iz2) +
                 d_j(0, 2) * (2.0 * cam.fx * x * iz3) + d_j(1, 1) * (-cam.fy * iz2) +
                 d_j(1, 2) * (2.0 * cam.fy * y * iz3);
    d_position += cam.rotation.transpose() * d_pcam;
    for (int c = 0; c < 3; ++c) grads.position[3 * i + c] += d_position[c];

    const Covariance3dGrad dc = covariance3d_backward(cloud.log_scale_of(i), cloud.rotation_of(i), d_cov3);
    for (int c = 0; c < 3; ++c) grads.log_scale[3 * i + c] += dc.log_scale[c];
    for (int c = 0; c < 4; ++c) grads.rotation[4 * i + c] += dc.rotation[c];
  });
  return grads;
}

} // namespace splatseg
