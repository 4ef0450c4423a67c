// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "splatseg/error.hpp"
#include "splatseg/metrics.hpp"
#include "splatseg/parallel.hpp"
#include "splatseg/sh.hpp"

namespace splatseg {
namespace {

std::string rng_text(const std::mt19937_64 &rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

// The feature pass reads its valid radius from the rescaled camera.
VignetteParams feature_vignette(const TrainConfig &config) {
  VignetteParams p = config.vignette;
  p.valid_radius = 0.0;
  return p;
}

Camera feature_camera_for(const TrainConfig &config, const Camera &camera) {
  Camera c = camera.scaled(config.feature_width, config.feature_height);
  if (config.vignette.valid_radius > 0.0) {
    c.valid_radius = config.vignette.valid_radius *
                     std::min(static_cast<double>(c.width) / camera.width, static_cast<double>(c.height) / camera.height);
  }
  return c;
}

void shuffle_indices(std::vector<std::size_t> &v, std::mt19937_64 &rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

} // namespace

bool TrainState::operator==(const TrainState &o) const {
  return config == o.config && cloud == o.cloud && optimizer == o.optimizer && predictor == o.predictor &&
         stats == o.stats && iteration == o.iteration && rng_text(rng) == rng_text(o.rng) &&
         frame_order == o.frame_order && order_cursor == o.order_cursor && scene_extent == o.scene_extent &&
         curves == o.curves;
}

TrainContext::TrainContext(const TrainConfig &config) : full_(config.vignette), feature_(feature_vignette(config)) {}

std::vector<double> nearest_neighbor_scales(const std::vector<Vec3> &points) {
  const std::size_t n = points.size();
  std::vector<double> out(n, 0.0);
  if (n < 2) return out;
  const std::size_t k = std::min<std::size_t>(3, n - 1);
  parallel_for(n, [&](std::size_t i) {
    std::array<double, 3> best{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                               std::numeric_limits<double>::infinity()};
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = (points[i] - points[j]).squaredNorm();
      if (d < best[2]) {
        best[2] = d;
        if (best[2] < best[1]) std::swap(best[1], best[2]);
        if (best[1] < best[0]) std::swap(best[0], best[1]);
      }
    }
    double sum = 0.0;
    for (std::size_t m = 0; m < k; ++m) sum += std::sqrt(best[m]);
    out[i] = sum / static_cast<double>(k);
  });
  return out;
}

TrainState init_from_points(const SeedPoints &seeds, const TrainConfig &config, double scene_extent) {
  config.validate();
  require(scene_extent > 0.0, ErrorKind::InvalidParameter, "scene extent must be positive");
  TrainState state;
  state.config = config;
  state.rng.seed(config.seed);
  state.scene_extent = scene_extent;

  std::vector<Vec3> positions;
  std::vector<Vec3> colors;
  if (config.random_init_points > 0) {
    Vec3 lo = Vec3::Constant(-0.5 * scene_extent), hi = Vec3::Constant(0.5 * scene_extent);
    if (!seeds.positions.empty()) {
      lo = hi = seeds.positions.front();
      for (const auto &p : seeds.positions) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < config.random_init_points; ++i) {
      positions.emplace_back(lo + (hi - lo).cwiseProduct(Vec3(u(state.rng), u(state.rng), u(state.rng))));
      colors.emplace_back(u(state.rng), u(state.rng), u(state.rng));
    }
  } else {
    if (seeds.positions.empty()) fail(ErrorKind::Config, "no seed points and init.random_points is 0");
    require(seeds.colors.size() == seeds.positions.size(), ErrorKind::DimensionMismatch,
            "seed point colors do not match positions");
    positions = seeds.positions;
    colors = seeds.colors;
  }

  const std::vector<double> scales = nearest_neighbor_scales(positions);
  const double fallback = 0.01 * scene_extent;
  GaussianCloud cloud(positions.size(), config.feature_dim, config.sh_degree);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    cloud.set_position(i, positions[i]);
    const double s = scales[i] > 0.0 ? scales[i] : fallback;
    cloud.set_log_scale(i, Vec3::Constant(std::log(s)));
    cloud.set_rotation(i, Vec4(1, 0, 0, 0));
    cloud.opacity_logit[i] = logit(config.init_opacity);
    cloud.set_base_color(i, colors[i].cwiseMax(0.0).cwiseMin(1.0));
    for (double &f : cloud.feature_of(i)) f = config.init_feature_std * normal(state.rng);
  }
  state.cloud = std::move(cloud);
  state.optimizer = GaussianOptimizer(state.cloud, AdamHyper{0.9, 0.999, 1e-15});
  state.predictor = TransientPredictor(config.transient_net);
  state.stats = DensifyStats(state.cloud.size());
  return state;
}

TrainState init_from_cloud(const GaussianCloud &cloud, const TrainConfig &config, double scene_extent) {
  config.validate();
  require(scene_extent > 0.0, ErrorKind::InvalidParameter, "scene extent must be positive");
  require(!cloud.empty(), ErrorKind::Config, "initial cloud is empty");
  require(cloud.sh_degree() == config.sh_degree, ErrorKind::Config,
          "initial cloud has SH degree " + std::to_string(cloud.sh_degree()) + ", config asks for " +
              std::to_string(config.sh_degree));
  cloud.validate();
  TrainState state;
  state.config = config;
  state.rng.seed(config.seed);
  state.scene_extent = scene_extent;
  state.cloud = cloud.feature_dim() == config.feature_dim ? cloud : cloud.with_feature_dim(config.feature_dim);
  state.optimizer = GaussianOptimizer(state.cloud, AdamHyper{0.9, 0.999, 1e-15});
  state.predictor = TransientPredictor(config.transient_net);
  state.stats = DensifyStats(state.cloud.size());
  return state;
}

SamplePlan sample_contrastive_pixels(const LabelImage &mask, const MaskImage &valid, const TransientMap *transient,
                                     double delta, int budget, std::mt19937_64 &rng) {
  require_same_extent(mask, valid, "sample_contrastive_pixels");
  if (transient != nullptr) require_same_extent(mask, *transient, "sample_contrastive_pixels transient");
  require(budget >= 0, ErrorKind::InvalidParameter, "sample budget must be non-negative");
  std::vector<std::size_t> eligible;
  for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
    if (mask.data[p] <= 0 || valid.data[p] == 0) continue;
    if (transient != nullptr && !(transient->data[p] < delta)) continue;
    eligible.push_back(p);
  }
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(budget), eligible.size());
  // Partial Fisher-Yates: the first `take` entries become a uniform sample without replacement.
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
    std::swap(eligible[i], eligible[pick(rng)]);
  }
  SamplePlan plan;
  plan.pixels.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t p = eligible[i];
    const int x = static_cast<int>(p % static_cast<std::size_t>(mask.width));
    const int y = static_cast<int>(p / static_cast<std::size_t>(mask.width));
    plan.pixels.push_back({x, y, mask.data[p]});
  }
  return plan;
}

double position_learning_rate(const TrainConfig &config, std::int64_t iteration, double scene_extent) {
  const double t = config.iterations > 0 ? std::clamp(static_cast<double>(iteration) / config.iterations, 0.0, 1.0) : 0.0;
  double lr = 0.0;
  if (config.lr.position_init > 0.0 && config.lr.position_final > 0.0) {
    lr = std::exp((1.0 - t) * std::log(config.lr.position_init) + t * std::log(config.lr.position_final));
  }
  return config.lr.position_scaled_by_extent ? lr * scene_extent : lr;
}

StepGradients compute_step(const TrainState &state, const Frame &frame, TrainContext &context, std::mt19937_64 &rng) {
  const TrainConfig &cfg = state.config;
  const Camera &cam = frame.camera;
  const auto masks = context.full_masks(cam);
  const Camera fcam = feature_camera_for(cfg, cam);
  const auto fmasks = context.feature_masks(fcam);

  StepGradients out;
  std::optional<TransientForward> tf;
  if (cfg.transient_enabled) {
    tf = state.predictor.forward(frame.image);
    out.transient = tf->probability;
  } else {
    out.transient = TransientMap(cam.width, cam.height, 1);
  }

  const RenderOutput rgb = rasterize_forward(state.cloud, cam, Channels::Rgb, cfg.raster);
  const WeightedImageLoss photo = loss_rgb_weighted(frame.image, rgb.rgb, out.transient, *masks);
  out.parts.rgb = photo.value;

  // Contrastive term on the reduced-resolution feature pass.
  std::optional<RenderOutput> feat;
  ImageF grad_feature;
  if (cfg.weights.contrastive > 0.0) {
    const LabelImage fmask = nearest_resize(frame.mask, fcam.width, fcam.height);
    std::optional<TransientMap> p_small;
    if (cfg.transient_enabled) p_small = area_downsample(out.transient, fcam.width, fcam.height);
    const SamplePlan plan = sample_contrastive_pixels(fmask, fmasks->valid, p_small ? &*p_small : nullptr, cfg.delta,
                                                      cfg.sample_budget, rng);
    out.samples = plan.size();
    if (plan.size() >= 2) {
      feat = rasterize_forward(state.cloud, fcam, Channels::Feature, cfg.raster);
      const ContrastiveLoss c = loss_contrastive(feat->feature, plan, cfg.gamma);
      out.parts.contrastive = c.value;
      std::vector<double> g = c.grad;
      for (double &v : g) v *= cfg.weights.contrastive;
      grad_feature = scatter_plan_gradient(plan, g, fcam.width, fcam.height, cfg.feature_dim);
    }
  }

  std::optional<ImageLoss> reg;
  if (cfg.transient_enabled) {
    reg = loss_transient_reg(out.transient, *masks);
    out.parts.transient_reg = reg->value;
  }
  out.total = loss_total(out.parts, cfg.weights);

  ImageF grad_rgb = photo.grad_rendered;
  for (double &v : grad_rgb.data) v *= cfg.weights.rgb;
  const double pixel_norm = 1.0 / static_cast<double>(cam.width * cam.height);
  out.gaussians = rasterize_backward(state.cloud, rgb, &grad_rgb, nullptr, pixel_norm);
  if (feat) out.gaussians += rasterize_backward(state.cloud, *feat, nullptr, &grad_feature, 1.0);

  if (tf) {
    TransientMap g(cam.width, cam.height, 1);
    for (std::size_t p = 0; p < g.data.size(); ++p) {
      g.data[p] = cfg.weights.rgb * photo.grad_transient.data[p] + cfg.weights.transient_reg * reg->grad.data[p];
    }
    out.predictor = state.predictor.backward(*tf, g);
  }
  return out;
}

StepResult train_step(TrainState &state, const Frame &frame, TrainContext &context) {
  TrainConfig &cfg = state.config;
  StepGradients g = compute_step(state, frame, context, state.rng);

  const std::array<double, 6> lrs{position_learning_rate(cfg, state.iteration, state.scene_extent),
                                  cfg.lr.scale,
                                  cfg.lr.rotation,
                                  cfg.lr.opacity,
                                  cfg.lr.color,
                                  cfg.lr.feature};
  state.optimizer.step(state.cloud, g.gaussians, lrs);
  if (!g.predictor.empty()) state.predictor.step(g.predictor, cfg.lr.transient);
  ++state.iteration;

  // Density control, on the 1-based iteration just completed.
  const std::int64_t it = state.iteration;
  const auto &sched = cfg.densify;
  if (sched.enabled && it < sched.stop) {
    accumulate(state.stats, g.gaussians);
    if (it > sched.start && it % sched.interval == 0) {
      DensifyResult r = densify_and_prune(state.cloud, state.stats, sched.thresholds, state.scene_extent, state.rng);
      state.optimizer.remap(r.cloud, r.ancestor, r.fresh);
      state.cloud = std::move(r.cloud);
    }
    if (sched.opacity_reset_interval > 0 && it % sched.opacity_reset_interval == 0 && it < cfg.iterations) {
      reset_opacity(state.cloud);
    }
  }

  StepResult result;
  result.record.iteration = it;
  result.record.frame_id = frame.frame_id;
  result.record.loss_rgb = g.parts.rgb;
  result.record.loss_contrastive = g.parts.contrastive;
  result.record.loss_transient_reg = g.parts.transient_reg;
  result.record.loss_total = g.total;
  result.record.samples = g.samples;
  result.record.gaussians = state.cloud.size();
  result.transient = std::move(g.transient);
  return result;
}

std::optional<double> validation_psnr(const TrainState &state, const Dataset &dataset, TrainContext &context) {
  const auto frames = dataset.indices_of(Split::Validation);
  if (frames.empty()) return std::nullopt;
  double sum = 0.0;
  int n = 0;
  for (std::size_t idx : frames) {
    const Frame &f = dataset.frames[idx];
    const RenderOutput out = rasterize_forward(state.cloud, f.camera, Channels::Rgb, state.config.raster);
    ImageF rendered = out.rgb;
    for (double &v : rendered.data) v = quantize_unit8(v);
    const auto masks = context.full_masks(f.camera);
    if (const auto p = psnr(f.image, rendered, &masks->valid)) {
      sum += *p;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::size_t next_training_frame(TrainState &state, const Dataset &dataset) {
  if (state.order_cursor >= state.frame_order.size()) {
    state.frame_order = dataset.indices_of(Split::Train);
    require(!state.frame_order.empty(), ErrorKind::Config, "dataset has no training frames");
    shuffle_indices(state.frame_order, state.rng);
    state.order_cursor = 0;
  }
  return state.frame_order[state.order_cursor++];
}

void train(TrainState &state, const Dataset &dataset, const TrainCallbacks &callbacks) {
  state.config.validate();
  require(!dataset.indices_of(Split::Train).empty(), ErrorKind::Config, "dataset has no training frames");
  if (state.config.workers > 0) set_worker_count(state.config.workers);
  TrainContext context(state.config);
  const auto &cfg = state.config;
  while (state.iteration < cfg.iterations) {
    const std::size_t idx = next_training_frame(state, dataset);
    StepResult r = train_step(state, dataset.frames[idx], context);
    if (cfg.validation_interval > 0 &&
        (state.iteration % cfg.validation_interval == 0 || state.iteration == cfg.iterations)) {
      r.record.validation_psnr = validation_psnr(state, dataset, context);
    }
    state.curves.push_back(r.record);
    if (callbacks.on_record) callbacks.on_record(r.record);
    if (callbacks.on_checkpoint && cfg.checkpoint_interval > 0 && state.iteration % cfg.checkpoint_interval == 0 &&
        state.iteration < cfg.iterations) {
      callbacks.on_checkpoint(state);
    }
  }
}

} // namespace splatseg
