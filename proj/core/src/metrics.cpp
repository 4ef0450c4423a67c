// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "splatseg/error.hpp"
#include "splatseg/parallel.hpp"
#include "splatseg/segment.hpp"

namespace splatseg {
namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

MaskImage object_mask(const FrameTruth &truth, int object_id, const MaskImage &valid, std::size_t &count) {
  MaskImage m(truth.instance_labels.width, truth.instance_labels.height, 1);
  count = 0;
  for (std::size_t p = 0; p < m.data.size(); ++p) {
    if (truth.instance_labels.data[p] == object_id && valid.data[p]) {
      m.data[p] = 1;
      ++count;
    }
  }
  return m;
}

MaskImage valid_mask(const SceneModel &model, const Camera &camera) { return build_masks(camera, model.vignette).valid; }

ImageF render_features(const SceneModel &model, const Camera &camera) {
  return rasterize_forward(model.cloud, camera, Channels::Feature, model.raster).feature;
}

double mean_of(const std::vector<double> &v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void finalize(ObjectIou &o) {
  if (o.frames.empty()) {
    if (o.excluded.empty()) o.excluded = "not visible in evaluated frames";
    return;
  }
  double s = 0.0;
  for (const auto &f : o.frames) s += f.iou;
  o.iou = s / static_cast<double>(o.frames.size());
}

/// Per object: the mean feature of cross_view_clicks pixels drawn from seen frames (nullopt if never seen).
std::map<int, std::optional<std::vector<double>>> cross_view_queries(const SceneModel &model, const Dataset &dataset,
                                                                     const EvalOptions &options) {
  std::map<int, std::optional<std::vector<double>>> out;
  const auto seen = dataset.seen_indices();
  std::map<std::size_t, ImageF> feature_cache;
  for (const ObjectRecord &obj : dataset.objects) {
    struct Candidate {
      std::size_t frame;
      std::vector<std::size_t> pixels;
    };
    std::vector<Candidate> candidates;
    std::size_t total = 0;
    for (std::size_t idx : seen) {
      const Frame &f = dataset.frames[idx];
      if (!f.truth) continue;
      const MaskImage valid = valid_mask(model, f.camera);
      std::size_t count = 0;
      const MaskImage m = object_mask(*f.truth, obj.id, valid, count);
      if (count < static_cast<std::size_t>(options.min_object_pixels)) continue;
      Candidate c{idx, {}};
      for (std::size_t p = 0; p < m.data.size(); ++p)
        if (m.data[p]) c.pixels.push_back(p);
      total += c.pixels.size();
      candidates.push_back(std::move(c));
    }
    if (total == 0) {
      out[obj.id] = std::nullopt;
      continue;
    }
    std::mt19937_64 rng = seeded(options.seed, 0xC0FFEEu, static_cast<std::uint64_t>(obj.id));
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    std::vector<double> q(static_cast<std::size_t>(model.cloud.feature_dim()), 0.0);
    for (int s = 0; s < options.cross_view_clicks; ++s) {
      std::size_t r = pick(rng);
      std::size_t ci = 0;
      while (r >= candidates[ci].pixels.size()) {
        r -= candidates[ci].pixels.size();
        ++ci;
      }
      const std::size_t frame = candidates[ci].frame;
      auto it = feature_cache.find(frame);
      if (it == feature_cache.end()) {
        it = feature_cache.emplace(frame, render_features(model, dataset.frames[frame].camera)).first;
      }
      const std::size_t p = candidates[ci].pixels[r];
      for (std::size_t c = 0; c < q.size(); ++c) q[c] += it->second.data[p * q.size() + c];
    }
    for (double &v : q) v /= static_cast<double>(options.cross_view_clicks);
    out[obj.id] = q;
  }
  return out;
}

} // namespace

std::optional<double> psnr(const ImageF &gt, const ImageF &rendered, const MaskImage *region) {
  require_same_shape(gt, rendered, "psnr");
  if (region != nullptr) require_same_extent(gt, *region, "psnr region");
  double sq = 0.0;
  std::size_t count = 0;
  const std::size_t c = static_cast<std::size_t>(gt.channels);
  for (std::size_t p = 0; p < gt.pixel_count(); ++p) {
    if (region != nullptr && region->data[p] == 0) continue;
    for (std::size_t k = 0; k < c; ++k) {
      const double d = gt.data[p * c + k] - rendered.data[p * c + k];
      sq += d * d;
    }
    count += c;
  }
  if (count == 0) return std::nullopt;
  const double mse = sq / static_cast<double>(count);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

std::optional<BestIou> best_iou(const ImageF &distance, const MaskImage &gt, const MaskImage *valid) {
  require_same_extent(distance, gt, "best_iou");
  if (valid != nullptr) require_same_extent(distance, *valid, "best_iou valid");
  std::vector<std::pair<double, std::uint8_t>> px;
  std::size_t gt_count = 0;
  for (std::size_t p = 0; p < distance.pixel_count(); ++p) {
    if (valid != nullptr && valid->data[p] == 0) continue;
    const std::uint8_t g = gt.data[p] ? 1 : 0;
    gt_count += g;
    px.emplace_back(distance.data[p], g);
  }
  if (gt_count == 0) return std::nullopt;
  std::sort(px.begin(), px.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
  BestIou best{-1.0, 0.0};
  std::size_t predicted = 0, inter = 0;
  for (std::size_t k = 0; k < px.size();) {
    const double t = px[k].first;
    while (k < px.size() && px[k].first == t) {
      ++predicted;
      inter += px[k].second;
      ++k;
    }
    const double iou = static_cast<double>(inter) / static_cast<double>(gt_count + predicted - inter);
    if (iou > best.iou) best = {iou, t};
  }
  return best;
}

double iou_3d(const Box3 &a, const Box3 &b) {
  require(a.valid() && b.valid(), ErrorKind::Contract, "iou_3d: inverted box");
  const Box3 inter{a.min.cwiseMax(b.min), a.max.cwiseMin(b.max)};
  const double vi = inter.volume();
  const double vu = a.volume() + b.volume() - vi;
  if (vu <= 0.0) return a == b ? 1.0 : 0.0;
  return vi / vu;
}

std::vector<std::size_t> evaluation_frames(const Dataset &dataset, const EvalOptions &options) {
  std::vector<std::size_t> frames = dataset.indices_of(options.split);
  if (options.max_frames > 0 && frames.size() > static_cast<std::size_t>(options.max_frames)) {
    std::vector<std::size_t> sub;
    const double step = static_cast<double>(frames.size()) / options.max_frames;
    for (int k = 0; k < options.max_frames; ++k) sub.push_back(frames[static_cast<std::size_t>(k * step)]);
    frames = sub;
  }
  return frames;
}

std::vector<FramePsnr> eval_psnr(const SceneModel &model, const Dataset &dataset, const EvalOptions &options) {
  const auto frames = evaluation_frames(dataset, options);
  std::vector<FramePsnr> out(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const Frame &f = dataset.frames[frames[k]];
    ImageF rendered = rasterize_forward(model.cloud, f.camera, Channels::Rgb, model.raster).rgb;
    if (options.quantize)
      for (double &v : rendered.data) v = quantize_unit8(v);
    const MaskImage valid = valid_mask(model, f.camera);
    FramePsnr r;
    r.frame_id = f.frame_id;
    r.all = psnr(f.image, rendered, &valid);
    if (f.truth) {
      MaskImage stat = valid, dyn = valid;
      for (std::size_t p = 0; p < valid.data.size(); ++p) {
        const bool moving = f.truth->dynamic_mask.data[p] != 0;
        stat.data[p] = valid.data[p] && !moving;
        dyn.data[p] = valid.data[p] && moving;
      }
      r.static_region = psnr(f.image, rendered, &stat);
      r.dynamic_region = psnr(f.image, rendered, &dyn);
    }
    out[k] = r;
  }
  return out;
}

std::vector<ObjectIou> eval_in_view(const SceneModel &model, const Dataset &dataset, const EvalOptions &options) {
  const auto frames = evaluation_frames(dataset, options);
  std::vector<ObjectIou> out;
  for (const auto &obj : dataset.objects) out.push_back({obj.id, obj.dynamic, 0.0, {}, {}});
  for (std::size_t idx : frames) {
    const Frame &f = dataset.frames[idx];
    if (!f.truth) continue;
    const MaskImage valid = valid_mask(model, f.camera);
    std::optional<ImageF> features;
    for (auto &o : out) {
      std::size_t count = 0;
      const MaskImage gt = object_mask(*f.truth, o.object_id, valid, count);
      if (count < static_cast<std::size_t>(options.min_object_pixels)) continue;
      if (!features) features = render_features(model, f.camera);
      std::vector<std::size_t> pixels;
      for (std::size_t p = 0; p < gt.data.size(); ++p)
        if (gt.data[p]) pixels.push_back(p);
      std::mt19937_64 rng = seeded(options.seed, static_cast<std::uint64_t>(f.frame_id), static_cast<std::uint64_t>(o.object_id));
      const std::size_t p = pixels[std::uniform_int_distribution<std::size_t>(0, pixels.size() - 1)(rng)];
      const auto q = features->pixel(static_cast<int>(p % f.camera.width), static_cast<int>(p / f.camera.width));
      const ImageF dist = similarity_image(*features, q);
      const auto b = best_iou(dist, gt, &valid);
      o.frames.push_back({f.frame_id, b->iou, b->threshold});
    }
  }
  for (auto &o : out) finalize(o);
  return out;
}

std::vector<ObjectIou> eval_cross_view(const SceneModel &model, const Dataset &dataset, const EvalOptions &options) {
  const auto queries = cross_view_queries(model, dataset, options);
  const auto frames = evaluation_frames(dataset, options);
  std::vector<ObjectIou> out;
  for (const auto &obj : dataset.objects) out.push_back({obj.id, obj.dynamic, 0.0, {}, {}});
  for (std::size_t idx : frames) {
    const Frame &f = dataset.frames[idx];
    if (!f.truth) continue;
    const MaskImage valid = valid_mask(model, f.camera);
    std::optional<ImageF> features;
    for (auto &o : out) {
      const auto &q = queries.at(o.object_id);
      if (!q) continue;
      std::size_t count = 0;
      const MaskImage gt = object_mask(*f.truth, o.object_id, valid, count);
      if (count < static_cast<std::size_t>(options.min_object_pixels)) continue;
      if (!features) features = render_features(model, f.camera);
      const auto b = best_iou(similarity_image(*features, *q), gt, &valid);
      o.frames.push_back({f.frame_id, b->iou, b->threshold});
    }
  }
  for (auto &o : out) {
    if (!queries.at(o.object_id)) o.excluded = "not visible in seen frames";
    finalize(o);
  }
  return out;
}

BestIou best_box_iou(const GaussianCloud &cloud, std::span<const double> distances, const Box3 &gt_box) {
  require(distances.size() == cloud.size(), ErrorKind::Contract, "best_box_iou: one distance per Gaussian");
  std::vector<std::size_t> order(distances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });
  BestIou best;
  std::optional<Box3> box;
  // Grow the union box one distance level at a time.
  for (std::size_t k = 0; k < order.size();) {
    const double t = distances[order[k]];
    while (k < order.size() && distances[order[k]] == t) {
      const std::size_t one[] = {order[k]};
      const Box3 b = *selection_box(cloud, one);
      box = box ? Box3{box->min.cwiseMin(b.min), box->max.cwiseMax(b.max)} : b;
      ++k;
    }
    const double iou = iou_3d(*box, gt_box);
    if (iou > best.iou) best = {iou, t};
  }
  return best;
}

std::vector<Object3dIou> eval_3d(const SceneModel &model, const Dataset &dataset, const EvalOptions &options) {
  const auto queries = cross_view_queries(model, dataset, options);
  std::vector<Object3dIou> out;
  for (const auto &obj : dataset.objects) {
    if (obj.dynamic || obj.boxes.empty()) continue;
    Object3dIou r{obj.id, 0.0, 0.0};
    const auto &q = queries.at(obj.id);
    if (q && !model.cloud.empty()) {
      const BestIou b = best_box_iou(model.cloud, feature_distances(model.cloud, *q), obj.boxes.front());
      r.iou = b.iou;
      r.threshold = b.threshold;
    }
    out.push_back(r);
  }
  return out;
}

EvalReport evaluate(const SceneModel &model, const Dataset &dataset, const EvalOptions &options) {
  EvalReport r;
  r.options = options;
  r.psnr_frames = eval_psnr(model, dataset, options);
  std::vector<double> all, stat, dyn;
  for (const auto &f : r.psnr_frames) {
    if (f.all) all.push_back(*f.all);
    if (f.static_region) stat.push_back(*f.static_region);
    if (f.dynamic_region) dyn.push_back(*f.dynamic_region);
  }
  r.psnr_all = mean_of(all);
  r.psnr_static = mean_of(stat);
  r.psnr_dynamic = mean_of(dyn);
  if (dataset.has_truth()) {
    r.in_view = eval_in_view(model, dataset, options);
    r.cross_view = eval_cross_view(model, dataset, options);
    r.iou3d = eval_3d(model, dataset, options);
  }
  return r;
}

double EvalReport::miou(const std::vector<ObjectIou> &objects, std::optional<bool> dynamic) {
  std::vector<double> v;
  for (const auto &o : objects) {
    if (!o.excluded.empty()) continue;
    if (dynamic && o.dynamic != *dynamic) continue;
    v.push_back(o.iou);
  }
  return mean_of(v);
}

double EvalReport::miou_3d() const {
  std::vector<double> v;
  for (const auto &o : iou3d) v.push_back(o.iou);
  return mean_of(v);
}

std::string EvalReport::to_json() const {
  using nlohmann::json;
  json j;
  j["protocol"] = {{"split", to_string(options.split)},
                   {"seed", options.seed},
                   {"max_frames", options.max_frames},
                   {"cross_view_clicks", options.cross_view_clicks},
                   {"min_object_pixels", options.min_object_pixels},
                   {"quantize", options.quantize},
                   {"psnr_cap_db", kPsnrCap},
                   {"miou_aggregation", "mean over frames per object, then mean over objects"}};
  auto opt = [](const std::optional<double> &v) { return v ? json(*v) : json(nullptr); };
  json frames = json::array();
  for (const auto &f : psnr_frames) {
    frames.push_back({{"frame_id", f.frame_id}, {"all", opt(f.all)}, {"static", opt(f.static_region)},
                      {"dynamic", opt(f.dynamic_region)}});
  }
  j["psnr"] = {{"all", psnr_all}, {"static", psnr_static}, {"dynamic", psnr_dynamic}, {"frames", frames}};
  auto objects = [](const std::vector<ObjectIou> &v) {
    json a = json::array();
    for (const auto &o : v) {
      json fr = json::array();
      for (const auto &f : o.frames) fr.push_back({{"frame_id", f.frame_id}, {"iou", f.iou}, {"threshold", f.threshold}});
      json e = {{"object_id", o.object_id}, {"dynamic", o.dynamic}, {"frames", fr}};
      if (o.excluded.empty()) {
        e["iou"] = o.iou;
      } else {
        e["iou"] = nullptr;
        e["excluded"] = o.excluded;
      }
      a.push_back(e);
    }
    return a;
  };
  auto summary = [](const std::vector<ObjectIou> &v) {
    return json{{"all", miou(v, std::nullopt)}, {"static", miou(v, false)}, {"dynamic", miou(v, true)}};
  };
  j["in_view"] = {{"miou", summary(in_view)}, {"objects", objects(in_view)}};
  j["cross_view"] = {{"miou", summary(cross_view)}, {"objects", objects(cross_view)}};
  json boxes = json::array();
  for (const auto &o : iou3d) boxes.push_back({{"object_id", o.object_id}, {"iou", o.iou}, {"threshold", o.threshold}});
  j["iou_3d"] = {{"miou", miou_3d()}, {"objects", boxes}};
  return j.dump(2);
}

std::string EvalReport::to_csv() const {
  std::ostringstream s;
  s.precision(17);
  s << "metric,scope,id,value,threshold\n";
  auto opt = [](const std::optional<double> &v) {
    std::ostringstream o;
    o.precision(17);
    if (v) o << *v;
    return o.str();
  };
  for (const auto &f : psnr_frames) {
    s << "psnr_all,frame," << f.frame_id << ',' << opt(f.all) << ",\n";
    s << "psnr_static,frame," << f.frame_id << ',' << opt(f.static_region) << ",\n";
    s << "psnr_dynamic,frame," << f.frame_id << ',' << opt(f.dynamic_region) << ",\n";
  }
  s << "psnr_all,aggregate,," << psnr_all << ",\n";
  s << "psnr_static,aggregate,," << psnr_static << ",\n";
  s << "psnr_dynamic,aggregate,," << psnr_dynamic << ",\n";
  auto objects = [&](const char *name, const std::vector<ObjectIou> &v) {
    for (const auto &o : v) {
      if (!o.excluded.empty()) continue;
      s << name << ",object," << o.object_id << ',' << o.iou << ",\n";
      for (const auto &f : o.frames) s << name << ",object_frame," << o.object_id << ':' << f.frame_id << ',' << f.iou << ',' << f.threshold << '\n';
    }
    s << name << ",aggregate,," << miou(v, std::nullopt) << ",\n";
  };
  objects("iou_in_view", in_view);
  objects("iou_cross_view", cross_view);
  for (const auto &o : iou3d) s << "iou_3d,object," << o.object_id << ',' << o.iou << ',' << o.threshold << '\n';
  s << "iou_3d,aggregate,," << miou_3d() << ",\n";
  return s.str();
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), ErrorKind::Contract, "auroc: size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t j = k;
    while (j < order.size() && scores[order[j]] == scores[order[k]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(k + j + 1); // 1-based ranks k+1..j
    for (std::size_t m = k; m < j; ++m) {
      if (labels[order[m]]) {
        rank_sum += avg_rank;
        pos += 1.0;
      } else {
        neg += 1.0;
      }
    }
    k = j;
  }
  require(pos > 0.0 && neg > 0.0, ErrorKind::InvalidParameter, "auroc needs both positive and negative labels");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

} // namespace splatseg
