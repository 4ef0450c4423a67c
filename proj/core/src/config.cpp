// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include "splatseg/config.hpp"

#include <functional>
#include <sstream>

#include "json.hpp"
#include "splatseg/error.hpp"

namespace splatseg {
namespace {

using nlohmann::json;

struct Field {
  ConfigKeyDoc doc;
  std::function<json(const TrainConfig &)> get;
  std::function<void(TrainConfig &, const json &)> set;
};

template <typename T> const char *type_name();
template <> const char *type_name<double>() { return "number"; }
template <> const char *type_name<int>() { return "integer"; }
template <> const char *type_name<std::uint64_t>() { return "unsigned integer"; }
template <> const char *type_name<bool>() { return "boolean"; }

template <typename T> T convert(const json &v, const std::string &key) {
  bool ok = false;
  if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
  else if constexpr (std::is_same_v<T, double>) ok = v.is_number();
  else if constexpr (std::is_same_v<T, std::uint64_t>) ok = v.is_number_unsigned();
  else if constexpr (std::is_integral_v<T>) ok = v.is_number_integer();
  if (!ok) fail(ErrorKind::Config, "config key '" + key + "' expects " + type_name<T>() + ", got " + v.dump());
  return v.get<T>();
}

template <typename T, typename Access> Field scalar(std::string key, std::string description, Access access) {
  Field f;
  f.doc.key = key;
  f.doc.type = type_name<T>();
  f.doc.description = std::move(description);
  f.get = [access](const TrainConfig &c) { return json(access(const_cast<TrainConfig &>(c))); };
  f.set = [access, key](TrainConfig &c, const json &v) { access(c) = convert<T>(v, key); };
  return f;
}

std::vector<Field> build_fields() {
  std::vector<Field> f;
#define SPLATSEG_FIELD(T, key, expr, desc) f.push_back(scalar<T>(key, desc, [](TrainConfig &c) -> T & { return expr; }))
  SPLATSEG_FIELD(int, "feature_dim", c.feature_dim, "Per-Gaussian feature dimension d.");
  SPLATSEG_FIELD(double, "gamma", c.gamma, "RBF temperature of the contrastive similarity exp(-gamma |f1-f2|^2).");
  SPLATSEG_FIELD(double, "delta", c.delta, "Pixels with transient probability >= delta are excluded from contrastive sampling.");
  SPLATSEG_FIELD(double, "weights.rgb", c.weights.rgb, "Weight of the transient-weighted photometric loss.");
  SPLATSEG_FIELD(double, "weights.contrastive", c.weights.contrastive, "Weight of the contrastive feature loss.");
  SPLATSEG_FIELD(double, "weights.transient_reg", c.weights.transient_reg, "Weight of the L1 transient regularizer.");
  SPLATSEG_FIELD(int, "sample_budget", c.sample_budget, "Maximum contrastive pixels sampled per iteration.");
  SPLATSEG_FIELD(int, "iterations", c.iterations, "Training iterations.");
  SPLATSEG_FIELD(double, "lr.position_init", c.lr.position_init, "Initial position learning rate.");
  SPLATSEG_FIELD(double, "lr.position_final", c.lr.position_final, "Position learning rate at the last iteration (exponential decay).");
  SPLATSEG_FIELD(bool, "lr.position_scaled_by_extent", c.lr.position_scaled_by_extent, "Multiply position learning rates by the scene extent.");
  SPLATSEG_FIELD(double, "lr.scale", c.lr.scale, "Log-scale learning rate.");
  SPLATSEG_FIELD(double, "lr.rotation", c.lr.rotation, "Quaternion learning rate.");
  SPLATSEG_FIELD(double, "lr.opacity", c.lr.opacity, "Opacity-logit learning rate.");
  SPLATSEG_FIELD(double, "lr.color", c.lr.color, "SH color learning rate.");
  SPLATSEG_FIELD(double, "lr.feature", c.lr.feature, "Feature vector learning rate.");
  SPLATSEG_FIELD(double, "lr.transient", c.lr.transient, "Transient predictor learning rate.");
  SPLATSEG_FIELD(bool, "densify.enabled", c.densify.enabled, "Run density control.");
  SPLATSEG_FIELD(int, "densify.start", c.densify.start, "First iteration of density control.");
  SPLATSEG_FIELD(int, "densify.interval", c.densify.interval, "Iterations between densify events.");
  SPLATSEG_FIELD(int, "densify.stop", c.densify.stop, "No densify events at or after this iteration.");
  SPLATSEG_FIELD(int, "densify.opacity_reset_interval", c.densify.opacity_reset_interval, "Iterations between opacity resets (0 disables).");
  SPLATSEG_FIELD(double, "densify.grad_threshold", c.densify.thresholds.grad_threshold, "Mean view-space gradient norm that triggers clone/split.");
  SPLATSEG_FIELD(double, "densify.prune_opacity", c.densify.thresholds.prune_opacity, "Gaussians below this opacity are pruned.");
  SPLATSEG_FIELD(double, "densify.split_divisor", c.densify.thresholds.split_divisor, "Scale divisor for split children.");
  SPLATSEG_FIELD(double, "densify.dense_fraction", c.densify.thresholds.dense_fraction, "Clone/split boundary on max scale, as a fraction of scene extent.");
  SPLATSEG_FIELD(double, "densify.huge_fraction", c.densify.thresholds.huge_fraction, "Gaussians larger than this fraction of scene extent are pruned.");
  SPLATSEG_FIELD(int, "densify.split_children", c.densify.thresholds.split_children, "Children per split Gaussian.");
  SPLATSEG_FIELD(int, "sh_degree", c.sh_degree, "Spherical-harmonic degree of Gaussian color (0-3).");
  SPLATSEG_FIELD(int, "feature_width", c.feature_width, "Width of the feature rendering pass.");
  SPLATSEG_FIELD(int, "feature_height", c.feature_height, "Height of the feature rendering pass.");
  SPLATSEG_FIELD(std::uint64_t, "seed", c.seed, "Random seed for initialization, frame order and sampling.");
  SPLATSEG_FIELD(bool, "transient.enabled", c.transient_enabled, "Train the transient predictor (false: P = 0 and unconstrained sampling).");
  SPLATSEG_FIELD(int, "transient.working_resolution", c.transient_net.working_resolution, "Square input resolution of the transient predictor.");
  SPLATSEG_FIELD(double, "transient.leaky_slope", c.transient_net.leaky_slope, "Leaky-ReLU slope of the transient predictor.");
  SPLATSEG_FIELD(double, "transient.final_bias", c.transient_net.final_bias, "Initial bias of the predictor's output layer.");
  SPLATSEG_FIELD(std::uint64_t, "transient.seed", c.transient_net.seed, "Weight initialization seed of the transient predictor.");
  SPLATSEG_FIELD(double, "vignette.valid_radius", c.vignette.valid_radius, "Valid-pixel radius in pixels (<= 0: per-camera value).");
  SPLATSEG_FIELD(double, "raster.alpha_min", c.raster.alpha_min, "Splats below this alpha at a pixel are skipped.");
  SPLATSEG_FIELD(int, "raster.tile_size", c.raster.tile_size, "Rasterizer tile edge in pixels.");
  SPLATSEG_FIELD(double, "init.opacity", c.init_opacity, "Initial opacity of seeded Gaussians.");
  SPLATSEG_FIELD(double, "init.feature_std", c.init_feature_std, "Standard deviation of initial features.");
  SPLATSEG_FIELD(int, "init.random_points", c.random_init_points, "If > 0, initialize this many uniform random points instead of the seed points.");
  SPLATSEG_FIELD(int, "validation_interval", c.validation_interval, "Iterations between validation PSNR evaluations (0 disables).");
  SPLATSEG_FIELD(int, "checkpoint_interval", c.checkpoint_interval, "Iterations between checkpoints (0: final only).");
  SPLATSEG_FIELD(int, "workers", c.workers, "Worker threads (0: hardware concurrency).");
#undef SPLATSEG_FIELD

  {
    Field v;
    v.doc = {"transient.channels", "integer array", "", "Encoder channel widths of the transient predictor."};
    v.get = [](const TrainConfig &c) { return json(c.transient_net.channels); };
    v.set = [](TrainConfig &c, const json &j) {
      if (!j.is_array()) fail(ErrorKind::Config, "config key 'transient.channels' expects an integer array");
      std::vector<int> ch;
      for (const auto &e : j) ch.push_back(convert<int>(e, "transient.channels"));
      c.transient_net.channels = ch;
    };
    f.push_back(v);
  }
  {
    Field v;
    v.doc = {"vignette.profile", "string", "", "Radial vignette profile: cos4 or flat."};
    v.get = [](const TrainConfig &c) { return json(to_string(c.vignette.profile)); };
    v.set = [](TrainConfig &c, const json &j) {
      if (!j.is_string()) fail(ErrorKind::Config, "config key 'vignette.profile' expects a string");
      c.vignette.profile = vignette_profile_from_string(j.get<std::string>());
    };
    f.push_back(v);
  }
  {
    Field v;
    v.doc = {"raster.background", "number array", "", "RGB background color composited behind the splats."};
    v.get = [](const TrainConfig &c) {
      return json::array({c.raster.background[0], c.raster.background[1], c.raster.background[2]});
    };
    v.set = [](TrainConfig &c, const json &j) {
      if (!j.is_array() || j.size() != 3) fail(ErrorKind::Config, "config key 'raster.background' expects 3 numbers");
      for (int k = 0; k < 3; ++k) c.raster.background[k] = convert<double>(j[k], "raster.background");
    };
    f.push_back(v);
  }
  const TrainConfig defaults;
  for (auto &field : f) field.doc.default_value = field.get(defaults).dump();
  return f;
}

const std::vector<Field> &fields() {
  static const std::vector<Field> f = build_fields();
  return f;
}

const Field *find_field(const std::string &key) {
  for (const auto &f : fields())
    if (f.doc.key == key) return &f;
  return nullptr;
}

void flatten(const json &node, const std::string &prefix, std::vector<std::pair<std::string, json>> &out) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else {
      out.emplace_back(key, *it);
    }
  }
}

} // namespace

const std::vector<ConfigKeyDoc> &config_key_docs() {
  static const std::vector<ConfigKeyDoc> docs = [] {
    std::vector<ConfigKeyDoc> d;
    for (const auto &f : fields()) d.push_back(f.doc);
    return d;
  }();
  return docs;
}

std::string config_to_json(const TrainConfig &config, int indent) {
  json root = json::object();
  root["config_version"] = kConfigVersion;
  for (const auto &f : fields()) root[json::json_pointer("/" + [&] {
    std::string p = f.doc.key;
    for (auto &ch : p)
      if (ch == '.') ch = '/';
    return p;
  }())] = f.get(config);
  return root.dump(indent);
}

TrainConfig config_from_json(const std::string &text, const TrainConfig &base) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error &e) {
    fail(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) fail(ErrorKind::Config, "config root must be a JSON object");
  if (root.contains("config_version")) {
    const json &v = root["config_version"];
    if (!v.is_number_integer() || v.get<int>() != kConfigVersion) {
      fail(ErrorKind::Config, "config_version " + v.dump() + " is not supported (expected " + std::to_string(kConfigVersion) + ")");
    }
    root.erase("config_version");
  }
  std::vector<std::pair<std::string, json>> entries;
  flatten(root, "", entries);
  TrainConfig c = base;
  for (const auto &[key, value] : entries) {
    const Field *f = find_field(key);
    if (f == nullptr) fail(ErrorKind::Config, "unknown config key '" + key + "'");
    f->set(c, value);
  }
  c.validate();
  return c;
}

void apply_override(TrainConfig &config, const std::string &assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorKind::Config, "override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  const Field *f = find_field(key);
  if (f == nullptr) fail(ErrorKind::Config, "unknown config key '" + key + "'");
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error &) {
    value = raw;
  }
  TrainConfig next = config;
  f->set(next, value);
  next.validate();
  config = next;
}

bool TrainConfig::operator==(const TrainConfig &other) const { return config_to_json(*this, -1) == config_to_json(other, -1); }

void TrainConfig::validate() const {
  auto check = [](bool ok, const std::string &msg) {
    if (!ok) fail(ErrorKind::Config, msg);
  };
  check(feature_dim >= 1, "feature_dim must be >= 1");
  check(gamma > 0.0, "gamma must be > 0");
  check(delta > 0.0 && delta < 1.0, "delta must be in (0, 1)");
  check(weights.rgb >= 0.0 && weights.contrastive >= 0.0 && weights.transient_reg >= 0.0, "loss weights must be >= 0");
  check(sample_budget >= 2, "sample_budget must be >= 2");
  check(iterations >= 0, "iterations must be >= 0");
  check(lr.position_init >= 0.0 && lr.position_final >= 0.0 && lr.scale >= 0.0 && lr.rotation >= 0.0 &&
            lr.opacity >= 0.0 && lr.color >= 0.0 && lr.feature >= 0.0 && lr.transient >= 0.0,
        "learning rates must be >= 0");
  check(lr.position_final <= lr.position_init, "lr.position_final must not exceed lr.position_init");
  check(densify.interval > 0, "densify.interval must be > 0");
  check(densify.start >= 0 && densify.stop >= 0 && densify.opacity_reset_interval >= 0, "densify schedule must be >= 0");
  check(densify.thresholds.grad_threshold >= 0.0, "densify.grad_threshold must be >= 0");
  check(densify.thresholds.prune_opacity >= 0.0 && densify.thresholds.prune_opacity < 1.0, "densify.prune_opacity must be in [0, 1)");
  check(densify.thresholds.split_divisor > 0.0 && densify.thresholds.split_children >= 1, "densify split settings must be positive");
  check(densify.thresholds.dense_fraction > 0.0 && densify.thresholds.huge_fraction > 0.0, "densify size fractions must be > 0");
  check(sh_degree >= 0 && sh_degree <= 3, "sh_degree must be in [0, 3]");
  check(feature_width > 0 && feature_height > 0, "feature pass size must be positive");
  check(raster.tile_size > 0, "raster.tile_size must be > 0");
  check(raster.alpha_min >= 0.0 && raster.alpha_min < 1.0, "raster.alpha_min must be in [0, 1)");
  check(init_opacity > 0.0 && init_opacity < 1.0, "init.opacity must be in (0, 1)");
  check(init_feature_std >= 0.0, "init.feature_std must be >= 0");
  check(random_init_points >= 0, "init.random_points must be >= 0");
  check(validation_interval >= 0 && checkpoint_interval >= 0 && workers >= 0, "intervals and workers must be >= 0");
  transient_net.validate();
}

} // namespace splatseg
