// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include <cstring>
#include <sstream>

#include "splatseg/dataset_io.hpp"
#include "splatseg/error.hpp"

namespace splatseg {
namespace {

constexpr char kMagic[8] = {'S', 'P', 'S', 'G', 'C', 'K', 'P', 'T'};

class Writer {
public:
  template <typename T> void pod(const T &v) {
    static_assert(std::is_trivially_copyable_v<T>);
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.append(b, sizeof(T));
  }
  void str(const std::string &s) {
    pod<std::uint64_t>(s.size());
    out += s;
  }
  template <typename T> void vec(const std::vector<T> &v) {
    pod<std::uint64_t>(v.size());
    for (const T &x : v) pod(x);
  }
  void moments(const AdamMoments &m) {
    vec(m.m);
    vec(m.v);
    pod(m.step);
  }
  std::string out;
};

class Reader {
public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  template <typename T> T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  template <typename T> std::vector<T> vec() {
    const auto n = pod<std::uint64_t>();
    need(n * sizeof(T));
    std::vector<T> v(n);
    if (n > 0) std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return v;
  }
  AdamMoments moments() {
    AdamMoments m;
    m.m = vec<double>();
    m.v = vec<double>();
    m.step = pod<std::int64_t>();
    return m;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) {
      fail(ErrorKind::Parse, "truncated checkpoint at byte offset " + std::to_string(pos_ + 20));
    }
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void check(bool ok, const std::string &what) { require(ok, ErrorKind::DimensionMismatch, "checkpoint: " + what); }

} // namespace

std::string checkpoint_bytes(const TrainState &s) {
  Writer w;
  w.str(config_to_json(s.config, -1));
  w.pod(s.iteration);
  std::ostringstream rng;
  rng << s.rng;
  w.str(rng.str());
  std::vector<std::uint64_t> order(s.frame_order.begin(), s.frame_order.end());
  w.vec(order);
  w.pod<std::uint64_t>(s.order_cursor);
  w.pod(s.scene_extent);

  w.pod<std::int32_t>(s.cloud.feature_dim());
  w.pod<std::int32_t>(s.cloud.sh_degree());
  w.pod<std::uint64_t>(s.cloud.size());
  for (ParamGroup g : kParamGroups) w.vec(s.cloud.group(g));

  const AdamHyper &h = s.optimizer.hyper();
  w.pod(h.beta1);
  w.pod(h.beta2);
  w.pod(h.eps);
  for (ParamGroup g : kParamGroups) w.moments(s.optimizer.group(g));

  w.vec(s.predictor.parameters());
  w.moments(s.predictor.moments());

  w.vec(s.stats.grad_accum);
  w.vec(s.stats.position_accum);
  w.vec(s.stats.count);
  w.vec(s.stats.max_radius);

  w.pod<std::uint64_t>(s.curves.size());
  for (const MetricsRecord &r : s.curves) {
    w.pod(r.iteration);
    w.pod<std::int32_t>(r.frame_id);
    w.pod(r.loss_rgb);
    w.pod(r.loss_contrastive);
    w.pod(r.loss_transient_reg);
    w.pod(r.loss_total);
    w.pod<std::uint64_t>(r.samples);
    w.pod<std::uint64_t>(r.gaussians);
    w.pod<std::uint8_t>(r.validation_psnr ? 1 : 0);
    w.pod(r.validation_psnr.value_or(0.0));
  }

  Writer file;
  file.out.append(kMagic, sizeof kMagic);
  file.pod(kCheckpointVersion);
  file.pod<std::uint64_t>(w.out.size());
  file.out += w.out;
  const std::string hash = fnv1a_hex(w.out);
  file.out += hash;
  return file.out;
}

TrainState checkpoint_from_bytes(const std::string &bytes) {
  constexpr std::size_t kHeader = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  require(bytes.size() >= kHeader && std::memcmp(bytes.data(), kMagic, sizeof kMagic) == 0, ErrorKind::Parse,
          "not a splatseg checkpoint (bad magic at byte offset 0)");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + sizeof kMagic, sizeof version);
  require(version == kCheckpointVersion, ErrorKind::VersionMismatch,
          "checkpoint version " + std::to_string(version) + " (expected " + std::to_string(kCheckpointVersion) + ")");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + sizeof kMagic + sizeof version, sizeof len);
  require(bytes.size() == kHeader + len + 16, ErrorKind::Parse,
          "checkpoint size " + std::to_string(bytes.size()) + " disagrees with its header");
  const std::string_view payload(bytes.data() + kHeader, len);
  require(fnv1a_hex(std::string(payload)) == bytes.substr(kHeader + len), ErrorKind::Parse,
          "checkpoint checksum mismatch (corrupt file)");

  Reader r(payload);
  TrainState s;
  s.config = config_from_json(r.str());
  s.iteration = r.pod<std::int64_t>();
  {
    std::istringstream in(r.str());
    in >> s.rng;
    require(!in.fail(), ErrorKind::Parse, "checkpoint: bad RNG state");
  }
  for (auto v : r.vec<std::uint64_t>()) s.frame_order.push_back(static_cast<std::size_t>(v));
  s.order_cursor = static_cast<std::size_t>(r.pod<std::uint64_t>());
  s.scene_extent = r.pod<double>();

  const int dim = r.pod<std::int32_t>();
  const int degree = r.pod<std::int32_t>();
  const auto n = r.pod<std::uint64_t>();
  check(dim == s.config.feature_dim, "feature dimension disagrees with its config");
  GaussianCloud cloud(static_cast<std::size_t>(n), dim, degree);
  for (ParamGroup g : kParamGroups) {
    auto v = r.vec<double>();
    check(v.size() == cloud.group(g).size(), std::string("wrong length for ") + to_string(g));
    cloud.group(g) = std::move(v);
  }
  cloud.validate();
  s.cloud = std::move(cloud);

  AdamHyper h;
  h.beta1 = r.pod<double>();
  h.beta2 = r.pod<double>();
  h.eps = r.pod<double>();
  s.optimizer = GaussianOptimizer(s.cloud, h);
  for (ParamGroup g : kParamGroups) {
    AdamMoments m = r.moments();
    check(m.m.size() == s.cloud.group(g).size() && m.v.size() == m.m.size(),
          std::string("optimizer moments disagree for ") + to_string(g));
    s.optimizer.group(g) = std::move(m);
  }

  s.predictor = TransientPredictor(s.config.transient_net);
  auto params = r.vec<double>();
  check(params.size() == s.predictor.parameter_count(), "predictor parameter count disagrees with its config");
  s.predictor.parameters() = std::move(params);
  AdamMoments pm = r.moments();
  check(pm.m.size() == s.predictor.parameter_count() && pm.v.size() == pm.m.size(), "predictor moments");
  s.predictor.moments() = std::move(pm);

  s.stats.grad_accum = r.vec<double>();
  s.stats.position_accum = r.vec<double>();
  s.stats.count = r.vec<std::int64_t>();
  s.stats.max_radius = r.vec<int>();
  check(s.stats.grad_accum.size() == n && s.stats.position_accum.size() == 3 * n && s.stats.count.size() == n &&
            s.stats.max_radius.size() == n,
        "densify statistics disagree with the Gaussian count");

  const auto records = r.pod<std::uint64_t>();
  for (std::uint64_t k = 0; k < records; ++k) {
    MetricsRecord m;
    m.iteration = r.pod<std::int64_t>();
    m.frame_id = r.pod<std::int32_t>();
    m.loss_rgb = r.pod<double>();
    m.loss_contrastive = r.pod<double>();
    m.loss_transient_reg = r.pod<double>();
    m.loss_total = r.pod<double>();
    m.samples = static_cast<std::size_t>(r.pod<std::uint64_t>());
    m.gaussians = static_cast<std::size_t>(r.pod<std::uint64_t>());
    const bool has = r.pod<std::uint8_t>() != 0;
    const double v = r.pod<double>();
    if (has) m.validation_psnr = v;
    s.curves.push_back(m);
  }
  require(r.done(), ErrorKind::Parse, "trailing bytes in checkpoint payload");
  return s;
}

void save_checkpoint(const TrainState &state, const std::filesystem::path &path) {
  write_file(path, checkpoint_bytes(state));
}

TrainState load_checkpoint(const std::filesystem::path &path) { return checkpoint_from_bytes(read_file(path)); }

} // namespace splatseg
