// Copyright Contributors to the splatseg project
// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "splatseg/dataset_io.hpp"
#include "splatseg/error.hpp"

namespace splatseg {
namespace {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::optional<PlyType> ply_type(const std::string &name) {
  static const std::map<std::string, PlyType> types{
      {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
      {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
      {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
      {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
      {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
      {"float64", PlyType::Float64}};
  const auto it = types.find(name);
  if (it == types.end()) return std::nullopt;
  return it->second;
}

std::size_t type_size(PlyType t) {
  switch (t) {
  case PlyType::Int8:
  case PlyType::UInt8: return 1;
  case PlyType::Int16:
  case PlyType::UInt16: return 2;
  case PlyType::Int32:
  case PlyType::UInt32:
  case PlyType::Float32: return 4;
  case PlyType::Float64: return 8;
  }
  return 0;
}

template <typename T> T load(const char *p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

double read_value(PlyType t, const char *p) {
  switch (t) {
  case PlyType::Int8: return load<std::int8_t>(p);
  case PlyType::UInt8: return load<std::uint8_t>(p);
  case PlyType::Int16: return load<std::int16_t>(p);
  case PlyType::UInt16: return load<std::uint16_t>(p);
  case PlyType::Int32: return load<std::int32_t>(p);
  case PlyType::UInt32: return load<std::uint32_t>(p);
  case PlyType::Float32: return load<float>(p);
  case PlyType::Float64: return load<double>(p);
  }
  return 0.0;
}

struct Property {
  std::string name;
  PlyType type;
  std::size_t offset;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
  std::size_t stride = 0;
};

struct PlyFile {
  std::vector<Element> elements;
  std::size_t body_offset = 0;
};

PlyFile parse_header(const std::string &bytes) {
  PlyFile file;
  std::size_t pos = 0;
  int line_no = 0;
  bool format_seen = false;
  auto next_line = [&](std::size_t &line_start) -> std::string {
    const std::size_t end = bytes.find('\n', pos);
    if (end == std::string::npos) fail(ErrorKind::Parse, "PLY header not terminated (byte offset " + std::to_string(pos) + ")");
    line_start = pos;
    std::string line = bytes.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = end + 1;
    ++line_no;
    return line;
  };
  std::size_t at = 0;
  if (next_line(at) != "ply") fail(ErrorKind::Parse, "PLY magic missing (byte offset 0)");
  for (;;) {
    const std::string line = next_line(at);
    std::istringstream in(line);
    std::string word;
    in >> word;
    auto bad = [&](const std::string &why) {
      fail(ErrorKind::Parse, "malformed PLY header line " + std::to_string(line_no) + " (byte offset " +
                                 std::to_string(at) + "): " + why);
    };
    if (word == "end_header") break;
    if (word.empty() || word == "comment" || word == "obj_info") continue;
    if (word == "format") {
      std::string fmt, version;
      in >> fmt >> version;
      if (fmt != "binary_little_endian") bad("only binary_little_endian is supported, got '" + fmt + "'");
      format_seen = true;
    } else if (word == "element") {
      Element e;
      long long count = -1;
      in >> e.name >> count;
      if (e.name.empty() || count < 0) bad("expected 'element <name> <count>'");
      e.count = static_cast<std::size_t>(count);
      file.elements.push_back(e);
    } else if (word == "property") {
      if (file.elements.empty()) bad("property before any element");
      std::string type, name;
      in >> type;
      if (type == "list") bad("list properties are not supported");
      in >> name;
      const auto t = ply_type(type);
      if (!t || name.empty()) bad("expected 'property <type> <name>'");
      Element &e = file.elements.back();
      for (const auto &p : e.properties)
        if (p.name == name) bad("duplicate property '" + name + "'");
      e.properties.push_back({name, *t, e.stride});
      e.stride += type_size(*t);
    } else {
      bad("unknown keyword '" + word + "'");
    }
  }
  if (!format_seen) fail(ErrorKind::Parse, "PLY format line missing (byte offset 0)");
  file.body_offset = pos;
  return file;
}

void put(std::string &out, double v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

std::string header_of(const std::vector<std::string> &names, std::size_t count, const std::string &type,
                      const std::vector<std::string> &comments) {
  std::ostringstream h;
  h << "ply\nformat binary_little_endian 1.0\n";
  for (const auto &c : comments) h << "comment " << c << '\n';
  h << "element vertex " << count << '\n';
  for (const auto &n : names) h << "property " << type << ' ' << n << '\n';
  h << "end_header\n";
  return h.str();
}

/// Column accessor over the vertex element.
class VertexTable {
public:
  VertexTable(const std::string &bytes, const PlyFile &file) : bytes_(bytes) {
    std::size_t offset = file.body_offset;
    for (const auto &e : file.elements) {
      if (e.name == "vertex") {
        vertex_ = &e;
        base_ = offset;
        break;
      }
      offset += e.count * e.stride;
    }
    require(vertex_ != nullptr, ErrorKind::Parse, "PLY has no vertex element");
    const std::size_t need = base_ + vertex_->count * vertex_->stride;
    if (bytes.size() < need) {
      fail(ErrorKind::Parse, "truncated PLY body: expected " + std::to_string(need) + " bytes, file ends at byte offset " +
                                 std::to_string(bytes.size()));
    }
  }
  std::size_t count() const { return vertex_->count; }
  const Property *find(const std::string &name) const {
    for (const auto &p : vertex_->properties)
      if (p.name == name) return &p;
    return nullptr;
  }
  const Property &need(const std::string &name) const {
    const Property *p = find(name);
    if (p == nullptr) fail(ErrorKind::Parse, "PLY vertex element lacks property '" + name + "'");
    return *p;
  }
  double get(const Property &p, std::size_t i) const {
    return read_value(p.type, bytes_.data() + base_ + i * vertex_->stride + p.offset);
  }
  /// Highest k with prefix + k present, plus one.
  int run(const std::string &prefix) const {
    int k = 0;
    while (find(prefix + std::to_string(k)) != nullptr) ++k;
    return k;
  }

private:
  const std::string &bytes_;
  const Element *vertex_ = nullptr;
  std::size_t base_ = 0;
};

} // namespace

std::string export_ply_bytes(const GaussianCloud &cloud) {
  cloud.validate();
  const int coeffs = sh_coeff_count(cloud.sh_degree());
  std::vector<std::string> names{"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  for (int k = 0; k < 3 * (coeffs - 1); ++k) names.push_back("f_rest_" + std::to_string(k));
  names.push_back("opacity");
  for (int k = 0; k < 3; ++k) names.push_back("scale_" + std::to_string(k));
  for (int k = 0; k < 4; ++k) names.push_back("rot_" + std::to_string(k));
  for (int k = 0; k < cloud.feature_dim(); ++k) names.push_back("feat_" + std::to_string(k));

  std::string out = header_of(names, cloud.size(), "double",
                              {"splatseg gaussians sh_degree " + std::to_string(cloud.sh_degree())});
  out.reserve(out.size() + cloud.size() * names.size() * 8);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k) put(out, cloud.position[3 * i + k]);
    for (int k = 0; k < 3; ++k) put(out, 0.0);
    const auto c = cloud.color_of(i);
    for (int ch = 0; ch < 3; ++ch) put(out, c[static_cast<std::size_t>(ch)]);
    // f_rest is channel-major: all coefficients of red, then green, then blue.
    for (int ch = 0; ch < 3; ++ch)
      for (int k = 1; k < coeffs; ++k) put(out, c[static_cast<std::size_t>(3 * k + ch)]);
    put(out, cloud.opacity_logit[i]);
    for (int k = 0; k < 3; ++k) put(out, cloud.log_scale[3 * i + k]);
    for (int k = 0; k < 4; ++k) put(out, cloud.rotation[4 * i + k]);
    for (double f : cloud.feature_of(i)) put(out, f);
  }
  return out;
}

void export_ply(const GaussianCloud &cloud, const std::filesystem::path &path) { write_file(path, export_ply_bytes(cloud)); }

PlyImport import_ply_bytes(const std::string &bytes, int feature_dim_if_missing) {
  const PlyFile file = parse_header(bytes);
  const VertexTable t(bytes, file);

  const int rest = t.run("f_rest_");
  require(rest % 3 == 0, ErrorKind::Parse, "f_rest_* count " + std::to_string(rest) + " is not a multiple of 3");
  int degree = -1;
  for (int d = 0; d <= 3; ++d)
    if (3 * (sh_coeff_count(d) - 1) == rest) degree = d;
  require(degree >= 0, ErrorKind::Parse, "f_rest_* count " + std::to_string(rest) + " matches no SH degree <= 3");
  const int feats = t.run("feat_");

  PlyImport out;
  out.features_missing = feats == 0;
  const int dim = feats > 0 ? feats : feature_dim_if_missing;
  GaussianCloud cloud(t.count(), dim, degree);
  const int coeffs = sh_coeff_count(degree);

  const Property *pos[3] = {&t.need("x"), &t.need("y"), &t.need("z")};
  const Property *dc[3] = {&t.need("f_dc_0"), &t.need("f_dc_1"), &t.need("f_dc_2")};
  std::vector<const Property *> rest_p;
  for (int k = 0; k < rest; ++k) rest_p.push_back(&t.need("f_rest_" + std::to_string(k)));
  const Property &opacity = t.need("opacity");
  const Property *scale[3] = {&t.need("scale_0"), &t.need("scale_1"), &t.need("scale_2")};
  const Property *rot[4] = {&t.need("rot_0"), &t.need("rot_1"), &t.need("rot_2"), &t.need("rot_3")};
  std::vector<const Property *> feat_p;
  for (int k = 0; k < feats; ++k) feat_p.push_back(&t.need("feat_" + std::to_string(k)));

  for (std::size_t i = 0; i < t.count(); ++i) {
    for (int k = 0; k < 3; ++k) cloud.position[3 * i + k] = t.get(*pos[k], i);
    auto c = cloud.color_of(i);
    for (int ch = 0; ch < 3; ++ch) c[static_cast<std::size_t>(ch)] = t.get(*dc[ch], i);
    for (int ch = 0; ch < 3; ++ch)
      for (int k = 1; k < coeffs; ++k)
        c[static_cast<std::size_t>(3 * k + ch)] = t.get(*rest_p[static_cast<std::size_t>(ch * (coeffs - 1) + k - 1)], i);
    cloud.opacity_logit[i] = t.get(opacity, i);
    for (int k = 0; k < 3; ++k) cloud.log_scale[3 * i + k] = t.get(*scale[k], i);
    Vec4 q;
    for (int k = 0; k < 4; ++k) q[k] = t.get(*rot[k], i);
    const double n = q.norm();
    require(n > 0.0 && std::isfinite(n), ErrorKind::Parse, "Gaussian " + std::to_string(i) + " has a zero rotation");
    // Exact unit quaternions (our own exports) are kept bit-for-bit.
    if (std::abs(n - 1.0) > 1e-12) q /= n;
    for (int k = 0; k < 4; ++k) cloud.rotation[4 * i + k] = q[k];
    for (int k = 0; k < feats; ++k) cloud.feature[i * dim + k] = t.get(*feat_p[static_cast<std::size_t>(k)], i);
  }
  cloud.validate();
  out.cloud = std::move(cloud);
  return out;
}

PlyImport import_ply(const std::filesystem::path &path, int feature_dim_if_missing) {
  return import_ply_bytes(read_file(path), feature_dim_if_missing);
}

void write_seed_points(const std::filesystem::path &path, const SeedPoints &points) {
  require(points.positions.size() == points.colors.size(), ErrorKind::Contract, "seed point arrays disagree");
  std::ostringstream h;
  h << "ply\nformat binary_little_endian 1.0\ncomment splatseg seed points\nelement vertex " << points.positions.size()
    << "\nproperty double x\nproperty double y\nproperty double z\n"
       "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  std::string out = h.str();
  for (std::size_t i = 0; i < points.positions.size(); ++i) {
    for (int k = 0; k < 3; ++k) put(out, points.positions[i][k]);
    for (int k = 0; k < 3; ++k) out.push_back(static_cast<char>(std::lround(std::clamp(points.colors[i][k], 0.0, 1.0) * 255.0)));
  }
  write_file(path, out);
}

SeedPoints read_seed_points(const std::filesystem::path &path) {
  const std::string bytes = read_file(path);
  const PlyFile file = parse_header(bytes);
  const VertexTable t(bytes, file);
  const Property *pos[3] = {&t.need("x"), &t.need("y"), &t.need("z")};
  const Property *col[3] = {t.find("red"), t.find("green"), t.find("blue")};
  SeedPoints s;
  for (std::size_t i = 0; i < t.count(); ++i) {
    s.positions.emplace_back(t.get(*pos[0], i), t.get(*pos[1], i), t.get(*pos[2], i));
    Vec3 c = Vec3::Constant(0.5);
    for (int k = 0; k < 3; ++k) {
      if (col[k] == nullptr) continue;
      const double v = t.get(*col[k], i);
      c[k] = col[k]->type == PlyType::UInt8 ? v / 255.0 : v;
    }
    s.colors.push_back(c);
  }
  return s;
}

} // namespace splatseg
