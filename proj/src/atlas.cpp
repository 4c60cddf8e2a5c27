#include "atlasforge/atlas.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace atlasforge {

MinimalAtlas make_atlas(const AtlasConfig& config, Rng& rng) {
  require(config.charts > 0, ErrorKind::InvalidInput, "make_atlas: need at least one chart");
  require(config.tau > 0.0 && config.tau < 1.0, ErrorKind::InvalidInput,
          "make_atlas: tau must lie in (0,1)");
  MinimalAtlas atlas;
  atlas.config = config;
  atlas.charts.resize(config.charts);
  const int enc = config.posenc.encoded_dim(3);
  for (Chart& chart : atlas.charts) {
    chart.phi = make_chart_mlp(config.hidden_width, rng);
    chart.field = make_field_mlp(config.hidden_width, enc, rng);
  }
  return atlas;
}

Matrix uv_matrix(const std::vector<Vec2>& uv) {
  Matrix m(uv.size(), 2);
  for (std::size_t i = 0; i < uv.size(); ++i) {
    m.at(i, 0) = uv[i].x;
    m.at(i, 1) = uv[i].y;
  }
  return m;
}

PointCloud3 matrix_to_cloud(const Matrix& m) {
  require(m.cols == 3, ErrorKind::InvalidInput, "matrix_to_cloud: expected 3 columns");
  PointCloud3 cloud(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) cloud[i] = {m.at(i, 0), m.at(i, 1), m.at(i, 2)};
  return cloud;
}

namespace {

void check_chart(const MinimalAtlas& atlas, int chart) {
  require(chart >= 0 && chart < static_cast<int>(atlas.charts.size()), ErrorKind::InvalidInput,
          "chart index out of range");
}

void check_open_square(const std::vector<Vec2>& uv) {
  for (const Vec2& p : uv) {
    require(p.x > -1.0 && p.x < 1.0 && p.y > -1.0 && p.y < 1.0, ErrorKind::InvalidInput,
            "parametric sample outside the open square");
  }
}

constexpr double kProbClamp = 1e-12;

}  // namespace

PointCloud3 phi_eval(const MinimalAtlas& atlas, int chart, const std::vector<Vec2>& uv) {
  check_chart(atlas, chart);
  check_open_square(uv);
  return matrix_to_cloud(mlp_forward(atlas.charts[chart].phi, uv_matrix(uv)));
}

std::vector<double> field_eval(const MinimalAtlas& atlas, int chart, const PointCloud3& points) {
  check_chart(atlas, chart);
  const Matrix enc = positional_encode(atlas.config.posenc, points);
  const Matrix out = mlp_forward(atlas.charts[chart].field, enc);
  std::vector<double> probs(out.rows);
  for (std::size_t i = 0; i < out.rows; ++i) {
    // The sigmoid saturates to exactly 0 or 1 in floating point; the field is
    // a probability and stays strictly inside (0,1).
    probs[i] = std::clamp(out.at(i, 0), kProbClamp, 1.0 - kProbClamp);
  }
  return probs;
}

std::vector<std::uint8_t> occupied_points(const MinimalAtlas& atlas, int chart,
                                          const PointCloud3& points) {
  require(atlas.has_label_frequency, ErrorKind::StateError,
          "occupied: label frequency has not been estimated");
  const std::vector<double> probs = field_eval(atlas, chart, points);
  const double bar = atlas.config.tau * atlas.label_frequency;
  std::vector<std::uint8_t> flags(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) flags[i] = probs[i] > bar ? 1 : 0;
  return flags;
}

std::vector<std::uint8_t> occupied(const MinimalAtlas& atlas, int chart,
                                   const std::vector<Vec2>& uv) {
  return occupied_points(atlas, chart, phi_eval(atlas, chart, uv));
}

namespace {

constexpr char kMagic[4] = {'M', 'N', 'A', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_u8(std::ofstream& f, std::uint8_t v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_f64(std::ofstream& f, double v) { f.write(reinterpret_cast<const char*>(&v), sizeof v); }
void put_f64s(std::ofstream& f, const std::vector<double>& v) {
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::uint32_t get_u32(std::ifstream& f) {
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::uint8_t get_u8(std::ifstream& f) {
  std::uint8_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
double get_f64(std::ifstream& f) {
  double v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
void get_f64s(std::ifstream& f, std::vector<double>& v) {
  f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void put_net(std::ofstream& f, const MlpParams& net) {
  put_u32(f, static_cast<std::uint32_t>(net.input_dim));
  put_u32(f, static_cast<std::uint32_t>(net.layers.size()));
  for (const DenseLayer& l : net.layers) {
    put_u32(f, static_cast<std::uint32_t>(l.in_dim));
    put_u32(f, static_cast<std::uint32_t>(l.out_dim));
    put_u8(f, static_cast<std::uint8_t>(l.act));
    put_f64(f, l.beta);
    put_u8(f, l.concat_input ? 1 : 0);
    put_f64s(f, l.V);
    put_f64s(f, l.g);
    put_f64s(f, l.b);
  }
}

MlpParams get_net(std::ifstream& f, const std::string& path) {
  MlpParams net;
  net.input_dim = static_cast<int>(get_u32(f));
  const std::uint32_t n_layers = get_u32(f);
  require(f.good() && net.input_dim > 0 && n_layers > 0 && n_layers < 64, ErrorKind::Io,
          path + ": corrupt network header");
  net.layers.resize(n_layers);
  for (DenseLayer& l : net.layers) {
    l.in_dim = static_cast<int>(get_u32(f));
    l.out_dim = static_cast<int>(get_u32(f));
    const std::uint8_t act = get_u8(f);
    l.beta = get_f64(f);
    l.concat_input = get_u8(f) != 0;
    require(f.good() && l.in_dim > 0 && l.out_dim > 0 && act <= 3, ErrorKind::Io,
            path + ": corrupt layer header");
    l.act = static_cast<Activation>(act);
    l.V.resize(static_cast<std::size_t>(l.in_dim) * l.out_dim);
    l.g.resize(l.out_dim);
    l.b.resize(l.out_dim);
    get_f64s(f, l.V);
    get_f64s(f, l.g);
    get_f64s(f, l.b);
    require(f.good(), ErrorKind::Io, path + ": truncated tensor data");
  }
  return net;
}

}  // namespace

void save_atlas(const std::string& path, const MinimalAtlas& atlas) {
  std::ofstream f(path, std::ios::out | std::ios::binary);
  require(f.good(), ErrorKind::Io, "cannot open for writing: " + path);
  f.write(kMagic, sizeof kMagic);
  put_u32(f, kVersion);
  put_u32(f, static_cast<std::uint32_t>(atlas.charts.size()));
  put_f64(f, atlas.config.tau);
  put_u8(f, atlas.has_label_frequency ? 1 : 0);
  put_f64(f, atlas.label_frequency);
  put_u32(f, static_cast<std::uint32_t>(atlas.config.hidden_width));
  put_u32(f, static_cast<std::uint32_t>(atlas.config.posenc.octaves));
  put_u8(f, atlas.config.posenc.include_raw ? 1 : 0);
  put_f64(f, atlas.frame.center.x);
  put_f64(f, atlas.frame.center.y);
  put_f64(f, atlas.frame.center.z);
  put_f64(f, atlas.frame.scale);
  for (const Chart& chart : atlas.charts) {
    put_net(f, chart.phi);
    put_net(f, chart.field);
  }
  require(f.good(), ErrorKind::Io, "write failed: " + path);
}

MinimalAtlas load_atlas(const std::string& path) {
  std::ifstream f(path, std::ios::in | std::ios::binary);
  require(f.good(), ErrorKind::Io, "cannot open for reading: " + path);
  char magic[4] = {};
  f.read(magic, sizeof magic);
  require(f.good() && std::memcmp(magic, kMagic, 4) == 0, ErrorKind::Io,
          path + ": not an atlas checkpoint");
  const std::uint32_t version = get_u32(f);
  require(version == kVersion, ErrorKind::Io,
          path + ": unsupported checkpoint version " + std::to_string(version));

  MinimalAtlas atlas;
  const std::uint32_t k = get_u32(f);
  atlas.config.tau = get_f64(f);
  atlas.has_label_frequency = get_u8(f) != 0;
  atlas.label_frequency = get_f64(f);
  atlas.config.hidden_width = static_cast<int>(get_u32(f));
  atlas.config.posenc.octaves = static_cast<int>(get_u32(f));
  atlas.config.posenc.include_raw = get_u8(f) != 0;
  atlas.frame.center.x = get_f64(f);
  atlas.frame.center.y = get_f64(f);
  atlas.frame.center.z = get_f64(f);
  atlas.frame.scale = get_f64(f);
  require(f.good() && k > 0 && k < 4096, ErrorKind::Io, path + ": corrupt checkpoint header");
  atlas.config.charts = static_cast<int>(k);
  atlas.charts.resize(k);
  for (Chart& chart : atlas.charts) {
    chart.phi = get_net(f, path);
    chart.field = get_net(f, path);
  }
  return atlas;
}

}  // namespace atlasforge
