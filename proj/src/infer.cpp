#include "atlasforge/infer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

namespace atlasforge {

namespace {

constexpr double kDeadField = 1e-6;

void check_probe_config(const InferenceConfig& cfg) {
  require(cfg.probe_samples >= 1, ErrorKind::InvalidInput, "need at least one probe sample");
  require(cfg.eta > 0.0 && cfg.eta <= 1.0, ErrorKind::InvalidInput,
          "eta must be in (0, 1]");
}

// One pooled batch of `total` parametric probes, split evenly across charts
// (remainder to the first charts), appended to the output arrays.
void draw_batch(const MinimalAtlas& atlas, std::size_t total, Rng& rng, std::vector<Vec2>& uv,
                std::vector<int>& chart, PointCloud3& points, std::vector<std::uint8_t>& occ) {
  const std::size_t K = atlas.charts.size();
  const std::size_t base = total / K;
  const std::size_t rem = total % K;
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t nk = base + (k < rem ? 1 : 0);
    if (nk == 0) continue;
    const std::vector<Vec2> batch_uv = sample_open_square(nk, rng);
    const PointCloud3 batch_pts = phi_eval(atlas, static_cast<int>(k), batch_uv);
    const std::vector<std::uint8_t> batch_occ = occupied_points(atlas, static_cast<int>(k), batch_pts);
    for (std::size_t s = 0; s < nk; ++s) {
      uv.push_back(batch_uv[s]);
      chart.push_back(static_cast<int>(k));
      points.push_back(batch_pts[s]);
      occ.push_back(batch_occ[s]);
    }
  }
}

}  // namespace

double label_frequency_from_values(std::vector<double> values, double eta) {
  require(!values.empty(), ErrorKind::InvalidInput, "no probe values");
  require(eta > 0.0 && eta <= 1.0, ErrorKind::InvalidInput, "eta must be in (0, 1]");
  bool live = false;
  for (double v : values) {
    if (v > kDeadField) {
      live = true;
      break;
    }
  }
  require(live, ErrorKind::DegenerateField, "field is numerically zero at every probe");

  const std::size_t total = values.size();
  std::size_t m = static_cast<std::size_t>(std::ceil(eta * static_cast<double>(total)));
  m = std::min(std::max<std::size_t>(m, 1), total);
  std::sort(values.begin(), values.end(), std::greater<>());
  const double median = (m % 2 == 1)
                            ? values[(m - 1) / 2]
                            : 0.5 * (values[m / 2 - 1] + values[m / 2]);
  return std::clamp(median, kDeadField, 1.0);
}

double estimate_label_frequency(MinimalAtlas& atlas, const InferenceConfig& cfg, Rng& rng) {
  check_probe_config(cfg);
  const std::size_t K = atlas.charts.size();
  require(K > 0, ErrorKind::InvalidInput, "atlas has no charts");
  const std::size_t total = static_cast<std::size_t>(cfg.probe_samples);
  const std::size_t base = total / K;
  const std::size_t rem = total % K;
  std::vector<double> pooled;
  pooled.reserve(total);
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t nk = base + (k < rem ? 1 : 0);
    if (nk == 0) continue;
    const std::vector<Vec2> uv = sample_open_square(nk, rng);
    const PointCloud3 pts = phi_eval(atlas, static_cast<int>(k), uv);
    const std::vector<double> probs = field_eval(atlas, static_cast<int>(k), pts);
    pooled.insert(pooled.end(), probs.begin(), probs.end());
  }
  const double c = label_frequency_from_values(std::move(pooled), cfg.eta);
  atlas.label_frequency = c;
  atlas.has_label_frequency = true;
  return c;
}

double estimate_occupancy_rate(const MinimalAtlas& atlas, const InferenceConfig& cfg, Rng& rng) {
  check_probe_config(cfg);
  require(atlas.has_label_frequency, ErrorKind::StateError,
          "label frequency has not been estimated");
  std::vector<Vec2> uv;
  std::vector<int> chart;
  PointCloud3 points;
  std::vector<std::uint8_t> occ;
  draw_batch(atlas, static_cast<std::size_t>(cfg.probe_samples), rng, uv, chart, points, occ);
  require(!occ.empty(), ErrorKind::InvalidInput, "no probe samples were drawn");
  std::size_t kept = 0;
  for (std::uint8_t f : occ) kept += f;
  return static_cast<double>(kept) / static_cast<double>(occ.size());
}

ExtractedCloud extract_point_cloud(const MinimalAtlas& atlas, std::size_t n,
                                   const InferenceConfig& cfg, Rng& rng) {
  require(n >= 1, ErrorKind::InvalidInput, "need at least one output point");
  require(cfg.max_refill_rounds >= 0, ErrorKind::InvalidInput, "negative refill budget");
  require(atlas.has_label_frequency, ErrorKind::StateError,
          "label frequency has not been estimated");
  require(!atlas.charts.empty(), ErrorKind::InvalidInput, "atlas has no charts");

  PointCloud3 kept_pts;
  std::vector<int> kept_chart;
  std::vector<Vec2> kept_uv;
  std::size_t drawn = 0;

  const auto absorb = [&](std::size_t batch) {
    std::vector<Vec2> uv;
    std::vector<int> chart;
    PointCloud3 points;
    std::vector<std::uint8_t> occ;
    draw_batch(atlas, batch, rng, uv, chart, points, occ);
    drawn += occ.size();
    for (std::size_t s = 0; s < occ.size(); ++s) {
      if (!occ[s]) continue;
      kept_pts.push_back(points[s]);
      kept_chart.push_back(chart[s]);
      kept_uv.push_back(uv[s]);
    }
  };

  // Initial batch, sized so a mostly occupied field finishes in one refill.
  const std::size_t first = (2 * n + 2) / 3;
  absorb(first);
  require(!kept_pts.empty(), ErrorKind::EmptyDomain, "field rejected every probe sample");

  int rounds = 0;
  while (kept_pts.size() < n && rounds < cfg.max_refill_rounds) {
    const double rate = static_cast<double>(kept_pts.size()) / static_cast<double>(drawn);
    const double want =
        std::ceil(static_cast<double>(n - kept_pts.size()) / std::max(rate, 1e-6));
    // Hard cap per round so a nearly dead field cannot demand absurd batches.
    const std::size_t batch =
        std::min(static_cast<std::size_t>(want), 32 * n);
    absorb(std::max<std::size_t>(batch, 1));
    ++rounds;
  }
  require(kept_pts.size() >= n, ErrorKind::EmptyDomain,
          "occupied region too sparse to draw the requested points");

  ExtractedCloud out;
  out.occupancy_rate = static_cast<double>(kept_pts.size()) / static_cast<double>(drawn);
  out.refill_rounds = rounds;

  if (kept_pts.size() == n) {
    out.points = std::move(kept_pts);
    out.chart = std::move(kept_chart);
    out.uv = std::move(kept_uv);
    return out;
  }

  // Uniform subsample without replacement, order preserving.
  std::vector<std::size_t> idx(kept_pts.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  out.points.reserve(n);
  out.chart.reserve(n);
  out.uv.reserve(n);
  for (std::size_t i : idx) {
    out.points.push_back(kept_pts[i]);
    out.chart.push_back(kept_chart[i]);
    out.uv.push_back(kept_uv[i]);
  }
  return out;
}

TriangleMesh extract_mesh(const MinimalAtlas& atlas, const InferenceConfig& cfg) {
  require(atlas.has_label_frequency, ErrorKind::StateError,
          "label frequency has not been estimated");
  const int G = cfg.grid_res;
  require(G >= 2, ErrorKind::InvalidInput, "mesh lattice needs at least two samples per axis");

  std::vector<double> lattice(static_cast<std::size_t>(G));
  for (int i = 0; i < G; ++i) {
    lattice[static_cast<std::size_t>(i)] =
        -1.0 + static_cast<double>(2 * i + 1) / static_cast<double>(G);
  }

  TriangleMesh mesh;
  for (std::size_t k = 0; k < atlas.charts.size(); ++k) {
    std::vector<Vec2> uv;
    uv.reserve(static_cast<std::size_t>(G) * static_cast<std::size_t>(G));
    for (int j = 0; j < G; ++j) {
      for (int i = 0; i < G; ++i) {
        uv.push_back({lattice[static_cast<std::size_t>(i)], lattice[static_cast<std::size_t>(j)]});
      }
    }
    const PointCloud3 pts = phi_eval(atlas, static_cast<int>(k), uv);
    const std::vector<std::uint8_t> occ = occupied_points(atlas, static_cast<int>(k), pts);

    std::vector<int> vid(uv.size(), -1);
    for (std::size_t p = 0; p < uv.size(); ++p) {
      if (!occ[p]) continue;
      vid[p] = static_cast<int>(mesh.vertices.size());
      mesh.vertices.push_back(pts[p]);
      mesh.vertex_chart.push_back(static_cast<int>(k));
    }
    for (int j = 0; j + 1 < G; ++j) {
      for (int i = 0; i + 1 < G; ++i) {
        const std::size_t p00 = static_cast<std::size_t>(j) * G + i;
        const std::size_t p10 = p00 + 1;
        const std::size_t p01 = p00 + static_cast<std::size_t>(G);
        const std::size_t p11 = p01 + 1;
        if (occ[p00] && occ[p10] && occ[p11]) {
          mesh.triangles.push_back({vid[p00], vid[p10], vid[p11]});
        }
        if (occ[p00] && occ[p11] && occ[p01]) {
          mesh.triangles.push_back({vid[p00], vid[p11], vid[p01]});
        }
      }
    }
  }
  require(!mesh.triangles.empty(), ErrorKind::EmptyDomain,
          "no lattice cell is fully occupied");
  return mesh;
}

}  // namespace atlasforge
