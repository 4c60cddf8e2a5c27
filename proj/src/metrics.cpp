#include "atlasforge/metrics.hpp"

#include <cmath>
#include <vector>

#include "json.hpp"

#include "atlasforge/neighbor.hpp"
#include "atlasforge/nn.hpp"
#include "atlasforge/parallel.hpp"

namespace atlasforge {

namespace {

// Directed mean squared nearest-neighbor distance from each point of `from`
// to the set behind `index`.
double directed_mean_sq(const PointCloud3& from, const UniformGridIndex& index) {
  const std::vector<NearestHit> hits = nearest_batch(index, from);
  std::vector<double> sq(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) sq[i] = hits[i].sq_dist;
  return ordered_sum(sq.data(), sq.size()) / static_cast<double>(sq.size());
}

double hit_percent(const PointCloud3& from, const UniformGridIndex& index, double threshold) {
  const std::vector<NearestHit> hits = nearest_batch(index, from);
  const double limit = threshold * threshold;
  std::size_t good = 0;
  for (const NearestHit& h : hits) good += (h.sq_dist <= limit) ? 1 : 0;
  return 100.0 * static_cast<double>(good) / static_cast<double>(hits.size());
}

}  // namespace

double chamfer_bidirectional(const PointCloud3& a, const PointCloud3& b) {
  require(!a.empty() && !b.empty(), ErrorKind::InvalidInput,
          "chamfer distance needs two non-empty clouds");
  const UniformGridIndex ia = build_grid_index(a);
  const UniformGridIndex ib = build_grid_index(b);
  return directed_mean_sq(a, ib) + directed_mean_sq(b, ia);
}

FScore fscore(const PointCloud3& predicted, const PointCloud3& target, double threshold) {
  require(!predicted.empty() && !target.empty(), ErrorKind::InvalidInput,
          "f-score needs two non-empty clouds");
  require(threshold > 0.0, ErrorKind::InvalidInput, "f-score threshold must be positive");
  const UniformGridIndex ip = build_grid_index(predicted);
  const UniformGridIndex it = build_grid_index(target);
  FScore out;
  out.precision = hit_percent(predicted, it, threshold);
  out.recall = hit_percent(target, ip, threshold);
  const double denom = out.precision + out.recall;
  out.f = denom > 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
  return out;
}

DistortionMetrics distortion_metrics(const std::vector<Jac32>& jacobians, double eps) {
  require(!jacobians.empty(), ErrorKind::InvalidInput, "no jacobians to measure");
  require(eps > 0.0, ErrorKind::InvalidInput, "metric regularizer must be positive");
  const std::size_t n = jacobians.size();
  // metric_tensor throws on a degenerate tensor, so it runs serially here; the
  // per-sample arithmetic is light enough that this loop is not a hot spot.
  std::vector<double> tr(n), tri(n), ratio(n), rootdet(n), inv_rootdet(n);
  for (std::size_t s = 0; s < n; ++s) {
    const MetricTensor2 g = metric_tensor(jacobians[s], eps);
    const double det = g.det();
    const double root = std::sqrt(det);
    tr[s] = g.trace();
    tri[s] = g.trace_inv();
    ratio[s] = g.trace() / root;
    rootdet[s] = root;
    inv_rootdet[s] = 1.0 / root;
  }
  const double nd = static_cast<double>(n);
  const double mean_tr = ordered_sum(tr.data(), n) / nd;
  const double mean_tri = ordered_sum(tri.data(), n) / nd;
  const double mean_ratio = ordered_sum(ratio.data(), n) / nd;
  const double mean_root = ordered_sum(rootdet.data(), n) / nd;
  const double mean_inv_root = ordered_sum(inv_rootdet.data(), n) / nd;
  DistortionMetrics out;
  out.metric = 2.0 * std::sqrt(mean_tr * mean_tri) - 4.0;
  out.conformal = mean_ratio - 2.0;
  out.area = 2.0 * std::sqrt(mean_root * mean_inv_root) - 2.0;
  return out;
}

EvalReport evaluate(const MinimalAtlas& atlas, const PointCloud3& target,
                    std::size_t eval_points, const InferenceConfig& cfg, Rng& rng) {
  require(!target.empty(), ErrorKind::InvalidInput, "evaluation target is empty");
  require(eval_points >= 1, ErrorKind::InvalidInput, "need at least one evaluation point");
  require(atlas.has_label_frequency, ErrorKind::StateError,
          "label frequency has not been estimated");

  EvalReport report;
  report.eval_points = eval_points;

  const ExtractedCloud ec = extract_point_cloud(atlas, eval_points, cfg, rng);
  report.occupancy_rate = ec.occupancy_rate;
  report.pc_cd = chamfer_bidirectional(ec.points, target);
  report.pc_f = fscore(ec.points, target);

  const TriangleMesh mesh = extract_mesh(atlas, cfg);
  const PointCloud3 mesh_pts = sample_mesh_uniform(mesh, eval_points, rng);
  report.mesh_cd = chamfer_bidirectional(mesh_pts, target);
  report.mesh_f = fscore(mesh_pts, target);

  // Jacobians at the extraction samples, grouped by chart in chart order.
  std::vector<Jac32> jacs;
  jacs.reserve(ec.uv.size());
  for (std::size_t k = 0; k < atlas.charts.size(); ++k) {
    std::vector<Vec2> uv;
    for (std::size_t s = 0; s < ec.uv.size(); ++s) {
      if (ec.chart[s] == static_cast<int>(k)) uv.push_back(ec.uv[s]);
    }
    if (uv.empty()) continue;
    const std::vector<double> jk = mlp_input_jacobians(atlas.charts[k].phi, uv_matrix(uv));
    for (std::size_t s = 0; s < uv.size(); ++s) {
      Jac32 j;
      for (int c = 0; c < 6; ++c) j[static_cast<std::size_t>(c)] = jk[6 * s + c];
      jacs.push_back(j);
    }
  }
  report.distortion = distortion_metrics(jacs, 1e-4);
  return report;
}

std::string eval_report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["eval_points"] = report.eval_points;
  j["pc"] = {{"cd", report.pc_cd},
             {"precision", report.pc_f.precision},
             {"recall", report.pc_f.recall},
             {"fscore", report.pc_f.f}};
  j["mesh"] = {{"cd", report.mesh_cd},
               {"precision", report.mesh_f.precision},
               {"recall", report.mesh_f.recall},
               {"fscore", report.mesh_f.f}};
  j["distortion"] = {{"metric", report.distortion.metric},
                     {"conformal", report.distortion.conformal},
                     {"area", report.distortion.area}};
  j["occupancy_rate"] = report.occupancy_rate;
  j["meta"] = {{"cd", "sum of directed mean squared nearest-neighbor distances"},
               {"fscore_threshold", 0.01},
               {"metric_eps", 1e-4},
               {"frame", "unit ball of the fitted target"}};
  return j.dump(2) + "\n";
}

}  // namespace atlasforge
