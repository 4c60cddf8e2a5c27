#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "atlasforge/metrics.hpp"
#include "reference/reference.hpp"

using namespace atlasforge;

namespace {

bool close(double a, double b, double rel, double abs = 1e-12) {
  return std::abs(a - b) <= abs + rel * std::max({1.0, std::abs(a), std::abs(b)});
}

PointCloud3 random_cloud(unsigned seed, std::size_t n, double spread = 1.0) {
  Rng rng(seed);
  PointCloud3 cloud(n);
  for (Vec3& p : cloud) {
    p = {uniform_open(rng, -spread, spread), uniform_open(rng, -spread, spread),
         uniform_open(rng, -spread, spread)};
  }
  return cloud;
}

// The flat half-plane fixture from the extraction tests: charts embed (u,v)
// as (u,v,0), the field is sigmoid(50x), occupancy is x > 0.
MinimalAtlas half_plane_atlas() {
  AtlasConfig cfg;
  cfg.charts = 1;
  cfg.hidden_width = 8;
  Rng rng(1);
  MinimalAtlas atlas = make_atlas(cfg, rng);
  Matrix embed(3, 2);
  embed.at(0, 0) = 1.0;
  embed.at(1, 1) = 1.0;
  const int enc = cfg.posenc.encoded_dim(3);
  Matrix probe(1, enc);
  probe.at(0, 0) = 50.0;
  MlpParams phi;
  phi.input_dim = 2;
  phi.layers = {layer_from_weights(embed, {0.0, 0.0, 0.0}, Activation::Linear)};
  MlpParams field;
  field.input_dim = enc;
  field.layers = {layer_from_weights(probe, {0.0}, Activation::Sigmoid)};
  atlas.charts[0].phi = phi;
  atlas.charts[0].field = field;
  return atlas;
}

}  // namespace

TEST_CASE("chamfer distance on a hand case") {
  const PointCloud3 a = {{0.0, 0.0, 0.0}};
  const PointCloud3 b = {{1.0, 0.0, 0.0}, {3.0, 0.0, 0.0}};
  // a->b: 1. b->a: (1 + 9)/2 = 5.
  CHECK(close(chamfer_bidirectional(a, b), 6.0, 1e-14));
  CHECK(chamfer_bidirectional(a, b) == chamfer_bidirectional(b, a));
  CHECK(chamfer_bidirectional(a, a) == 0.0);
}

TEST_CASE("chamfer distance matches the double-loop oracle") {
  const PointCloud3 a = random_cloud(3, 300);
  const PointCloud3 b = random_cloud(4, 420);
  CHECK(close(chamfer_bidirectional(a, b), testref::chamfer_ref(a, b), 1e-11));

  // Clustered data stresses the grid walk differently than uniform data.
  PointCloud3 c = random_cloud(5, 200, 0.05);
  PointCloud3 far = random_cloud(6, 10, 0.02);
  for (Vec3& p : far) p.x += 3.0;
  c.insert(c.end(), far.begin(), far.end());
  CHECK(close(chamfer_bidirectional(a, c), testref::chamfer_ref(a, c), 1e-11));

  CHECK_THROWS_AS(chamfer_bidirectional({}, b), Error);
  CHECK_THROWS_AS(chamfer_bidirectional(a, {}), Error);
}

TEST_CASE("f-score percentages on a hand case") {
  const PointCloud3 predicted = {{0.0, 0.0, 0.0}, {5.0, 0.0, 0.0}};
  const PointCloud3 target = {{0.0, 0.0, 0.0}};
  const FScore s = fscore(predicted, target, 0.01);
  CHECK(s.precision == 50.0);
  CHECK(s.recall == 100.0);
  CHECK(close(s.f, 200.0 / 3.0, 1e-14));
}

TEST_CASE("a distance exactly at the threshold is a hit") {
  const PointCloud3 predicted = {{0.0, 0.0, 0.0}};
  const PointCloud3 on = {{0.01, 0.0, 0.0}};
  const FScore hit = fscore(predicted, on, 0.01);
  CHECK(hit.precision == 100.0);
  CHECK(hit.f == 100.0);

  const PointCloud3 off = {{0.010000001, 0.0, 0.0}};
  const FScore miss = fscore(predicted, off, 0.01);
  CHECK(miss.precision == 0.0);
  CHECK(miss.recall == 0.0);
  CHECK(miss.f == 0.0);  // all-miss is 0, not NaN
}

TEST_CASE("f-score matches the double-loop oracle") {
  const PointCloud3 a = random_cloud(7, 350, 0.2);
  const PointCloud3 b = random_cloud(8, 280, 0.2);
  for (const double threshold : {0.01, 0.05, 0.2}) {
    const FScore s = fscore(a, b, threshold);
    const testref::FScoreRef r = testref::fscore_ref(a, b, threshold);
    CHECK(s.precision == r.precision);
    CHECK(s.recall == r.recall);
    CHECK(close(s.f, r.f, 1e-13));
  }
  CHECK_THROWS_AS(fscore(a, b, 0.0), Error);
  CHECK_THROWS_AS(fscore(a, b, -1.0), Error);
}

TEST_CASE("distortion metrics vanish for isometric Jacobians") {
  const std::vector<Jac32> jacs(11, Jac32{1.0, 0.0, 0.0, 1.0, 0.0, 0.0});
  const DistortionMetrics m = distortion_metrics(jacs, 1e-4);
  CHECK(close(m.metric, 0.0, 0.0, 1e-12));
  CHECK(close(m.conformal, 0.0, 0.0, 1e-12));
  CHECK(close(m.area, 0.0, 0.0, 1e-12));
}

TEST_CASE("distortion metrics of hand Jacobians") {
  const double e = 1e-4;

  // One stretched sample, ghat = diag(4+e, 0.25+e): the trace/determinant
  // forms evaluate in closed form, and a lone sample is always area fair.
  {
    const std::vector<Jac32> jacs = {{2.0, 0.0, 0.0, 0.5, 0.0, 0.0}};
    const double tr = 4.25 + 2.0 * e;
    const double det = (4.0 + e) * (0.25 + e);
    const DistortionMetrics m = distortion_metrics(jacs, e);
    CHECK(close(m.metric, 2.0 * tr / std::sqrt(det) - 4.0, 1e-12));
    CHECK(close(m.conformal, tr / std::sqrt(det) - 2.0, 1e-12));
    CHECK(close(m.area, 0.0, 0.0, 1e-12));
  }

  // Two conformal samples at different scales: metric and area pick up the
  // scale spread, conformal stays at zero. Without the conditioner the area
  // value is 2*sqrt(2.5 * 0.625) - 2 = 0.5 exactly.
  {
    const std::vector<Jac32> jacs = {{2.0, 0.0, 0.0, 2.0, 0.0, 0.0},
                                     {1.0, 0.0, 0.0, 1.0, 0.0, 0.0}};
    const DistortionMetrics m = distortion_metrics(jacs, e);
    CHECK(close(m.conformal, 0.0, 0.0, 1e-10));
    CHECK(close(m.area, 0.5, 2e-4));
    // mean trace (2+8)/2 = 5, mean inverse trace (2 + 0.5)/2 = 1.25.
    CHECK(close(m.metric, 2.0 * std::sqrt(5.0 * 1.25) - 4.0, 2e-4));
  }

  CHECK_THROWS_AS(distortion_metrics({}, 1e-4), Error);
  CHECK_THROWS_AS(distortion_metrics({{1, 0, 0, 1, 0, 0}}, 0.0), Error);
}

TEST_CASE("evaluating an atlas against its own extraction is exact") {
  MinimalAtlas atlas = half_plane_atlas();
  InferenceConfig cfg;
  Rng cal(11);
  estimate_label_frequency(atlas, cfg, cal);

  const std::size_t n = 2000;
  Rng draw(42);
  const ExtractedCloud ec = extract_point_cloud(atlas, n, cfg, draw);

  // The same seed replays the same extraction inside evaluate, so the
  // point-cloud half of the report is a perfect match.
  Rng replay(42);
  const EvalReport report = evaluate(atlas, ec.points, n, cfg, replay);
  CHECK(report.eval_points == n);
  CHECK(report.pc_cd == 0.0);
  CHECK(report.pc_f.precision == 100.0);
  CHECK(report.pc_f.recall == 100.0);
  CHECK(report.pc_f.f == 100.0);
  CHECK(report.occupancy_rate == ec.occupancy_rate);

  // The mesh is a different sampling of the same flat region: close, not equal.
  CHECK(report.mesh_cd > 0.0);
  CHECK(report.mesh_cd < 0.01);
  CHECK(report.mesh_f.f > 0.0);

  // The chart embedding is an isometry, so distortion sits at the floor.
  CHECK(std::abs(report.distortion.metric) < 1e-3);
  CHECK(std::abs(report.distortion.conformal) < 1e-3);
  CHECK(std::abs(report.distortion.area) < 1e-3);
}

TEST_CASE("evaluate validates its inputs") {
  MinimalAtlas atlas = half_plane_atlas();
  InferenceConfig cfg;
  Rng rng(3);
  const PointCloud3 target = random_cloud(5, 50, 0.5);
  try {
    evaluate(atlas, target, 100, cfg, rng);  // uncalibrated
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::StateError);
  }
  estimate_label_frequency(atlas, cfg, rng);
  CHECK_THROWS_AS(evaluate(atlas, {}, 100, cfg, rng), Error);
  CHECK_THROWS_AS(evaluate(atlas, target, 0, cfg, rng), Error);
}

TEST_CASE("report serialization carries every number in a stable layout") {
  EvalReport report;
  report.eval_points = 1234;
  report.pc_cd = 1.5;
  report.pc_f = {10.0, 20.0, 13.333};
  report.mesh_cd = 2.5;
  report.mesh_f = {30.0, 40.0, 34.285};
  report.distortion = {0.5, 0.25, 0.125};
  report.occupancy_rate = 0.625;

  const std::string text = eval_report_json(report);
  const nlohmann::json j = nlohmann::json::parse(text);
  CHECK(j["eval_points"] == 1234);
  CHECK(j["pc"]["cd"] == 1.5);
  CHECK(j["pc"]["precision"] == 10.0);
  CHECK(j["pc"]["recall"] == 20.0);
  CHECK(j["pc"]["fscore"] == 13.333);
  CHECK(j["mesh"]["cd"] == 2.5);
  CHECK(j["mesh"]["fscore"] == 34.285);
  CHECK(j["distortion"]["metric"] == 0.5);
  CHECK(j["distortion"]["conformal"] == 0.25);
  CHECK(j["distortion"]["area"] == 0.125);
  CHECK(j["occupancy_rate"] == 0.625);
  CHECK(j["meta"]["fscore_threshold"] == 0.01);
  CHECK(j["meta"]["metric_eps"] == 1e-4);

  // Insertion order is part of the format.
  CHECK(text.find("\"eval_points\"") < text.find("\"pc\""));
  CHECK(text.find("\"pc\"") < text.find("\"mesh\""));
  CHECK(text.find("\"mesh\"") < text.find("\"distortion\""));
  CHECK(text.find("\"distortion\"") < text.find("\"occupancy_rate\""));
  CHECK(text.find("\"occupancy_rate\"") < text.find("\"meta\""));
  CHECK(text.back() == '\n');
}
