#include <cmath>
#include <vector>

#include "doctest.h"

#include "atlasforge/infer.hpp"
#include "reference/reference.hpp"

using namespace atlasforge;

namespace {

// Charts embed the parametric square flat into the z = 0 plane and the field
// is a single sigmoid over the raw x coordinate of the mapped point, so
// occupancy geometry is known in closed form.
MinimalAtlas planar_atlas(double field_x_weight, double field_bias, int charts = 1) {
  AtlasConfig cfg;
  cfg.charts = charts;
  cfg.hidden_width = 8;
  Rng rng(1);
  MinimalAtlas atlas = make_atlas(cfg, rng);

  Matrix embed(3, 2);
  embed.at(0, 0) = 1.0;
  embed.at(1, 1) = 1.0;
  const int enc = cfg.posenc.encoded_dim(3);
  Matrix probe(1, enc);
  probe.at(0, 0) = field_x_weight;  // raw components lead the encoding

  for (Chart& c : atlas.charts) {
    MlpParams phi;
    phi.input_dim = 2;
    phi.layers = {layer_from_weights(embed, {0.0, 0.0, 0.0}, Activation::Linear)};
    MlpParams field;
    field.input_dim = enc;
    field.layers = {layer_from_weights(probe, {field_bias}, Activation::Sigmoid)};
    c.phi = phi;
    c.field = field;
  }
  return atlas;
}

bool clouds_equal(const PointCloud3& a, const PointCloud3& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].x != b[i].x || a[i].y != b[i].y || a[i].z != b[i].z) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("label frequency is the median of the top responses") {
  // 40 of 100 values at 0.9: eta=0.4 keeps exactly those.
  std::vector<double> values(60, 0.1);
  values.insert(values.end(), 40, 0.9);
  CHECK(label_frequency_from_values(values, 0.4) == 0.9);

  // Even count averages the middle pair.
  CHECK(label_frequency_from_values({0.2, 0.4, 0.6, 0.8}, 1.0) == 0.5);
  CHECK(label_frequency_from_values({0.2, 0.4, 0.6, 0.8}, 0.5) == 0.7);

  // Odd count takes the middle element.
  CHECK(label_frequency_from_values({0.1, 0.2, 0.3, 0.4, 0.5}, 0.6) == 0.4);

  // The kept count is a ceiling: 0.25 of 10 keeps 3.
  CHECK(label_frequency_from_values({1, 1, 1, 0, 0, 0, 0, 0, 0, 0}, 0.25) == 1.0);
}

TEST_CASE("label frequency clamps and rejects dead fields") {
  // Median of the kept half falls below the live floor: clamped up.
  CHECK(label_frequency_from_values({1.5e-6, 1e-9, 1e-9, 1e-9}, 1.0) == 1e-6);
  // Values above one (not probabilities) clamp down.
  CHECK(label_frequency_from_values({2.0, 3.0}, 1.0) == 1.0);

  try {
    label_frequency_from_values({1e-6, 1e-7, 0.0}, 0.4);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateField);
  }

  CHECK_THROWS_AS(label_frequency_from_values({}, 0.4), Error);
  CHECK_THROWS_AS(label_frequency_from_values({0.5}, 0.0), Error);
  CHECK_THROWS_AS(label_frequency_from_values({0.5}, 1.5), Error);
}

TEST_CASE("estimator recovers a planted selection frequency") {
  // Probes inside the support respond near the true frequency, outside near
  // zero; the top-fraction median lands at an upper quantile of the support
  // responses, close to the plant.
  Rng rng(17);
  std::vector<double> values;
  for (int i = 0; i < 5000; ++i) {
    if (uniform_open(rng, 0.0, 1.0) < 0.8)
      values.push_back(0.7 + uniform_open(rng, -0.03, 0.03));
    else
      values.push_back(uniform_open(rng, 0.0, 0.02));
  }
  const double c = label_frequency_from_values(values, 0.4);
  CHECK(c > 0.65);
  CHECK(c < 0.75);
}

TEST_CASE("calibration of a constant field recovers its level") {
  // Zero weights and bias log(4): the sigmoid reads 0.8 at every point.
  MinimalAtlas atlas = planar_atlas(0.0, std::log(4.0), 2);
  InferenceConfig cfg;
  Rng rng(3);
  const double c = estimate_label_frequency(atlas, cfg, rng);
  CHECK(c == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(atlas.has_label_frequency);
  CHECK(atlas.label_frequency == c);

  // Everything clears the bar tau*c = 0.4 < 0.8.
  Rng rng2(4);
  CHECK(estimate_occupancy_rate(atlas, cfg, rng2) == 1.0);
}

TEST_CASE("calibration rejects a numerically dead field") {
  MinimalAtlas atlas = planar_atlas(0.0, -60.0);
  InferenceConfig cfg;
  Rng rng(5);
  try {
    estimate_label_frequency(atlas, cfg, rng);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateField);
  }
}

TEST_CASE("occupancy rate requires calibration and matches the half plane") {
  MinimalAtlas atlas = planar_atlas(50.0, 0.0);
  InferenceConfig cfg;
  Rng rng(7);
  try {
    estimate_occupancy_rate(atlas, cfg, rng);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::StateError);
  }

  estimate_label_frequency(atlas, cfg, rng);
  CHECK(atlas.label_frequency > 0.9);  // top responses saturate
  const double rate = estimate_occupancy_rate(atlas, cfg, rng);
  CHECK(rate > 0.45);
  CHECK(rate < 0.55);
}

TEST_CASE("extraction returns exactly n points from the occupied half plane") {
  MinimalAtlas atlas = planar_atlas(50.0, 0.0);
  InferenceConfig cfg;
  Rng rng(9);
  estimate_label_frequency(atlas, cfg, rng);

  const std::size_t n = 3000;
  const ExtractedCloud ec = extract_point_cloud(atlas, n, cfg, rng);
  REQUIRE(ec.points.size() == n);
  REQUIRE(ec.chart.size() == n);
  REQUIRE(ec.uv.size() == n);
  CHECK(ec.occupancy_rate > 0.42);
  CHECK(ec.occupancy_rate < 0.58);
  // Half the square is rejected, so the initial 2n/3 batch cannot suffice.
  CHECK(ec.refill_rounds >= 1);
  CHECK(ec.refill_rounds <= cfg.max_refill_rounds);

  for (std::size_t i = 0; i < n; i += 97) {
    // The decision boundary sigmoid(50x) > tau*c sits within 1e-3 of x = 0.
    CHECK(ec.points[i].x > -1e-3);
    CHECK(ec.points[i].x == ec.uv[i].x);
    CHECK(ec.chart[i] == 0);
    // Points, uv, and chart stay aligned through subsampling.
    const PointCloud3 remapped = phi_eval(atlas, ec.chart[i], {ec.uv[i]});
    CHECK(remapped[0].x == ec.points[i].x);
    CHECK(remapped[0].y == ec.points[i].y);
    CHECK(remapped[0].z == ec.points[i].z);
  }
}

TEST_CASE("extraction is deterministic in the seed") {
  MinimalAtlas atlas = planar_atlas(50.0, 0.0, 2);
  InferenceConfig cfg;
  Rng cal(11);
  estimate_label_frequency(atlas, cfg, cal);

  Rng a(13), b(13), c(14);
  const ExtractedCloud ea = extract_point_cloud(atlas, 500, cfg, a);
  const ExtractedCloud eb = extract_point_cloud(atlas, 500, cfg, b);
  const ExtractedCloud ecx = extract_point_cloud(atlas, 500, cfg, c);
  CHECK(clouds_equal(ea.points, eb.points));
  CHECK(ea.chart == eb.chart);
  CHECK(ea.occupancy_rate == eb.occupancy_rate);
  CHECK(!clouds_equal(ea.points, ecx.points));
}

TEST_CASE("extraction failure modes") {
  MinimalAtlas atlas = planar_atlas(50.0, 0.0);
  InferenceConfig cfg;
  Rng rng(15);
  // Uncalibrated atlas is a state error.
  CHECK_THROWS_AS(extract_point_cloud(atlas, 100, cfg, rng), Error);

  estimate_label_frequency(atlas, cfg, rng);
  CHECK_THROWS_AS(extract_point_cloud(atlas, 0, cfg, rng), Error);

  // A bar no probability can clear rejects the first batch outright.
  MinimalAtlas blocked = atlas;
  blocked.label_frequency = 3.0;
  try {
    extract_point_cloud(blocked, 100, cfg, rng);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyDomain);
  }
}

TEST_CASE("a sliver of occupancy exhausts the refill budget") {
  // Acceptance is a few permille; the per-round batch cap keeps each refill
  // bounded, so ten rounds cannot reach 2000 points.
  MinimalAtlas atlas = planar_atlas(5000.0, -5000.0 * 0.998);
  InferenceConfig cfg;
  Rng rng(17);
  estimate_label_frequency(atlas, cfg, rng);
  try {
    extract_point_cloud(atlas, 2000, cfg, rng);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyDomain);
  }
}

TEST_CASE("mesh of a fully occupied atlas covers every lattice cell") {
  MinimalAtlas atlas = planar_atlas(0.0, std::log(4.0), 2);
  InferenceConfig cfg;
  cfg.grid_res = 5;
  Rng rng(19);
  estimate_label_frequency(atlas, cfg, rng);
  const TriangleMesh mesh = extract_mesh(atlas, cfg);
  // K*G^2 vertices, K*(G-1)^2*2 triangles, charts never welded.
  CHECK(mesh.vertices.size() == 2 * 25);
  CHECK(mesh.triangles.size() == 2 * 16 * 2);
  REQUIRE(mesh.vertex_chart.size() == 50);
  CHECK(mesh.vertex_chart[0] == 0);
  CHECK(mesh.vertex_chart[49] == 1);
  CHECK(mesh_connected_components(mesh) == 2);

  // Cell centers: the first lattice coordinate is -1 + 1/G.
  CHECK(mesh.vertices[0].x == doctest::Approx(-0.8).epsilon(1e-12));
  CHECK(mesh.vertices[0].y == doctest::Approx(-0.8).epsilon(1e-12));
  CHECK(mesh.vertices[24].x == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("mesh keeps only triangles whose corners are all occupied") {
  MinimalAtlas atlas = planar_atlas(50.0, 0.0);
  InferenceConfig cfg;
  cfg.grid_res = 8;
  Rng rng(21);
  estimate_label_frequency(atlas, cfg, rng);
  const TriangleMesh mesh = extract_mesh(atlas, cfg);
  // Lattice columns at u = -1 + (2i+1)/8: exactly i = 4..7 are positive,
  // giving 4x8 occupied points and 3x7 fully occupied cells.
  CHECK(mesh.vertices.size() == 32);
  CHECK(mesh.triangles.size() == 3 * 7 * 2);
  for (const Vec3& v : mesh.vertices) CHECK(v.x > 0.0);
  CHECK(mesh_connected_components(mesh) == 1);
}

TEST_CASE("mesh failure modes") {
  MinimalAtlas atlas = planar_atlas(0.0, std::log(4.0));
  InferenceConfig cfg;
  CHECK_THROWS_AS(extract_mesh(atlas, cfg), Error);  // uncalibrated

  Rng rng(23);
  estimate_label_frequency(atlas, cfg, rng);
  InferenceConfig bad = cfg;
  bad.grid_res = 1;
  CHECK_THROWS_AS(extract_mesh(atlas, bad), Error);

  MinimalAtlas blocked = atlas;
  blocked.label_frequency = 3.0;
  try {
    extract_mesh(blocked, cfg);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyDomain);
  }
}
