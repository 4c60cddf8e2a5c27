#pragma once

#include <string>
#include <vector>

#include "atlasforge/geom.hpp"
#include "atlasforge/nn.hpp"
#include "atlasforge/types.hpp"

namespace atlasforge {

struct AtlasConfig {
  int charts = 3;
  int hidden_width = 128;
  PosEncConfig posenc;  // encoding of maximal points fed to the field net
  double tau = 0.5;     // occupancy decision threshold on the calibrated field
};

// One chart: phi maps the open square into R^3; field estimates the
// probability that a maximal point is labeled (a target's nearest neighbor),
// which divided by the label frequency c gives occupancy.
struct Chart {
  MlpParams phi;
  MlpParams field;
};

struct MinimalAtlas {
  AtlasConfig config;
  std::vector<Chart> charts;
  // Label frequency c, estimated after training; occupancy tests are the
  // division-free form field > tau * c.
  double label_frequency = 0.0;
  bool has_label_frequency = false;
  // Unit-ball frame of the fitted target; extraction de-normalizes through it.
  UnitBallFrame frame;
};

MinimalAtlas make_atlas(const AtlasConfig& config, Rng& rng);

Matrix uv_matrix(const std::vector<Vec2>& uv);
PointCloud3 matrix_to_cloud(const Matrix& m);

// Every sample must lie strictly inside (-1,1)^2.
PointCloud3 phi_eval(const MinimalAtlas& atlas, int chart, const std::vector<Vec2>& uv);

// Calibrated field probabilities, clamped to the open interval (0,1).
std::vector<double> field_eval(const MinimalAtlas& atlas, int chart, const PointCloud3& points);

// Occupancy flags for parametric samples; needs the label frequency. The
// division-free test is field > tau * label_frequency. The points overload
// skips re-mapping when the chart images are already at hand.
std::vector<std::uint8_t> occupied(const MinimalAtlas& atlas, int chart,
                                   const std::vector<Vec2>& uv);
std::vector<std::uint8_t> occupied_points(const MinimalAtlas& atlas, int chart,
                                          const PointCloud3& points);

// Versioned binary checkpoint, little-endian f64 tensors.
void save_atlas(const std::string& path, const MinimalAtlas& atlas);
MinimalAtlas load_atlas(const std::string& path);

}  // namespace atlasforge
