#pragma once

#include <cstddef>
#include <vector>

#include "atlasforge/atlas.hpp"
#include "atlasforge/geom.hpp"
#include "atlasforge/types.hpp"

namespace atlasforge {

struct InferenceConfig {
  // Parametric probes used to calibrate the label frequency and to estimate
  // the occupancy rate, split evenly across charts.
  int probe_samples = 5000;
  // Fraction of the highest field responses whose median calibrates c.
  double eta = 0.4;
  // Mesh lattice resolution per axis.
  int grid_res = 64;
  // Rejection-sampling refill budget when extracting a point cloud.
  int max_refill_rounds = 10;
};

// Median of the top ceil(eta * M) values, clamped to [1e-6, 1]. Values that
// are nowhere above 1e-6 mean the field died: DegenerateField.
double label_frequency_from_values(std::vector<double> values, double eta);

// Probes the field at fresh parametric samples of every chart, pools the
// responses, and stores the calibrated label frequency on the atlas.
double estimate_label_frequency(MinimalAtlas& atlas, const InferenceConfig& cfg, Rng& rng);

// Fraction of fresh parametric probes that are occupied. Requires a
// calibrated label frequency.
double estimate_occupancy_rate(const MinimalAtlas& atlas, const InferenceConfig& cfg, Rng& rng);

// Points are in the normalized (unit ball) frame; callers that want the
// original coordinates apply denormalize(points, atlas.frame).
struct ExtractedCloud {
  PointCloud3 points;
  std::vector<int> chart;   // source chart per point
  std::vector<Vec2> uv;     // parametric source per point
  double occupancy_rate = 0.0;  // kept / drawn over the whole rejection run
  int refill_rounds = 0;
};

// Two-step rejection sampling to exactly n points: an initial batch of
// ceil(2n/3) probes estimates the acceptance rate, then refill batches sized
// by that estimate top it up; the surplus is uniformly subsampled away.
// A field that rejects every initial probe, or that cannot reach n within the
// refill budget, raises EmptyDomain.
ExtractedCloud extract_point_cloud(const MinimalAtlas& atlas, std::size_t n,
                                   const InferenceConfig& cfg, Rng& rng);

// Triangulates each chart over a grid_res x grid_res lattice of cell centers
// u_i = -1 + (2i+1)/grid_res, two triangles per cell, keeping a triangle only
// when all three corners are occupied. Vertices are the occupied lattice
// points of each chart, charts concatenated; nothing is welded. No surviving
// triangle raises EmptyDomain.
TriangleMesh extract_mesh(const MinimalAtlas& atlas, const InferenceConfig& cfg);

}  // namespace atlasforge
