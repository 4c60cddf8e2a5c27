#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "atlasforge/atlas.hpp"
#include "atlasforge/infer.hpp"
#include "atlasforge/losses.hpp"
#include "atlasforge/types.hpp"

namespace atlasforge {

// Sum of the two directed mean squared nearest-neighbor distances.
double chamfer_bidirectional(const PointCloud3& a, const PointCloud3& b);

// Percentages. A distance exactly at the threshold counts as a hit; an
// all-miss comparison gives f = 0.
struct FScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

FScore fscore(const PointCloud3& predicted, const PointCloud3& target, double threshold = 0.01);

// Zero for an isometric (metric), conformal (conformal), or area preserving
// (area) parameterization; each grows with the corresponding distortion.
struct DistortionMetrics {
  double metric = 0.0;
  double conformal = 0.0;
  double area = 0.0;
};

DistortionMetrics distortion_metrics(const std::vector<Jac32>& jacobians, double eps = 1e-4);

struct EvalReport {
  std::size_t eval_points = 0;
  double pc_cd = 0.0;
  FScore pc_f;
  double mesh_cd = 0.0;
  FScore mesh_f;
  DistortionMetrics distortion;
  // Acceptance rate of the extraction run: occupied probes / drawn probes.
  double occupancy_rate = 0.0;
};

// Everything runs in the normalized frame: `target` must live in the unit
// ball the atlas was fitted in. Extracts a point cloud and a sampled mesh of
// `eval_points` each, then scores both against the target; distortion is
// measured at the extracted parametric samples. Requires a calibrated label
// frequency.
EvalReport evaluate(const MinimalAtlas& atlas, const PointCloud3& target,
                    std::size_t eval_points, const InferenceConfig& cfg, Rng& rng);

std::string eval_report_json(const EvalReport& report);

}  // namespace atlasforge
