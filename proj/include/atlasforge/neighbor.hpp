#pragma once

#include <cstdint>
#include <vector>

#include "atlasforge/types.hpp"

namespace atlasforge {

// Exact nearest-neighbor index over a uniform grid. Immutable once built;
// concurrent queries are safe. Results match a brute-force scan exactly,
// including distance ties, which resolve to the lowest reference index.
struct UniformGridIndex {
  PointCloud3 points;
  Vec3 bbox_min;
  Vec3 bbox_max;
  int nx = 1, ny = 1, nz = 1;
  double cell_x = 1.0, cell_y = 1.0, cell_z = 1.0;
  // CSR cell layout; point ids within a cell stay in ascending order.
  std::vector<std::int32_t> cell_start;
  std::vector<std::int32_t> cell_points;
};

// cell_size <= 0 selects the default: bounding-box diagonal / cbrt(N).
UniformGridIndex build_grid_index(PointCloud3 points, double cell_size = 0.0);

struct NearestHit {
  int index = -1;
  double sq_dist = 0.0;
};

NearestHit nearest(const UniformGridIndex& index, const Vec3& query);
std::vector<NearestHit> nearest_batch(const UniformGridIndex& index, const PointCloud3& queries);

}  // namespace atlasforge
