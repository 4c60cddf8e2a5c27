#include "atlasforge/neighbor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "atlasforge/parallel.hpp"

namespace atlasforge {

namespace {

constexpr int kMaxCellsPerAxis = 64;

int cell_coord(double v, double lo, double width, int n) {
  // Clamped before the cast: a coordinate far outside the box would otherwise
  // overflow int, and casting such a double is undefined.
  const double c = std::floor((v - lo) / width);
  if (!(c > 0.0)) return 0;
  if (c >= static_cast<double>(n - 1)) return n - 1;
  return static_cast<int>(c);
}

int axis_cells(double extent, double cell) {
  if (!(extent > 0.0) || !(cell > 0.0)) return 1;
  const int n = static_cast<int>(std::ceil(extent / cell));
  return std::clamp(n, 1, kMaxCellsPerAxis);
}

// Squared distance from q to the AABB of one grid cell.
double cell_sq_dist(const UniformGridIndex& g, const Vec3& q, int cx, int cy, int cz) {
  const double lox = g.bbox_min.x + cx * g.cell_x;
  const double loy = g.bbox_min.y + cy * g.cell_y;
  const double loz = g.bbox_min.z + cz * g.cell_z;
  double d = 0.0;
  double t = std::max({lox - q.x, q.x - (lox + g.cell_x), 0.0});
  d += t * t;
  t = std::max({loy - q.y, q.y - (loy + g.cell_y), 0.0});
  d += t * t;
  t = std::max({loz - q.z, q.z - (loz + g.cell_z), 0.0});
  d += t * t;
  return d;
}

}  // namespace

UniformGridIndex build_grid_index(PointCloud3 points, double cell_size) {
  require(!points.empty(), ErrorKind::InvalidInput, "build_grid_index: empty cloud");

  UniformGridIndex g;
  g.points = std::move(points);
  g.bbox_min = g.bbox_max = g.points[0];
  for (const Vec3& p : g.points) {
    // A non-finite coordinate would poison the cell arithmetic (casting NaN
    // to int is undefined), so it is rejected as a numerical failure here.
    require(std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z),
            ErrorKind::NumericalError, "build_grid_index: non-finite coordinate");
    g.bbox_min.x = std::min(g.bbox_min.x, p.x);
    g.bbox_min.y = std::min(g.bbox_min.y, p.y);
    g.bbox_min.z = std::min(g.bbox_min.z, p.z);
    g.bbox_max.x = std::max(g.bbox_max.x, p.x);
    g.bbox_max.y = std::max(g.bbox_max.y, p.y);
    g.bbox_max.z = std::max(g.bbox_max.z, p.z);
  }
  const Vec3 extent = g.bbox_max - g.bbox_min;
  if (cell_size <= 0.0) {
    cell_size = norm(extent) / std::cbrt(static_cast<double>(g.points.size()));
  }
  g.nx = axis_cells(extent.x, cell_size);
  g.ny = axis_cells(extent.y, cell_size);
  g.nz = axis_cells(extent.z, cell_size);
  // Cells tile the bounding box exactly; a degenerate axis keeps width 1.
  g.cell_x = extent.x > 0.0 ? extent.x / g.nx : 1.0;
  g.cell_y = extent.y > 0.0 ? extent.y / g.ny : 1.0;
  g.cell_z = extent.z > 0.0 ? extent.z / g.nz : 1.0;

  const std::size_t n_cells = static_cast<std::size_t>(g.nx) * g.ny * g.nz;
  std::vector<std::int32_t> counts(n_cells, 0);
  auto cell_of = [&](const Vec3& p) {
    const int cx = cell_coord(p.x, g.bbox_min.x, g.cell_x, g.nx);
    const int cy = cell_coord(p.y, g.bbox_min.y, g.cell_y, g.ny);
    const int cz = cell_coord(p.z, g.bbox_min.z, g.cell_z, g.nz);
    return (static_cast<std::size_t>(cz) * g.ny + cy) * g.nx + cx;
  };
  for (const Vec3& p : g.points) ++counts[cell_of(p)];
  g.cell_start.assign(n_cells + 1, 0);
  for (std::size_t c = 0; c < n_cells; ++c) g.cell_start[c + 1] = g.cell_start[c] + counts[c];
  g.cell_points.resize(g.points.size());
  std::vector<std::int32_t> fill(n_cells, 0);
  for (std::size_t i = 0; i < g.points.size(); ++i) {
    const std::size_t c = cell_of(g.points[i]);
    g.cell_points[g.cell_start[c] + fill[c]++] = static_cast<std::int32_t>(i);
  }
  return g;
}

NearestHit nearest(const UniformGridIndex& g, const Vec3& q) {
  require(std::isfinite(q.x) && std::isfinite(q.y) && std::isfinite(q.z),
          ErrorKind::NumericalError, "nearest: non-finite query");
  const int bx = cell_coord(q.x, g.bbox_min.x, g.cell_x, g.nx);
  const int by = cell_coord(q.y, g.bbox_min.y, g.cell_y, g.ny);
  const int bz = cell_coord(q.z, g.bbox_min.z, g.cell_z, g.nz);

  NearestHit best{-1, std::numeric_limits<double>::infinity()};
  auto scan_cell = [&](int cx, int cy, int cz) {
    if (cell_sq_dist(g, q, cx, cy, cz) > best.sq_dist) return;
    const std::size_t c = (static_cast<std::size_t>(cz) * g.ny + cy) * g.nx + cx;
    for (std::int32_t k = g.cell_start[c]; k < g.cell_start[c + 1]; ++k) {
      const std::int32_t i = g.cell_points[k];
      const double d = sq_dist(q, g.points[i]);
      // The squared distance can overflow to infinity for extreme but finite
      // coordinates; a first candidate must still register (best.index < 0)
      // or the search would report no hit from a nonempty grid.
      if (d < best.sq_dist || (d == best.sq_dist && (best.index < 0 || i < best.index)))
        best = {i, d};
    }
  };

  const int max_ring = std::max({bx, g.nx - 1 - bx, by, g.ny - 1 - by, bz, g.nz - 1 - bz});
  for (int r = 0; r <= max_ring; ++r) {
    if (best.index >= 0 && r > 0) {
      // Everything not yet scanned lies outside the box of cells base +- (r-1).
      // A tie exactly on that boundary could still win on index, so only a
      // strictly closer box bound ends the search.
      const int s = r - 1;
      const double lox = g.bbox_min.x + (bx - s) * g.cell_x;
      const double hix = g.bbox_min.x + (bx + s + 1) * g.cell_x;
      const double loy = g.bbox_min.y + (by - s) * g.cell_y;
      const double hiy = g.bbox_min.y + (by + s + 1) * g.cell_y;
      const double loz = g.bbox_min.z + (bz - s) * g.cell_z;
      const double hiz = g.bbox_min.z + (bz + s + 1) * g.cell_z;
      const double out = std::min({q.x - lox, hix - q.x, q.y - loy, hiy - q.y,
                                   q.z - loz, hiz - q.z});
      if (out > 0.0 && out * out > best.sq_dist) break;
    }
    const int x0 = std::max(bx - r, 0), x1 = std::min(bx + r, g.nx - 1);
    const int y0 = std::max(by - r, 0), y1 = std::min(by + r, g.ny - 1);
    const int z0 = std::max(bz - r, 0), z1 = std::min(bz + r, g.nz - 1);
    for (int cz = z0; cz <= z1; ++cz) {
      for (int cy = y0; cy <= y1; ++cy) {
        for (int cx = x0; cx <= x1; ++cx) {
          if (std::max({std::abs(cx - bx), std::abs(cy - by), std::abs(cz - bz)}) != r) continue;
          scan_cell(cx, cy, cz);
        }
      }
    }
  }
  return best;
}

std::vector<NearestHit> nearest_batch(const UniformGridIndex& index, const PointCloud3& queries) {
  // Validated up front: an exception must not escape the parallel region.
  for (const Vec3& q : queries) {
    require(std::isfinite(q.x) && std::isfinite(q.y) && std::isfinite(q.z),
            ErrorKind::NumericalError, "nearest: non-finite query");
  }
  std::vector<NearestHit> hits(queries.size());
  parallel_for(queries.size(), [&](std::size_t i) { hits[i] = nearest(index, queries[i]); });
  return hits;
}

}  // namespace atlasforge
