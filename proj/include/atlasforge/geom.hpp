#pragma once

#include <random>
#include <string>
#include <vector>

#include "atlasforge/types.hpp"

namespace atlasforge {

using Rng = std::mt19937_64;

// Rigid frame produced by unit-ball normalization: original = scale * p + center.
struct UnitBallFrame {
  Vec3 center;
  double scale = 1.0;
};

struct NormalizeResult {
  PointCloud3 cloud;
  UnitBallFrame frame;
};

// Centers the cloud on its centroid and rescales so the farthest point sits on
// the unit sphere. Empty input is invalid; a cloud of identical points has no
// scale and is degenerate.
NormalizeResult normalize_unit_ball(const PointCloud3& cloud);

PointCloud3 denormalize(const PointCloud3& cloud, const UnitBallFrame& frame);

// Uniform draw strictly inside (lo, hi); endpoint hits are rejected and redrawn.
double uniform_open(Rng& rng, double lo, double hi);

// n parametric samples, every component strictly inside (-1, 1).
std::vector<Vec2> sample_open_square(std::size_t n, Rng& rng);

// Area-uniform surface sampling: triangle chosen proportional to area, then a
// uniform barycentric draw. All triangles with zero total area is degenerate.
PointCloud3 sample_mesh_uniform(const TriangleMesh& mesh, std::size_t n, Rng& rng);

enum class SurfaceKind { Sphere, Torus, Disk, TwoSpheres, OpenCylinder };

struct SynthParams {
  double radius = 1.0;        // sphere / disk / cylinder radius; two_spheres component radius
  double minor_radius = 0.3;  // torus tube radius (the major radius is `radius`)
  double height = 1.5;        // open cylinder height
  double separation = 3.0;    // two_spheres center-to-center distance
};

SurfaceKind parse_surface_kind(const std::string& name);
const char* surface_kind_name(SurfaceKind kind);

// Area-uniform sample of an analytic surface, unit-ball normalized.
PointCloud3 synth_surface(SurfaceKind kind, std::size_t n, const SynthParams& params, Rng& rng);

// Connected components of the triangle adjacency graph (shared vertex implies
// connected). Vertices referenced by no triangle do not contribute.
int mesh_connected_components(const TriangleMesh& mesh);

}  // namespace atlasforge
