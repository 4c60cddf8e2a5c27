#include "atlasforge/geom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace atlasforge {

namespace {

constexpr double kPi = std::numbers::pi;

double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace

NormalizeResult normalize_unit_ball(const PointCloud3& cloud) {
  require(!cloud.empty(), ErrorKind::InvalidInput, "normalize_unit_ball: empty cloud");
  Vec3 center{0.0, 0.0, 0.0};
  for (const Vec3& p : cloud) center += p;
  const double inv_n = 1.0 / static_cast<double>(cloud.size());
  center = inv_n * center;

  double max_sq = 0.0;
  for (const Vec3& p : cloud) max_sq = std::max(max_sq, sq_dist(p, center));
  const double scale = std::sqrt(max_sq);
  require(scale > 0.0, ErrorKind::DegenerateInput,
          "normalize_unit_ball: all points coincide, no scale");

  NormalizeResult out;
  out.frame = {center, scale};
  out.cloud.resize(cloud.size());
  const double inv_s = 1.0 / scale;
  for (std::size_t i = 0; i < cloud.size(); ++i) out.cloud[i] = inv_s * (cloud[i] - center);
  return out;
}

PointCloud3 denormalize(const PointCloud3& cloud, const UnitBallFrame& frame) {
  PointCloud3 out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) out[i] = frame.scale * cloud[i] + frame.center;
  return out;
}

double uniform_open(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  // The distribution is half-open in theory and can still emit either endpoint
  // after rounding; the open interval is a hard invariant here.
  for (;;) {
    const double v = dist(rng);
    if (v > lo && v < hi) return v;
  }
}

std::vector<Vec2> sample_open_square(std::size_t n, Rng& rng) {
  std::vector<Vec2> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].x = uniform_open(rng, -1.0, 1.0);
    out[i].y = uniform_open(rng, -1.0, 1.0);
  }
  return out;
}

PointCloud3 sample_mesh_uniform(const TriangleMesh& mesh, std::size_t n, Rng& rng) {
  require(!mesh.triangles.empty(), ErrorKind::InvalidInput, "sample_mesh_uniform: no triangles");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Tri& tri = mesh.triangles[t];
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    total += 0.5 * norm(cross(b - a, c - a));
    cumulative[t] = total;
  }
  require(total > 0.0, ErrorKind::DegenerateInput, "sample_mesh_uniform: zero total area");

  PointCloud3 out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = uniform01(rng) * total;
    const std::size_t t = static_cast<std::size_t>(
        std::lower_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
    const Tri& tri = mesh.triangles[std::min(t, mesh.triangles.size() - 1)];
    double r1 = uniform01(rng);
    double r2 = uniform01(rng);
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    out[i] = a + r1 * (b - a) + r2 * (c - a);
  }
  return out;
}

SurfaceKind parse_surface_kind(const std::string& name) {
  if (name == "sphere") return SurfaceKind::Sphere;
  if (name == "torus") return SurfaceKind::Torus;
  if (name == "disk") return SurfaceKind::Disk;
  if (name == "two_spheres") return SurfaceKind::TwoSpheres;
  if (name == "open_cylinder" || name == "cylinder") return SurfaceKind::OpenCylinder;
  fail(ErrorKind::InvalidInput, "unknown surface kind: " + name);
}

const char* surface_kind_name(SurfaceKind kind) {
  switch (kind) {
    case SurfaceKind::Sphere: return "sphere";
    case SurfaceKind::Torus: return "torus";
    case SurfaceKind::Disk: return "disk";
    case SurfaceKind::TwoSpheres: return "two_spheres";
    case SurfaceKind::OpenCylinder: return "open_cylinder";
  }
  return "unknown";
}

namespace {

Vec3 sample_sphere(Rng& rng, double radius, const Vec3& center) {
  const double z = uniform_open(rng, -1.0, 1.0);
  const double phi = uniform01(rng) * 2.0 * kPi;
  const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
  return center + radius * Vec3{rho * std::cos(phi), rho * std::sin(phi), z};
}

}  // namespace

PointCloud3 synth_surface(SurfaceKind kind, std::size_t n, const SynthParams& params, Rng& rng) {
  require(n > 0, ErrorKind::InvalidInput, "synth_surface: n must be positive");
  require(params.radius > 0.0, ErrorKind::InvalidInput, "synth_surface: radius must be positive");

  PointCloud3 cloud(n);
  switch (kind) {
    case SurfaceKind::Sphere:
      for (std::size_t i = 0; i < n; ++i) cloud[i] = sample_sphere(rng, params.radius, {});
      break;
    case SurfaceKind::Torus: {
      const double R = params.radius;
      const double r = params.minor_radius;
      require(r > 0.0 && r < R, ErrorKind::InvalidInput,
              "synth_surface: torus needs 0 < minor_radius < radius");
      for (std::size_t i = 0; i < n; ++i) {
        const double theta = uniform01(rng) * 2.0 * kPi;
        // Area element scales with R + r*cos(psi); rejection keeps the draw
        // uniform over the actual surface area.
        double psi;
        for (;;) {
          psi = uniform01(rng) * 2.0 * kPi;
          if (uniform01(rng) * (R + r) <= R + r * std::cos(psi)) break;
        }
        const double w = R + r * std::cos(psi);
        cloud[i] = {w * std::cos(theta), w * std::sin(theta), r * std::sin(psi)};
      }
      break;
    }
    case SurfaceKind::Disk:
      for (std::size_t i = 0; i < n; ++i) {
        const double rho = params.radius * std::sqrt(uniform01(rng));
        const double phi = uniform01(rng) * 2.0 * kPi;
        cloud[i] = {rho * std::cos(phi), rho * std::sin(phi), 0.0};
      }
      break;
    case SurfaceKind::TwoSpheres: {
      require(params.separation > 2.0 * params.radius, ErrorKind::InvalidInput,
              "synth_surface: two_spheres must not intersect");
      const Vec3 c0{-0.5 * params.separation, 0.0, 0.0};
      const Vec3 c1{+0.5 * params.separation, 0.0, 0.0};
      for (std::size_t i = 0; i < n; ++i) {
        const bool second = uniform01(rng) < 0.5;
        cloud[i] = sample_sphere(rng, params.radius, second ? c1 : c0);
      }
      break;
    }
    case SurfaceKind::OpenCylinder: {
      require(params.height > 0.0, ErrorKind::InvalidInput,
              "synth_surface: cylinder height must be positive");
      for (std::size_t i = 0; i < n; ++i) {
        const double phi = uniform01(rng) * 2.0 * kPi;
        const double z = uniform_open(rng, -0.5 * params.height, 0.5 * params.height);
        cloud[i] = {params.radius * std::cos(phi), params.radius * std::sin(phi), z};
      }
      break;
    }
  }
  return normalize_unit_ball(cloud).cloud;
}

int mesh_connected_components(const TriangleMesh& mesh) {
  if (mesh.triangles.empty()) return 0;
  std::vector<int> parent(mesh.vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) {
      parent[v] = parent[parent[v]];
      v = parent[v];
    }
    return v;
  };
  auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
  for (const Tri& t : mesh.triangles) {
    unite(t[0], t[1]);
    unite(t[1], t[2]);
  }
  std::vector<std::uint8_t> seen(mesh.vertices.size(), 0);
  int components = 0;
  for (const Tri& t : mesh.triangles) {
    const int root = find(t[0]);
    if (!seen[root]) {
      seen[root] = 1;
      ++components;
    }
  }
  return components;
}

}  // namespace atlasforge
