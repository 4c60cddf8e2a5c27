// Times the parallel kernels against plain serial loops over the same data.
// The serial variants here are the obvious textbook forms, not the library
// code with threading switched off, so the table reflects what the threaded
// implementations actually buy.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "atlasforge/geom.hpp"
#include "atlasforge/metrics.hpp"
#include "atlasforge/neighbor.hpp"
#include "atlasforge/nn.hpp"
#include "atlasforge/parallel.hpp"

using namespace atlasforge;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// Median of `reps` timed runs; the first untimed call warms caches.
double time_ms(int reps, const std::function<void()>& fn) {
  fn();
  std::vector<double> t(reps);
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    t[r] = ms_since(t0);
  }
  std::sort(t.begin(), t.end());
  return t[reps / 2];
}

void report(const char* name, std::size_t n, double serial_ms, double parallel_ms, bool agree) {
  std::printf("%-22s n=%-8zu serial %9.2f ms   parallel %9.2f ms   speedup %5.2fx   %s\n", name, n,
              serial_ms, parallel_ms, serial_ms / parallel_ms, agree ? "match" : "MISMATCH");
}

std::pair<int, double> brute_nearest(const PointCloud3& points, const Vec3& q) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = sq_dist(q, points[i]);
    if (d < best_d) {
      best = static_cast<int>(i);
      best_d = d;
    }
  }
  return {best, best_d};
}

void bench_nearest(std::size_t n, int reps) {
  Rng rng(17);
  const PointCloud3 points = synth_surface(SurfaceKind::Sphere, n, {}, rng);
  const PointCloud3 queries = synth_surface(SurfaceKind::Sphere, n, {}, rng);

  std::vector<NearestHit> grid_hits;
  const UniformGridIndex index = build_grid_index(points);
  const double par =
      time_ms(reps, [&] { grid_hits = nearest_batch(index, queries); });

  std::vector<std::pair<int, double>> brute_hits(queries.size());
  const double ser = time_ms(reps, [&] {
    for (std::size_t i = 0; i < queries.size(); ++i) brute_hits[i] = brute_nearest(points, queries[i]);
  });

  bool agree = true;
  for (std::size_t i = 0; i < queries.size(); ++i)
    agree = agree && grid_hits[i].index == brute_hits[i].first;
  report("nearest neighbor", n, ser, par, agree);
}

void bench_chamfer(std::size_t n, int reps) {
  Rng rng(18);
  const PointCloud3 a = synth_surface(SurfaceKind::Torus, n, {}, rng);
  const PointCloud3 b = synth_surface(SurfaceKind::Torus, n, {}, rng);

  double fast = 0.0;
  const double par = time_ms(reps, [&] { fast = chamfer_bidirectional(a, b); });

  double slow = 0.0;
  const double ser = time_ms(reps, [&] {
    double ab = 0.0, ba = 0.0;
    for (const Vec3& p : a) ab += brute_nearest(b, p).second;
    for (const Vec3& p : b) ba += brute_nearest(a, p).second;
    slow = ab / a.size() + ba / b.size();
  });

  report("chamfer", n, ser, par, std::abs(fast - slow) <= 1e-12 * std::max(1.0, std::abs(slow)));
}

void bench_forward(std::size_t n, int reps) {
  Rng rng(19);
  MlpParams net = make_chart_mlp(128, rng);
  Matrix uv(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    uv.at(i, 0) = uniform_open(rng, -1.0, 1.0);
    uv.at(i, 1) = uniform_open(rng, -1.0, 1.0);
  }

  Matrix batched;
  const double par = time_ms(reps, [&] { batched = mlp_forward(net, uv); });

  Matrix rowwise(n, 3);
  const double ser = time_ms(reps, [&] {
    Matrix one(1, 2);
    for (std::size_t i = 0; i < n; ++i) {
      one.at(0, 0) = uv.at(i, 0);
      one.at(0, 1) = uv.at(i, 1);
      const Matrix out = mlp_forward(net, one);
      for (std::size_t c = 0; c < 3; ++c) rowwise.at(i, c) = out.at(0, c);
    }
  });

  bool agree = batched.rows == rowwise.rows;
  for (std::size_t i = 0; agree && i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) agree = agree && batched.at(i, c) == rowwise.at(i, c);
  report("mlp forward w128", n, ser, par, agree);
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t scale = 1;
  int reps = 5;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--scale" && i + 1 < argc) scale = std::strtoull(argv[++i], nullptr, 10);
    if (arg == "--reps" && i + 1 < argc) reps = std::atoi(argv[++i]);
  }

  std::printf("threads: %d\n", max_threads());
  bench_nearest(4000 * scale, reps);
  bench_chamfer(4000 * scale, reps);
  bench_forward(20000 * scale, reps);
  return 0;
}
