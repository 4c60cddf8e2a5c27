#include "atlasforge/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "atlasforge/log.hpp"

namespace atlasforge {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("ATLASFORGE_LOG");
    if (!env) return LogLevel::Warn;
    const std::string v(env);
    if (v == "error") return LogLevel::Error;
    if (v == "warn") return LogLevel::Warn;
    if (v == "info") return LogLevel::Info;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

void log_msg(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  static const char* const names[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[atlasforge %s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

namespace {

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream f(path, mode);
  require(f.good(), ErrorKind::Io, "cannot open for reading: " + path);
  return f;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode);
  require(f.good(), ErrorKind::Io, "cannot open for writing: " + path);
  return f;
}

void require_finite(const Vec3& p, const std::string& path) {
  require(std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z), ErrorKind::Io,
          "non-finite coordinate in " + path);
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

PointCloud3 read_xyz(const std::string& path) {
  std::ifstream f = open_in(path);
  PointCloud3 cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Vec3 p;
    if (!(ss >> p.x >> p.y >> p.z)) {
      fail(ErrorKind::Io, path + ": malformed line " + std::to_string(lineno));
    }
    require_finite(p, path);
    cloud.push_back(p);
  }
  require(!cloud.empty(), ErrorKind::Io, path + ": no points");
  return cloud;
}

void write_xyz(const std::string& path, const PointCloud3& cloud) {
  std::ofstream f = open_out(path);
  char buf[128];
  for (const Vec3& p : cloud) {
    require_finite(p, path);
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.x, p.y, p.z);
    f << buf;
  }
  require(f.good(), ErrorKind::Io, "write failed: " + path);
}

PointCloud3 read_xyz_bin(const std::string& path) {
  std::ifstream f = open_in(path, std::ios::in | std::ios::binary);
  f.seekg(0, std::ios::end);
  const std::streamoff bytes = f.tellg();
  f.seekg(0, std::ios::beg);
  require(bytes > 0 && bytes % (3 * sizeof(float)) == 0, ErrorKind::Io,
          path + ": size is not a whole number of f32 triples");
  const std::size_t n = static_cast<std::size_t>(bytes) / (3 * sizeof(float));
  std::vector<float> raw(n * 3);
  f.read(reinterpret_cast<char*>(raw.data()), bytes);
  require(f.good(), ErrorKind::Io, "read failed: " + path);
  PointCloud3 cloud(n);
  for (std::size_t i = 0; i < n; ++i) {
    cloud[i] = {static_cast<double>(raw[3 * i]), static_cast<double>(raw[3 * i + 1]),
                static_cast<double>(raw[3 * i + 2])};
    require_finite(cloud[i], path);
  }
  return cloud;
}

void write_xyz_bin(const std::string& path, const PointCloud3& cloud) {
  std::ofstream f = open_out(path, std::ios::out | std::ios::binary);
  std::vector<float> raw(cloud.size() * 3);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    require_finite(cloud[i], path);
    raw[3 * i] = static_cast<float>(cloud[i].x);
    raw[3 * i + 1] = static_cast<float>(cloud[i].y);
    raw[3 * i + 2] = static_cast<float>(cloud[i].z);
  }
  f.write(reinterpret_cast<const char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * sizeof(float)));
  require(f.good(), ErrorKind::Io, "write failed: " + path);
}

PointCloud3 read_cloud(const std::string& path) {
  return has_suffix(path, ".xyzb") ? read_xyz_bin(path) : read_xyz(path);
}

void write_cloud(const std::string& path, const PointCloud3& cloud) {
  if (has_suffix(path, ".xyzb"))
    write_xyz_bin(path, cloud);
  else
    write_xyz(path, cloud);
}

TriangleMesh read_obj(const std::string& path) {
  std::ifstream f = open_in(path);
  TriangleMesh mesh;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.size() < 2) continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 p;
      if (!(ss >> p.x >> p.y >> p.z))
        fail(ErrorKind::Io, path + ": malformed vertex at line " + std::to_string(lineno));
      require_finite(p, path);
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      Tri t;
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        if (!(ss >> tok))
          fail(ErrorKind::Io, path + ": malformed face at line " + std::to_string(lineno));
        const long idx = std::strtol(tok.c_str(), nullptr, 10);
        require(idx >= 1 && idx <= static_cast<long>(mesh.vertices.size()), ErrorKind::Io,
                path + ": face index out of range at line " + std::to_string(lineno));
        t[k] = static_cast<int>(idx - 1);
      }
      mesh.triangles.push_back(t);
    }
  }
  return mesh;
}

void write_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream f = open_out(path);
  char buf[160];
  for (const Vec3& p : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", p.x, p.y, p.z);
    f << buf;
  }
  for (const Tri& t : mesh.triangles) {
    std::snprintf(buf, sizeof buf, "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
    f << buf;
  }
  require(f.good(), ErrorKind::Io, "write failed: " + path);
}

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& rows) {
  std::ofstream f = open_out(path);
  f << "step,loss_rec,loss_occ,loss_dist,total,lr\n";
  char buf[256];
  for (const HistoryRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.loss_rec,
                  r.loss_occ, r.loss_dist, r.total, r.lr);
    f << buf;
  }
  require(f.good(), ErrorKind::Io, "write failed: " + path);
}

std::vector<HistoryRow> read_history_csv(const std::string& path) {
  std::ifstream f = open_in(path);
  std::string line;
  require(static_cast<bool>(std::getline(f, line)), ErrorKind::Io, path + ": empty csv");
  require(line == "step,loss_rec,loss_occ,loss_dist,total,lr", ErrorKind::Io,
          path + ": unexpected header");
  std::vector<HistoryRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    HistoryRow r;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf", &r.step, &r.loss_rec, &r.loss_occ,
                    &r.loss_dist, &r.total, &r.lr) != 6) {
      fail(ErrorKind::Io, path + ": malformed csv row");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace atlasforge
