#pragma once

#include <string>
#include <vector>

#include "atlasforge/types.hpp"

namespace atlasforge {

// Plain text, one "x y z" triple per line.
PointCloud3 read_xyz(const std::string& path);
void write_xyz(const std::string& path, const PointCloud3& cloud);

// Packed little-endian f32 triples, no header.
PointCloud3 read_xyz_bin(const std::string& path);
void write_xyz_bin(const std::string& path, const PointCloud3& cloud);

// Extension dispatch: .xyzb selects the binary format, anything else text.
PointCloud3 read_cloud(const std::string& path);
void write_cloud(const std::string& path, const PointCloud3& cloud);

// Wavefront OBJ restricted to v/f records, 1-based indices.
TriangleMesh read_obj(const std::string& path);
void write_obj(const std::string& path, const TriangleMesh& mesh);

struct HistoryRow {
  int step = 0;
  double loss_rec = 0.0;
  double loss_occ = 0.0;
  double loss_dist = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& rows);
std::vector<HistoryRow> read_history_csv(const std::string& path);

}  // namespace atlasforge
