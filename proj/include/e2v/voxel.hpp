#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "e2v/common.hpp"

namespace e2v {

/// R^3 binary occupancy, x fastest: cell (x, y, z) lives at x + R*(y + R*z).
class VoxelGrid {
 public:
  VoxelGrid() = default;
  explicit VoxelGrid(Index resolution);

  Index resolution() const { return resolution_; }
  Index size() const { return static_cast<Index>(bits_.size()); }

  bool operator()(Index x, Index y, Index z) const { return bits_[offset(x, y, z)] != 0; }
  void set(Index x, Index y, Index z, bool on = true) { bits_[offset(x, y, z)] = on ? 1 : 0; }
  bool operator[](Index i) const { return bits_[static_cast<std::size_t>(i)] != 0; }
  void set(Index i, bool on) { bits_[static_cast<std::size_t>(i)] = on ? 1 : 0; }

  Index count() const;
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  std::size_t offset(Index x, Index y, Index z) const {
    return static_cast<std::size_t>(x + resolution_ * (y + resolution_ * z));
  }

  bool operator==(const VoxelGrid&) const = default;

 private:
  Index resolution_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// R^3 occupancy probabilities in [0, 1], same layout as VoxelGrid.
class ProbGrid {
 public:
  ProbGrid() = default;
  ProbGrid(Index resolution, Eigen::ArrayXd values);

  static ProbGrid from_voxels(const VoxelGrid& g);

  Index resolution() const { return resolution_; }
  const Eigen::ArrayXd& values() const { return values_; }
  double operator[](Index i) const { return values_[i]; }

 private:
  Index resolution_ = 0;
  Eigen::ArrayXd values_;
};

struct TriMesh {
  Eigen::Matrix3Xd vertices;
  std::vector<std::array<std::int32_t, 3>> triangles;  ///< zero-based

  Eigen::Index vertex_count() const { return vertices.cols(); }
};

/// Points in the unit cube, one per column.
using PointSet = Eigen::Matrix3Xd;

/// Wavefront OBJ subset: `v` and `f` records (fan-triangulated, negative
/// indices relative to the current vertex count); everything else is ignored.
TriMesh parse_obj(const std::string& text);
TriMesh read_obj_file(const std::string& path);

/// Uniform scale + translation placing the bounding box centred in the unit cube
/// with its longest side equal to 1.
TriMesh normalize_mesh(const TriMesh& mesh);

/// Surface cells are marked by dense triangle sampling. With fill_interior the
/// mesh is rasterized on a 4x finer lattice, the exterior is flood filled from
/// the lattice boundary, and a coarse cell is occupied when at least half of its
/// fine cells are not exterior.
VoxelGrid voxelize(const TriMesh& mesh, Index resolution, bool fill_interior);

/// Occupied iff p > t.
VoxelGrid binarize(const ProbGrid& p, double threshold);

double iou(const ProbGrid& pred, const VoxelGrid& gt, double threshold);

/// Occupied cell centres ((i + 0.5) / R, ...).
PointSet voxel_to_points(const VoxelGrid& g);

struct FScoreResult {
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
};

/// F-Score at distance d between a reconstructed and a ground-truth point set.
/// Empty vs empty scores 1; exactly one empty set scores 0.
FScoreResult fscore_detail(const PointSet& rec, const PointSet& gt, double distance);
double fscore(const PointSet& rec, const PointSet& gt, double distance);

// VOX1 codec
std::vector<std::uint8_t> encode_voxel_grid(const VoxelGrid& g);
VoxelGrid decode_voxel_grid(const std::vector<std::uint8_t>& bytes,
                            const std::string& context = "VOX1");
void write_voxel_file(const std::string& path, const VoxelGrid& g);
VoxelGrid read_voxel_file(const std::string& path);

/// One axis-aligned cube (8 vertices, 12 triangles) per occupied cell.
std::string voxels_to_obj(const VoxelGrid& g);

}  // namespace e2v
