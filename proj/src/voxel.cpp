#include "e2v/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <unordered_map>

#include "binary_io.hpp"

namespace e2v {

VoxelGrid::VoxelGrid(Index resolution) : resolution_(resolution) {
  if (resolution <= 0) throw Error(Errc::ResolutionZero, "voxel resolution must be positive");
  bits_.assign(static_cast<std::size_t>(resolution * resolution * resolution), 0);
}

Index VoxelGrid::count() const { return std::count(bits_.begin(), bits_.end(), std::uint8_t{1}); }

ProbGrid::ProbGrid(Index resolution, Eigen::ArrayXd values)
    : resolution_(resolution), values_(std::move(values)) {
  if (resolution <= 0) throw Error(Errc::ResolutionZero, "probability grid resolution");
  if (values_.size() != resolution * resolution * resolution) {
    throw Error(Errc::ResolutionMismatch, "expected " + std::to_string(resolution) + "^3 values");
  }
  if (!(values_ >= 0.0).all() || !(values_ <= 1.0).all()) {
    throw Error(Errc::ThresholdOutOfRange, "probabilities must lie in [0, 1]");
  }
}

ProbGrid ProbGrid::from_voxels(const VoxelGrid& g) {
  Eigen::ArrayXd v(g.size());
  for (Index i = 0; i < g.size(); ++i) v[i] = g[i] ? 1.0 : 0.0;
  return ProbGrid(g.resolution(), std::move(v));
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  std::string buf(s);
  char* end = nullptr;
  out = std::strtod(buf.c_str(), &end);
  return end == buf.c_str() + buf.size() && !buf.empty() && std::isfinite(out);
}

}  // namespace

TriMesh parse_obj(const std::string& text) {
  std::vector<Eigen::Vector3d> verts;
  TriMesh mesh;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);

    if (tok[0] == "v") {
      if (tok.size() < 4) throw Error(Errc::MalformedLine, where + ": vertex needs 3 coordinates");
      Eigen::Vector3d p;
      for (int k = 0; k < 3; ++k) {
        if (!parse_double(tok[k + 1], p[k])) {
          throw Error(Errc::MalformedLine, where + ": non-numeric coordinate '" +
                                               std::string(tok[k + 1]) + "'");
        }
      }
      verts.push_back(p);
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw Error(Errc::MalformedLine, where + ": face needs 3 indices");
      std::vector<std::int32_t> idx;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        const std::string_view ref = tok[k].substr(0, tok[k].find('/'));
        double raw = 0.0;
        if (!parse_double(ref, raw) || raw != std::floor(raw)) {
          throw Error(Errc::MalformedLine, where + ": bad face index '" + std::string(tok[k]) + "'");
        }
        const auto n = static_cast<long long>(verts.size());
        const long long i = raw < 0 ? n + static_cast<long long>(raw) : static_cast<long long>(raw) - 1;
        if (raw == 0 || i < 0 || i >= n) {
          throw Error(Errc::IndexOutOfRange, where + ": index " + std::string(ref) + " with " +
                                                 std::to_string(n) + " vertices");
        }
        idx.push_back(static_cast<std::int32_t>(i));
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        const std::array<std::int32_t, 3> tri{idx[0], idx[k], idx[k + 1]};
        if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
        mesh.triangles.push_back(tri);
      }
    }
  }
  if (verts.empty() || mesh.triangles.empty()) throw Error(Errc::EmptyMesh, "no faces in OBJ input");
  mesh.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.col(static_cast<Eigen::Index>(i)) = verts[i];
  return mesh;
}

TriMesh read_obj_file(const std::string& path) {
  const auto bytes = detail::read_file(path);
  try {
    return parse_obj(std::string(bytes.begin(), bytes.end()));
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

TriMesh normalize_mesh(const TriMesh& mesh) {
  if (mesh.vertex_count() == 0) throw Error(Errc::EmptyMesh, "cannot normalize an empty mesh");
  const Eigen::Vector3d lo = mesh.vertices.rowwise().minCoeff();
  const Eigen::Vector3d hi = mesh.vertices.rowwise().maxCoeff();
  const double extent = (hi - lo).maxCoeff();
  if (!(extent > 0.0)) throw Error(Errc::DegenerateExtent, "mesh bounding box has zero size");
  const Eigen::Vector3d center = 0.5 * (lo + hi);
  TriMesh out = mesh;
  out.vertices = ((mesh.vertices.colwise() - center) / extent).array() + 0.5;
  return out;
}

namespace {

Index cell_of(double coord, Index res) {
  const auto i = static_cast<Index>(std::floor(coord * static_cast<double>(res)));
  return std::clamp<Index>(i, 0, res - 1);
}

/// Marks every cell touched by a sample of the triangles, at >= 4 samples per
/// cell diagonal.
void rasterize_surface(const TriMesh& mesh, Index res, std::vector<std::uint8_t>& cells) {
  const double spacing = std::sqrt(3.0) / static_cast<double>(res) / 4.0;
  for (const auto& tri : mesh.triangles) {
    const Eigen::Vector3d a = mesh.vertices.col(tri[0]);
    const Eigen::Vector3d ab = mesh.vertices.col(tri[1]) - a;
    const Eigen::Vector3d ac = mesh.vertices.col(tri[2]) - a;
    const double longest = std::max({ab.norm(), ac.norm(), (ac - ab).norm()});
    const auto n = std::max<Index>(1, static_cast<Index>(std::ceil(longest / spacing)));
    for (Index i = 0; i <= n; ++i) {
      for (Index j = 0; i + j <= n; ++j) {
        const Eigen::Vector3d p = a + (static_cast<double>(i) / n) * ab + (static_cast<double>(j) / n) * ac;
        const Index x = cell_of(p.x(), res), y = cell_of(p.y(), res), z = cell_of(p.z(), res);
        cells[static_cast<std::size_t>(x + res * (y + res * z))] = 1;
      }
    }
  }
}

/// Cells reachable from the lattice boundary through unoccupied 6-neighbours.
std::vector<std::uint8_t> exterior(const std::vector<std::uint8_t>& occupied, Index res) {
  std::vector<std::uint8_t> outside(occupied.size(), 0);
  std::deque<Index> queue;
  auto seed = [&](Index x, Index y, Index z) {
    const Index i = x + res * (y + res * z);
    if (!occupied[i] && !outside[i]) {
      outside[i] = 1;
      queue.push_back(i);
    }
  };
  for (Index a = 0; a < res; ++a) {
    for (Index b = 0; b < res; ++b) {
      seed(0, a, b), seed(res - 1, a, b);
      seed(a, 0, b), seed(a, res - 1, b);
      seed(a, b, 0), seed(a, b, res - 1);
    }
  }
  while (!queue.empty()) {
    const Index i = queue.front();
    queue.pop_front();
    const Index x = i % res, y = (i / res) % res, z = i / (res * res);
    if (x > 0) seed(x - 1, y, z);
    if (x + 1 < res) seed(x + 1, y, z);
    if (y > 0) seed(x, y - 1, z);
    if (y + 1 < res) seed(x, y + 1, z);
    if (z > 0) seed(x, y, z - 1);
    if (z + 1 < res) seed(x, y, z + 1);
  }
  return outside;
}

constexpr Index kFillSupersample = 4;

}  // namespace

VoxelGrid voxelize(const TriMesh& mesh, Index resolution, bool fill_interior) {
  if (resolution <= 0) throw Error(Errc::ResolutionZero, "voxelize resolution must be positive");
  VoxelGrid grid(resolution);
  if (!fill_interior) {
    std::vector<std::uint8_t> cells(static_cast<std::size_t>(grid.size()), 0);
    rasterize_surface(mesh, resolution, cells);
    for (Index i = 0; i < grid.size(); ++i) grid.set(i, cells[i] != 0);
    return grid;
  }

  const Index fine = resolution * kFillSupersample;
  std::vector<std::uint8_t> cells(static_cast<std::size_t>(fine * fine * fine), 0);
  rasterize_surface(mesh, fine, cells);
  const auto outside = exterior(cells, fine);
  const Index half = kFillSupersample * kFillSupersample * kFillSupersample / 2;
  for (Index z = 0; z < resolution; ++z) {
    for (Index y = 0; y < resolution; ++y) {
      for (Index x = 0; x < resolution; ++x) {
        Index inside = 0;
        for (Index dz = 0; dz < kFillSupersample; ++dz) {
          for (Index dy = 0; dy < kFillSupersample; ++dy) {
            for (Index dx = 0; dx < kFillSupersample; ++dx) {
              const Index fx = x * kFillSupersample + dx;
              const Index fy = y * kFillSupersample + dy;
              const Index fz = z * kFillSupersample + dz;
              inside += outside[fx + fine * (fy + fine * fz)] ? 0 : 1;
            }
          }
        }
        grid.set(x, y, z, inside >= half);
      }
    }
  }
  return grid;
}

namespace {

void check_threshold(double t) {
  if (!(t > 0.0 && t < 1.0)) {
    throw Error(Errc::ThresholdOutOfRange, "threshold " + std::to_string(t) + " not in (0, 1)");
  }
}

}  // namespace

VoxelGrid binarize(const ProbGrid& p, double threshold) {
  check_threshold(threshold);
  VoxelGrid g(p.resolution());
  for (Index i = 0; i < g.size(); ++i) g.set(i, p[i] > threshold);
  return g;
}

double iou(const ProbGrid& pred, const VoxelGrid& gt, double threshold) {
  if (pred.resolution() != gt.resolution()) {
    throw Error(Errc::ResolutionMismatch, std::to_string(pred.resolution()) + " vs " +
                                              std::to_string(gt.resolution()));
  }
  const VoxelGrid b = binarize(pred, threshold);
  Index inter = 0, uni = 0;
  for (Index i = 0; i < b.size(); ++i) {
    inter += (b[i] && gt[i]) ? 1 : 0;
    uni += (b[i] || gt[i]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

PointSet voxel_to_points(const VoxelGrid& g) {
  PointSet pts(3, g.count());
  const Index r = g.resolution();
  const double inv = 1.0 / static_cast<double>(r);
  Eigen::Index col = 0;
  for (Index z = 0; z < r; ++z) {
    for (Index y = 0; y < r; ++y) {
      for (Index x = 0; x < r; ++x) {
        if (g(x, y, z)) {
          pts.col(col++) << (static_cast<double>(x) + 0.5) * inv, (static_cast<double>(y) + 0.5) * inv,
              (static_cast<double>(z) + 0.5) * inv;
        }
      }
    }
  }
  return pts;
}

namespace {

/// Bucket grid with cell size equal to the query distance, so a neighbour
/// closer than d is always within the 27 surrounding buckets.
class PointBuckets {
 public:
  PointBuckets(const PointSet& pts, double cell) : pts_(pts), cell_(cell) {
    for (Eigen::Index i = 0; i < pts.cols(); ++i) buckets_[key(bucket(pts.col(i)))].push_back(i);
  }

  bool any_within(const Eigen::Vector3d& q, double d) const {
    const double d2 = d * d;
    const auto b = bucket(q);
    for (std::int64_t dz = -1; dz <= 1; ++dz) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          const auto it = buckets_.find(key({b[0] + dx, b[1] + dy, b[2] + dz}));
          if (it == buckets_.end()) continue;
          for (const Eigen::Index j : it->second) {
            if ((pts_.col(j) - q).squaredNorm() < d2) return true;
          }
        }
      }
    }
    return false;
  }

 private:
  std::array<std::int64_t, 3> bucket(const Eigen::Vector3d& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)),
            static_cast<std::int64_t>(std::floor(p.y() / cell_)),
            static_cast<std::int64_t>(std::floor(p.z() / cell_))};
  }
  static std::uint64_t key(const std::array<std::int64_t, 3>& b) {
    constexpr std::int64_t off = 1 << 20;
    return (static_cast<std::uint64_t>(b[0] + off) << 42) |
           (static_cast<std::uint64_t>(b[1] + off) << 21) | static_cast<std::uint64_t>(b[2] + off);
  }

  const PointSet& pts_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<Eigen::Index>> buckets_;
};

double matched_fraction(const PointSet& from, const PointBuckets& to, double d) {
  Index hit = 0;
  for (Eigen::Index i = 0; i < from.cols(); ++i) hit += to.any_within(from.col(i), d) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(from.cols());
}

}  // namespace

FScoreResult fscore_detail(const PointSet& rec, const PointSet& gt, double distance) {
  if (!(distance > 0.0)) throw Error(Errc::NonPositiveDistance, "F-Score distance must be positive");
  if (rec.cols() == 0 && gt.cols() == 0) return {1.0, 1.0, 1.0};
  if (rec.cols() == 0 || gt.cols() == 0) return {};
  FScoreResult r;
  r.precision = matched_fraction(rec, PointBuckets(gt, distance), distance);
  r.recall = matched_fraction(gt, PointBuckets(rec, distance), distance);
  const double sum = r.precision + r.recall;
  r.fscore = sum > 0.0 ? 2.0 * r.precision * r.recall / sum : 0.0;
  return r;
}

double fscore(const PointSet& rec, const PointSet& gt, double distance) {
  return fscore_detail(rec, gt, distance).fscore;
}

namespace {
constexpr const char* kVoxelMagic = "E2VVOX1";
}

std::vector<std::uint8_t> encode_voxel_grid(const VoxelGrid& g) {
  detail::ByteWriter w;
  w.magic(kVoxelMagic);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(g.resolution()));
  std::vector<std::uint8_t> packed((static_cast<std::size_t>(g.size()) + 7) / 8, 0);
  for (Index i = 0; i < g.size(); ++i) {
    if (g[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  w.bytes(packed.data(), packed.size());
  return std::move(w.buffer());
}

VoxelGrid decode_voxel_grid(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  detail::ByteReader r(bytes, context);
  r.expect_magic(kVoxelMagic);
  const Index res = r.get<std::uint16_t>();
  if (res == 0) throw Error(Errc::ResolutionZero, context + ": resolution 0");
  VoxelGrid g(res);
  std::vector<std::uint8_t> packed((static_cast<std::size_t>(g.size()) + 7) / 8);
  r.bytes(packed.data(), packed.size());
  r.expect_end();
  for (Index i = 0; i < g.size(); ++i) g.set(i, (packed[i / 8] >> (i % 8)) & 1u);
  return g;
}

void write_voxel_file(const std::string& path, const VoxelGrid& g) {
  detail::write_file(path, encode_voxel_grid(g));
}

VoxelGrid read_voxel_file(const std::string& path) {
  return decode_voxel_grid(detail::read_file(path), path);
}

std::string voxels_to_obj(const VoxelGrid& g) {
  std::string out = "# " + std::to_string(g.count()) + " occupied voxels at resolution " +
                    std::to_string(g.resolution()) + "\n";
  const double h = 1.0 / static_cast<double>(g.resolution());
  // corner order: bit 0 -> x, bit 1 -> y, bit 2 -> z
  static constexpr int kFaces[12][3] = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6},
                                        {0, 1, 5}, {0, 5, 4}, {2, 6, 7}, {2, 7, 3},
                                        {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  long long base = 0;
  char line[128];
  const Index r = g.resolution();
  for (Index z = 0; z < r; ++z) {
    for (Index y = 0; y < r; ++y) {
      for (Index x = 0; x < r; ++x) {
        if (!g(x, y, z)) continue;
        const double cx = (static_cast<double>(x) + 0.5) * h;
        const double cy = (static_cast<double>(y) + 0.5) * h;
        const double cz = (static_cast<double>(z) + 0.5) * h;
        for (int c = 0; c < 8; ++c) {
          std::snprintf(line, sizeof(line), "v %.9g %.9g %.9g\n", cx + ((c & 1) ? 0.5 : -0.5) * h,
                        cy + ((c & 2) ? 0.5 : -0.5) * h, cz + ((c & 4) ? 0.5 : -0.5) * h);
          out += line;
        }
        for (const auto& f : kFaces) {
          std::snprintf(line, sizeof(line), "f %lld %lld %lld\n", base + f[0] + 1, base + f[1] + 1,
                        base + f[2] + 1);
          out += line;
        }
        base += 8;
      }
    }
  }
  return out;
}

}  // namespace e2v
