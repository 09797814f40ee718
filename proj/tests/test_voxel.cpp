#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <deque>
#include <numbers>

#include "e2v/voxel.hpp"

using namespace e2v;

namespace {

template <typename F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::BadFormat;
}

// latitude/longitude sphere, closed and convex
TriMesh uv_sphere(const Eigen::Vector3d& c, double r, int rings, int segments) {
  std::vector<Eigen::Vector3d> v{c + Eigen::Vector3d(0, 0, r)};
  for (int i = 1; i < rings; ++i) {
    const double th = std::numbers::pi * i / rings;
    for (int j = 0; j < segments; ++j) {
      const double ph = 2 * std::numbers::pi * j / segments;
      v.push_back(c + r * Eigen::Vector3d(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)));
    }
  }
  v.push_back(c - Eigen::Vector3d(0, 0, r));
  TriMesh m;
  m.vertices.resize(3, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m.vertices.col(static_cast<Eigen::Index>(i)) = v[i];
  auto ring = [&](int i, int j) { return 1 + (i - 1) * segments + (j % segments); };
  const int south = static_cast<int>(v.size()) - 1;
  for (int j = 0; j < segments; ++j) {
    m.triangles.push_back({0, ring(1, j), ring(1, j + 1)});
    m.triangles.push_back({south, ring(rings - 1, j + 1), ring(rings - 1, j)});
    for (int i = 1; i + 1 < rings; ++i) {
      m.triangles.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      m.triangles.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  }
  return m;
}

TriMesh unit_cube() {
  return parse_obj(
      "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nv 0 0 1\nv 1 0 1\nv 0 1 1\nv 1 1 1\n"
      "f 1 3 4 2\nf 5 6 8 7\nf 1 2 6 5\nf 3 7 8 4\nf 1 5 7 3\nf 2 4 8 6\n");
}

ProbGrid random_prob(Rng& rng, Index r) {
  Eigen::ArrayXd v(r * r * r);
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.uniform();
  return ProbGrid(r, v);
}

VoxelGrid random_grid(Rng& rng, Index r, double density) {
  VoxelGrid g(r);
  for (Index i = 0; i < g.size(); ++i) g.set(i, rng.uniform() < density);
  return g;
}

PointSet random_points(Rng& rng, Index n) {
  PointSet p(3, n);
  for (Index i = 0; i < n; ++i) p.col(i) = Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform());
  return p;
}

double brute_fscore(const PointSet& a, const PointSet& b, double d) {
  if (a.cols() == 0 && b.cols() == 0) return 1.0;
  if (a.cols() == 0 || b.cols() == 0) return 0.0;
  auto frac = [d](const PointSet& from, const PointSet& to) {
    Index hit = 0;
    for (Index i = 0; i < from.cols(); ++i) {
      bool any = false;
      for (Index j = 0; j < to.cols() && !any; ++j) any = (from.col(i) - to.col(j)).norm() < d;
      hit += any;
    }
    return static_cast<double>(hit) / static_cast<double>(from.cols());
  };
  const double p = frac(a, b), r = frac(b, a);
  return p + r == 0 ? 0.0 : 2 * p * r / (p + r);
}

}  // namespace

TEST_SUITE("parse_obj") {
  TEST_CASE("minimal triangle") {
    const auto m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3");
    CHECK(m.vertex_count() == 3);
    REQUIRE(m.triangles.size() == 1);
    CHECK(m.triangles[0] == std::array<std::int32_t, 3>{0, 1, 2});
  }

  TEST_CASE("quad fans into (1,2,3) and (1,3,4)") {
    const auto m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
    REQUIRE(m.triangles.size() == 2);
    CHECK(m.triangles[0] == std::array<std::int32_t, 3>{0, 1, 2});
    CHECK(m.triangles[1] == std::array<std::int32_t, 3>{0, 2, 3});
  }

  TEST_CASE("negative indices count back from the current vertex") {
    const auto m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -1 -2 -3\n");
    CHECK(m.triangles[0] == std::array<std::int32_t, 3>{2, 1, 0});
  }

  TEST_CASE("texture, normal and material records are ignored") {
    const auto m = parse_obj(
        "# comment\nmtllib x.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nusemtl a\ng grp\nf 1/1/1 2/1/1 3//1\n");
    CHECK(m.triangles.size() == 1);
  }

  TEST_CASE("errors") {
    CHECK(error_of([] { parse_obj("v 0 zero 0\n"); }) == Errc::MalformedLine);
    CHECK(error_of([] { parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n"); }) == Errc::IndexOutOfRange);
    CHECK(error_of([] { parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n"); }) == Errc::IndexOutOfRange);
    CHECK(error_of([] { parse_obj("v 0 0 0\n"); }) == Errc::EmptyMesh);
    CHECK(error_of([] { parse_obj(""); }) == Errc::EmptyMesh);
    CHECK(error_of([] { read_obj_file("missing/mesh.obj"); }) == Errc::IoFailure);
  }
}

TEST_SUITE("normalize_mesh") {
  TEST_CASE("unit cube is unchanged") {
    const auto m = unit_cube();
    CHECK((normalize_mesh(m).vertices - m.vertices).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("extent 2 scales by one half") {
    auto m = unit_cube();
    m.vertices *= 2.0;
    const auto n = normalize_mesh(m);
    CHECK((n.vertices - unit_cube().vertices).cwiseAbs().maxCoeff() < 1e-15);
  }

  TEST_CASE("random meshes end up centred with unit longest extent") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      TriMesh m;
      m.vertices.resize(3, 10);
      for (Index i = 0; i < 10; ++i)
        m.vertices.col(i) = Eigen::Vector3d(rng.uniform(-3, 5), rng.uniform(-1, 1) * 0.2, rng.uniform(10, 12));
      m.triangles = {{0, 1, 2}};
      const auto n = normalize_mesh(m);
      const Eigen::Vector3d lo = n.vertices.rowwise().minCoeff(), hi = n.vertices.rowwise().maxCoeff();
      CHECK(std::abs((hi - lo).maxCoeff() - 1.0) < 1e-9);
      CHECK(((lo + hi) / 2 - Eigen::Vector3d::Constant(0.5)).norm() < 1e-9);
      // aspect ratio preserved
      const Eigen::Vector3d e0 = m.vertices.rowwise().maxCoeff() - m.vertices.rowwise().minCoeff();
      CHECK(((hi - lo) - e0 / e0.maxCoeff()).norm() < 1e-9);
    }
  }

  TEST_CASE("degenerate extent and empty mesh") {
    TriMesh m;
    m.vertices = Eigen::Matrix3Xd::Ones(3, 3);
    m.triangles = {{0, 1, 2}};
    CHECK(error_of([&] { normalize_mesh(m); }) == Errc::DegenerateExtent);
    CHECK(error_of([] { normalize_mesh(TriMesh{}); }) == Errc::EmptyMesh);
  }
}

TEST_SUITE("voxelize") {
  TEST_CASE("filled unit cube at R=4 occupies all 64 cells") {
    CHECK(voxelize(unit_cube(), 4, true).count() == 64);
  }

  TEST_CASE("tiny triangle marks only its own cell") {
    TriMesh m;
    m.vertices.resize(3, 3);
    m.vertices << 0.51, 0.53, 0.52, 0.26, 0.27, 0.29, 0.76, 0.76, 0.77;
    m.triangles = {{0, 1, 2}};
    const auto g = voxelize(m, 4, false);
    // oracle: dense barycentric sampling
    VoxelGrid ref(4);
    for (int i = 0; i <= 200; ++i)
      for (int j = 0; i + j <= 200; ++j) {
        const Eigen::Vector3d p = m.vertices.col(0) + (i / 200.0) * (m.vertices.col(1) - m.vertices.col(0)) +
                                  (j / 200.0) * (m.vertices.col(2) - m.vertices.col(0));
        ref.set(static_cast<Index>(p.x() * 4), static_cast<Index>(p.y() * 4), static_cast<Index>(p.z() * 4));
      }
    CHECK(g == ref);
    CHECK(g.count() == 1);
    CHECK(g(2, 1, 3));
  }

  TEST_CASE("unit-diameter sphere at R=32 is within 5% of the ball volume") {
    const auto g = voxelize(uv_sphere(Eigen::Vector3d::Constant(0.5), 0.5, 48, 96), 32, true);
    const double analytic = std::numbers::pi / 6 * 32 * 32 * 32;
    CHECK(analytic == doctest::Approx(17157).epsilon(1e-4));
    CHECK(std::abs(static_cast<double>(g.count()) - analytic) / analytic < 0.05);
  }

  TEST_CASE("filled convex mesh is one 6-connected solid without holes") {
    const auto g = voxelize(uv_sphere(Eigen::Vector3d(0.45, 0.5, 0.55), 0.35, 24, 48), 24, true);
    const Index r = 24;
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(g.size()), 0);
    auto flood = [&](Index start, bool occupied) {
      std::deque<Index> q{start};
      seen[start] = 1;
      Index n = 0;
      while (!q.empty()) {
        const Index i = q.front();
        q.pop_front();
        ++n;
        const Index x = i % r, y = (i / r) % r, z = i / (r * r);
        const Index nb[6][3] = {{x - 1, y, z}, {x + 1, y, z}, {x, y - 1, z}, {x, y + 1, z}, {x, y, z - 1}, {x, y, z + 1}};
        for (const auto& c : nb) {
          if (c[0] < 0 || c[1] < 0 || c[2] < 0 || c[0] >= r || c[1] >= r || c[2] >= r) continue;
          const Index j = static_cast<Index>(g.offset(c[0], c[1], c[2]));
          if (!seen[j] && g[j] == occupied) {
            seen[j] = 1;
            q.push_back(j);
          }
        }
      }
      return n;
    };
    const Index centre = static_cast<Index>(g.offset(11, 12, 13));
    REQUIRE(g[centre]);
    CHECK(flood(centre, true) == g.count());
    // every empty cell connects to the boundary
    std::fill(seen.begin(), seen.end(), 0);
    CHECK(flood(0, false) == g.size() - g.count());
  }

  TEST_CASE("resolution zero") {
    CHECK(error_of([] { voxelize(unit_cube(), 0, true); }) == Errc::ResolutionZero);
  }
}

TEST_SUITE("metrics") {
  TEST_CASE("binarize is strict") {
    CHECK(binarize(ProbGrid(2, Eigen::ArrayXd::Constant(8, 0.9)), 0.3).count() == 8);
    CHECK(binarize(ProbGrid(2, Eigen::ArrayXd::Constant(8, 0.3)), 0.3).count() == 0);
    Rng rng(1);
    const auto p = random_prob(rng, 8);
    const auto b = binarize(p, 0.3);
    for (Index i = 0; i < p.values().size(); ++i) CHECK(b[i] == (p[i] > 0.3));
    CHECK(error_of([&] { binarize(p, 0.0); }) == Errc::ThresholdOutOfRange);
    CHECK(error_of([&] { binarize(p, 1.0); }) == Errc::ThresholdOutOfRange);
  }

  TEST_CASE("probabilities outside [0, 1] are rejected") {
    CHECK_THROWS_AS(ProbGrid(1, Eigen::ArrayXd::Constant(1, 1.5)), Error);
    CHECK_THROWS_AS(ProbGrid(2, Eigen::ArrayXd::Constant(7, 0.5)), Error);
  }

  TEST_CASE("iou spot values") {
    VoxelGrid gt(4);
    gt.set(1, 1, 1);
    CHECK(iou(ProbGrid::from_voxels(gt), gt, 0.3) == 1.0);
    VoxelGrid other(4);
    other.set(2, 2, 2);
    CHECK(iou(ProbGrid::from_voxels(other), gt, 0.3) == 0.0);
    other.set(1, 1, 1);
    CHECK(iou(ProbGrid::from_voxels(other), gt, 0.3) == 0.5);
    CHECK(iou(ProbGrid::from_voxels(VoxelGrid(4)), VoxelGrid(4), 0.3) == 1.0);
    CHECK(iou(ProbGrid::from_voxels(VoxelGrid(4)), gt, 0.3) == 0.0);
    CHECK(error_of([&] { iou(ProbGrid::from_voxels(VoxelGrid(2)), gt, 0.3); }) == Errc::ResolutionMismatch);
  }

  TEST_CASE("iou matches a direct evaluation over raw probabilities and is symmetric") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      const auto p = random_prob(rng, 8);
      const auto g = random_grid(rng, 8, 0.4);
      double inter = 0, uni = 0;
      for (Index i = 0; i < g.size(); ++i) {
        const bool a = p[i] > 0.3, b = g[i];
        inter += a && b;
        uni += a || b;
      }
      CHECK(iou(p, g, 0.3) == doctest::Approx(inter / uni).epsilon(1e-15));
      CHECK(iou(ProbGrid::from_voxels(g), binarize(p, 0.3), 0.5) == iou(p, g, 0.3));
      CHECK(iou(ProbGrid::from_voxels(g), g, 0.3) == 1.0);
    }
  }

  TEST_CASE("voxel_to_points") {
    CHECK(voxel_to_points(VoxelGrid(32)).cols() == 0);
    VoxelGrid g(32);
    g.set(0, 0, 0);
    const auto p = voxel_to_points(g);
    REQUIRE(p.cols() == 1);
    CHECK((p.col(0) - Eigen::Vector3d::Constant(1.0 / 64)).norm() == 0.0);
    Rng rng(3);
    const auto r = random_grid(rng, 16, 0.2);
    const auto pts = voxel_to_points(r);
    CHECK(pts.cols() == r.count());
    CHECK(pts.minCoeff() > 0.0);
    CHECK(pts.maxCoeff() < 1.0);
  }

  TEST_CASE("fscore spot values") {
    Rng rng(4);
    const auto a = random_points(rng, 12);
    CHECK(fscore(a, a, 1e-6) == 1.0);
    PointSet p(3, 1), q(3, 1);
    p.col(0) << 0.2, 0.5, 0.5;
    q.col(0) << 0.5, 0.5, 0.5;
    CHECK(fscore(p, q, 0.2) == 0.0);
    CHECK(fscore(p, q, 0.4) == 1.0);
    CHECK(fscore(PointSet(3, 0), PointSet(3, 0), 0.2) == 1.0);
    CHECK(fscore(PointSet(3, 0), q, 0.2) == 0.0);
    CHECK(error_of([&] { fscore(p, q, 0.0); }) == Errc::NonPositiveDistance);
  }

  TEST_CASE("fscore matches the brute-force double loop, is symmetric and monotone in d") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed + 100);
      const auto a = random_points(rng, 20), b = random_points(rng, 20);
      const double f = fscore(a, b, 0.2);
      CHECK(f == doctest::Approx(brute_fscore(a, b, 0.2)).epsilon(1e-14));
      CHECK(f == fscore(b, a, 0.2));
      double prev = 0;
      for (double d : {0.05, 0.1, 0.2, 0.3, 0.5, 1.0}) {
        const double fd = fscore(a, b, d);
        CHECK(fd >= prev);
        CHECK(fd <= 1.0);
        prev = fd;
      }
    }
  }

  TEST_CASE("fscore on voxel centres agrees with the brute force at grid scale") {
    Rng rng(5);
    const auto g1 = random_grid(rng, 12, 0.05), g2 = random_grid(rng, 12, 0.05);
    const auto a = voxel_to_points(g1), b = voxel_to_points(g2);
    CHECK(fscore(a, b, 0.2) == doctest::Approx(brute_fscore(a, b, 0.2)).epsilon(1e-14));
    CHECK(fscore(a, b, 0.05) == doctest::Approx(brute_fscore(a, b, 0.05)).epsilon(1e-14));
  }
}

TEST_SUITE("voxel io") {
  TEST_CASE("VOX1 layout and round-trip") {
    VoxelGrid g(4);
    g.set(0, 0, 0);
    g.set(1, 0, 0);
    g.set(3, 3, 3);
    const auto bytes = encode_voxel_grid(g);
    REQUIRE(bytes.size() == 8 + 2 + 8);
    CHECK(std::string(reinterpret_cast<const char*>(bytes.data()), 8) == std::string("E2VVOX1\0", 8));
    CHECK(bytes[8] == 4);
    CHECK(bytes[10] == 0x03);
    CHECK(bytes[17] == 0x80);
    CHECK(decode_voxel_grid(bytes) == g);
    auto longer = bytes;
    longer.push_back(0);
    CHECK(error_of([&] { decode_voxel_grid(longer); }) == Errc::BadFormat);
    write_voxel_file("vox_roundtrip_test.vox", g);
    CHECK(read_voxel_file("vox_roundtrip_test.vox") == g);
    std::remove("vox_roundtrip_test.vox");
  }

  TEST_CASE("cube export has 8 vertices and 12 faces per voxel") {
    Rng rng(6);
    const auto g = random_grid(rng, 6, 0.1);
    const auto obj = voxels_to_obj(g);
    const auto m = parse_obj(obj);
    CHECK(m.vertex_count() == 8 * g.count());
    CHECK(static_cast<Index>(m.triangles.size()) == 12 * g.count());
  }
}
