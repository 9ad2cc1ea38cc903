#include "rnrr/geodesics.hpp"
#include "support/shapes.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace rnrr;
namespace shapes = rnrr::testing;

TEST(Geodesic, PolylineFromEnd) {
  const Surface s = shapes::polyline(4);
  const GeodesicField f = geodesic_from(s, 0);
  EXPECT_EQ(f.source_vertex, 0);
  EXPECT_EQ(f.distances, (std::vector<double>{0, 1, 2, 3}));
  EXPECT_EQ(GeodesicEngine(s).method(), GeodesicMethod::edge_dijkstra);
}

TEST(Geodesic, PolylineCap) {
  const GeodesicField f = geodesic_from(shapes::polyline(4), 0, 1.5);
  ASSERT_EQ(f.distances.size(), 4u);
  EXPECT_EQ(f.distances[0], 0.0);
  EXPECT_EQ(f.distances[1], 1.0);
  EXPECT_EQ(f.distances[2], kInfinity);
  EXPECT_EQ(f.distances[3], kInfinity);
  EXPECT_EQ(f.capped_at, 1.5);
}

TEST(Geodesic, GridCornerToCornerWithinTwoPercent) {
  const int n = 20;
  const Surface s = shapes::grid_mesh(n, n, 0.1);
  const GeodesicEngine engine(s);
  EXPECT_EQ(engine.method(), GeodesicMethod::fast_marching);
  const GeodesicField f = engine.from(0);
  const double exact = std::sqrt(2.0) * n * 0.1;
  EXPECT_NEAR(f.distances.back(), exact, 0.02 * exact);
  // Straight along an edge the march is exact.
  EXPECT_NEAR(f.distances[n], n * 0.1, 1e-12);
}

TEST(Geodesic, GridInteriorPointsCloseToEuclidean) {
  const Surface s = shapes::grid_mesh(16, 16, 1.0);
  const GeodesicField f = geodesic_from(s, 8 * 17 + 8);  // center
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double e = (s.vertices[i] - s.vertices[8 * 17 + 8]).norm();
    EXPECT_GE(f.distances[i], e - 1e-9);
    EXPECT_LE(f.distances[i], 1.05 * e + 1e-12);
  }
}

TEST(Geodesic, DisconnectedIsInfinite) {
  Surface s = shapes::polyline(4);
  s.vertices.emplace_back(10, 0, 0);
  s.vertices.emplace_back(11, 0, 0);
  s.edges.push_back({4, 5});
  const GeodesicField f = geodesic_from(s, 0);
  EXPECT_EQ(f.distances[4], kInfinity);
  EXPECT_EQ(f.distances[5], kInfinity);
  EXPECT_EQ(geodesic_from(s, 5).distances[4], 1.0);
}

TEST(Geodesic, Errors) {
  Surface one;
  one.vertices = {Vec3(0, 0, 0)};
  EXPECT_THROW(geodesic_from(one, 0), DegenerateInput);
  EXPECT_THROW(geodesic_from(shapes::polyline(3), 3), InvalidInput);
  EXPECT_THROW(geodesic_from(shapes::polyline(3), -1), InvalidInput);
}

TEST(Geodesic, PointCloudUsesKnnGraph) {
  Surface s;
  for (int i = 0; i < 30; ++i) s.vertices.emplace_back(i * 0.5, 0, 0);
  const GeodesicEngine engine(s);
  EXPECT_EQ(engine.method(), GeodesicMethod::knn_dijkstra);
  const GeodesicField f = engine.from(0);
  for (int i = 0; i < 30; ++i) EXPECT_NEAR(f.distances[i], i * 0.5, 1e-12);
}

TEST(MultiSource, SingleSeedEqualsGeodesicFrom) {
  const Surface s = shapes::random_mesh(6, 6, 4);
  const std::vector<int> seeds{7};
  EXPECT_EQ(multi_source_geodesic(s, seeds), geodesic_from(s, 7).distances);
}

TEST(MultiSource, PolylineBothEnds) {
  const std::vector<int> seeds{0, 3};
  EXPECT_EQ(multi_source_geodesic(shapes::polyline(4), seeds), (std::vector<double>{0, 1, 1, 0}));
}

TEST(MultiSource, EmptySeedsRejected) {
  EXPECT_THROW(multi_source_geodesic(shapes::polyline(4), std::vector<int>{}), InvalidInput);
}

TEST(MultiSource, EqualsBruteForceMinimum) {
  // Meshes up to 200 vertices, every seed set checked against per-seed fields.
  std::mt19937 rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    const int nx = 3 + trial % 5, ny = 3 + (trial * 7) % 9;  // up to 7x11 cells = 96 vertices
    const Surface s = shapes::random_mesh(nx, ny, 100 + trial);
    const int n = static_cast<int>(s.size());
    const GeodesicEngine engine(s);
    std::vector<std::vector<double>> single(n);
    for (int v = 0; v < n; ++v) single[v] = engine.from(v).distances;
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int k = 1; k <= 4; ++k) {
      std::vector<int> seeds;
      for (int j = 0; j < k; ++j) seeds.push_back(pick(rng));
      MultiSourceGeodesic acc(engine, std::nullopt);
      for (int sd : seeds) acc.add_seed(sd);
      for (int v = 0; v < n; ++v) {
        double m = kInfinity;
        for (int sd : seeds) m = std::min(m, single[sd][v]);
        EXPECT_EQ(acc.distances()[v], m);
      }
    }
  }
}

TEST(MultiSource, ExhaustiveSeedPairsOn200Vertices) {
  const Surface s = shapes::random_mesh(19, 9, 5);  // 20 x 10 = 200 vertices
  ASSERT_EQ(s.size(), 200u);
  const GeodesicEngine engine(s);
  std::vector<std::vector<double>> single(200);
  for (int v = 0; v < 200; ++v) single[v] = engine.from(v).distances;
  for (int a = 0; a < 200; a += 7)
    for (int b = a + 1; b < 200; b += 13) {
      MultiSourceGeodesic acc(engine, std::nullopt);
      acc.add_seed(a);
      acc.add_seed(b);
      for (int v = 0; v < 200; ++v) ASSERT_EQ(acc.distances()[v], std::min(single[a][v], single[b][v]));
    }
}

class GeodesicInvariants : public ::testing::TestWithParam<int> {};

TEST_P(GeodesicInvariants, HoldOnRandomMeshes) {
  const Surface s = shapes::random_mesh(8, 7, GetParam());
  const GeodesicEngine engine(s);
  for (int seed : {0, 17, 40, static_cast<int>(s.size()) - 1}) {
    const GeodesicField f = engine.from(seed);
    const std::vector<double> dij = engine.edge_path_distances(seed);
    EXPECT_EQ(f.distances[seed], 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
      ASSERT_TRUE(std::isfinite(f.distances[i]));
      EXPECT_GE(f.distances[i], 0.0);
      // Edge paths upper-bound the march, which may cut across triangles.
      EXPECT_LE(f.distances[i], dij[i] + 1e-6);
      // Never shorter than the straight line.
      EXPECT_GE(f.distances[i], (s.vertices[i] - s.vertices[seed]).norm() - 1e-9);
    }
    for (const Edge& e : s.edges) {
      const double len = (s.vertices[e[0]] - s.vertices[e[1]]).norm();
      EXPECT_LE(std::abs(f.distances[e[0]] - f.distances[e[1]]), len + 1e-6);
    }
    // The cap truncates without changing values below it.
    const double cap = 2.5;
    const GeodesicField c = engine.from(seed, cap);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (f.distances[i] <= cap)
        EXPECT_EQ(c.distances[i], f.distances[i]);
      else
        EXPECT_EQ(c.distances[i], kInfinity);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, GeodesicInvariants, ::testing::Values(1, 2, 3, 4, 5));

TEST(TriangleUpdate, PointSourceThroughEdgeIsExact) {
  // Source at the origin; c is reached straight through edge ab.
  const Vec3 a(1, -1, 0), b(1, 1, 0), c(2, 0, 0);
  const double d2 = detail::triangle_update(a, a.norm(), b, b.norm(), c);
  EXPECT_NEAR(d2, 2.0, 1e-12);
  // Ray misses segment ab: falls back to the shorter edge path.
  const Vec3 a3(1, 0.5, 0), b3(1, 1, 0), c3(2, -1, 0);
  const double d3 = detail::triangle_update(a3, a3.norm(), b3, b3.norm(), c3);
  EXPECT_NEAR(d3, std::min(a3.norm() + (c3 - a3).norm(), b3.norm() + (c3 - b3).norm()), 1e-12);
}
