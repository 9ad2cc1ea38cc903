#include "rnrr/correspondence.hpp"
#include "rnrr/graph.hpp"
#include "support/shapes.hpp"
#include "support/tempdir.hpp"

#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include <fstream>
#include <numbers>
#include <random>

using namespace rnrr;
namespace shapes = rnrr::testing;

namespace {

int brute_nearest(const Points& pts, const Vec3& q) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(pts.size()); ++i)
    if ((pts[i] - q).squaredNorm() < (pts[best] - q).squaredNorm()) best = i;
  return best;
}

RigidTransform make_rigid(double deg, const Vec3& axis, const Vec3& t) {
  return {Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, axis.normalized()).toRotationMatrix(), t};
}

Surface apply(const RigidTransform& rt, Surface s) {
  for (Vec3& p : s.vertices) p = rt.apply(p);
  for (Vec3& nv : s.normals) nv = rt.rotation * nv;
  return s;
}

double transform_error(const RigidTransform& a, const RigidTransform& b) {
  return std::max((a.rotation - b.rotation).norm(), (a.translation - b.translation).norm());
}

// Normalized, asymmetric test shape with irregular sampling. A regular
// latitude/longitude grid lets point-to-point ICP lock onto a rotation by one
// grid step, so vertices are jittered.
Surface blob() {
  Surface s = shapes::bumpy_sphere(20, 40, 1.0, 0.15);
  std::mt19937 rng(3);
  std::normal_distribution<double> g(0.0, 0.05);
  for (Vec3& p : s.vertices) p += Vec3(g(rng), g(rng), g(rng));
  return compute_normals(normalize_pair(s, s).source);
}

}  // namespace

TEST(KdTree, QueryInSetReturnsItself) {
  const Points pts = shapes::random_points(500, 1);
  const KdTree tree(pts);
  for (int i = 0; i < 500; i += 37) {
    const Neighbor nb = tree.nearest(pts[i]);
    EXPECT_EQ(nb.index, i);
    EXPECT_EQ(nb.squared_distance, 0.0);
  }
}

TEST(KdTree, MatchesBruteForce) {
  for (unsigned seed : {1u, 2u, 3u}) {
    const Points pts = shapes::random_points(1000, seed);
    const Points queries = shapes::random_points(100, seed + 100, -1.5, 1.5);
    const KdTree tree(pts);
    for (const Vec3& q : queries) EXPECT_EQ(tree.nearest(q).index, brute_nearest(pts, q));
  }
}

TEST(KdTree, ExhaustiveUpTo2000Points) {
  const Points pts = shapes::random_points(2000, 9);
  const KdTree tree(pts);
  const Points queries = shapes::random_points(2000, 10, -1.2, 1.2);
  for (const Vec3& q : queries) ASSERT_EQ(tree.nearest(q).index, brute_nearest(pts, q));
}

TEST(KdTree, TieGoesToLowestIndex) {
  Points pts{Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(1, 0, 0)};
  const KdTree tree(pts);
  EXPECT_EQ(tree.nearest(Vec3(0, 0, 0)).index, 0);
  EXPECT_EQ(tree.nearest(Vec3(2, 0, 0)).index, 0);  // duplicate point at index 3
  // Larger grid with many exact ties.
  Points grid;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) grid.emplace_back(i, j, 0);
  const KdTree gt(grid);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) {
      const Vec3 q(i + 0.5, j + 0.5, 0);  // four equidistant neighbours
      EXPECT_EQ(gt.nearest(q).index, i * 10 + j);
    }
}

TEST(KdTree, KnnSortedAndExact) {
  const Points pts = shapes::random_points(300, 4);
  const KdTree tree(pts);
  const Vec3 q(0.1, -0.2, 0.3);
  const auto nb = tree.knn(q, 10);
  ASSERT_EQ(nb.size(), 10u);
  std::vector<std::pair<double, int>> all;
  for (int i = 0; i < 300; ++i) all.push_back({(pts[i] - q).squaredNorm(), i});
  std::sort(all.begin(), all.end());
  for (int k = 0; k < 10; ++k) EXPECT_EQ(nb[k].index, all[k].second);
}

TEST(KdTree, EmptyIsInvalid) { EXPECT_THROW(KdTree(Points{}), InvalidInput); }

TEST(FindCorrespondences, CoincidentAndThresholds) {
  Surface target;
  target.vertices = {Vec3(0, 0, 0), Vec3(10, 0, 0)};
  target.normals = {Vec3(0, 0, 1), Vec3(0, 0, 1)};
  const KdTree index(target.vertices);
  const Points q{Vec3(0, 0, 0), Vec3(0.5, 0, 0), Vec3(10, 0, 0)};
  const Points qn{Vec3(0, 0, 1), Vec3(0, 0, 1), Vec3(0, 0, -1)};
  const CorrespondenceSet c = find_correspondences(q, target, index, Rejection{0.3, 60.0, qn});
  EXPECT_TRUE(c.valid[0]);
  EXPECT_EQ(c.distance[0], 0.0);
  EXPECT_FALSE(c.valid[1]);  // 0.5 > 0.3
  EXPECT_NEAR(c.distance[1], 0.5, 1e-15);
  EXPECT_FALSE(c.valid[2]);  // anti-parallel at distance 0
  EXPECT_EQ(c.distance[2], 0.0);
  EXPECT_EQ(c.target_index, (std::vector<int>{0, 0, 1}));
  EXPECT_EQ(c.valid_count(), 1u);

  const CorrespondenceSet all = find_correspondences(q, target, index);
  EXPECT_EQ(all.valid_count(), 3u);
}

TEST(FindCorrespondences, MissingNormalsRejected) {
  Surface target;
  target.vertices = {Vec3(0, 0, 0)};
  const KdTree index(target.vertices);
  const Points q{Vec3(0, 0, 0)};
  EXPECT_THROW(find_correspondences(q, target, index, Rejection{0.3, 60.0, {}}), InvalidInput);
  // Distance-only rejection needs no normals.
  EXPECT_NO_THROW(find_correspondences(q, target, index, Rejection{0.3, 180.0, {}}));
}

TEST(FindCorrespondences, DistanceMatchesPositions) {
  const Surface target = blob();
  const Points q = shapes::random_points(400, 8, -0.6, 0.6);
  const KdTree index(target.vertices);
  const CorrespondenceSet c = find_correspondences(q, target, index);
  for (std::size_t i = 0; i < q.size(); ++i) {
    EXPECT_EQ(c.target_index[i], brute_nearest(target.vertices, q[i]));
    EXPECT_NEAR(c.distance[i], (q[i] - c.target_position[i]).norm(), 1e-9);
  }
  shapes::TempDir dir;
  write_correspondences_csv(c, dir / "c.csv");
  std::ifstream in(dir / "c.csv");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 401);
}

TEST(BestRigid, RecoversExactTransformAndAvoidsReflection) {
  const Points from = shapes::random_points(50, 3);
  const RigidTransform truth = make_rigid(37.0, Vec3(1, 2, 3), Vec3(0.3, -0.1, 2));
  Points to;
  for (const Vec3& p : from) to.push_back(truth.apply(p));
  const RigidTransform est = best_rigid_transform(from, to);
  EXPECT_LE(transform_error(est, truth), 1e-12);
  // Mirror image: best proper rotation still has det +1.
  Points mirrored;
  for (const Vec3& p : from) mirrored.emplace_back(-p.x(), p.y(), p.z());
  const RigidTransform m = best_rigid_transform(from, mirrored);
  EXPECT_NEAR(m.rotation.determinant(), 1.0, 1e-12);
  EXPECT_LE((m.rotation.transpose() * m.rotation - Mat3::Identity()).norm(), 1e-12);
}

TEST(RigidIcp, RecoversTenDegreesAboutZ) {
  const Surface src = blob();
  const RigidTransform truth = make_rigid(10.0, Vec3::UnitZ(), Vec3(0.02, -0.01, 0.015));
  const Surface tgt = apply(truth, src);
  IcpOptions opt;
  opt.iterations = 15;
  IcpReport rep;
  const RigidTransform est = rigid_icp_init(src, tgt, opt, &rep);
  EXPECT_LE(transform_error(est, truth), 1e-6);
  EXPECT_NEAR(est.rotation.determinant(), 1.0, 1e-12);
  EXPECT_LE((est.rotation.transpose() * est.rotation - Mat3::Identity()).norm(), 1e-9);
  for (std::size_t k = 1; k < rep.mean_squared_distance.size(); ++k)
    EXPECT_LE(rep.mean_squared_distance[k], rep.mean_squared_distance[k - 1] + 1e-15) << "iteration " << k;
}

TEST(RigidIcp, IdentityIsFixedPoint) {
  const Surface src = blob();
  const RigidTransform est = rigid_icp_init(src, src);
  EXPECT_LE(transform_error(est, RigidTransform{}), 1e-9);
}

TEST(RigidIcp, OutliersBeyondEpsDAreRejected) {
  const Surface src = blob();
  const RigidTransform truth = make_rigid(4.0, Vec3(0.2, 1, 0.1), Vec3(0.01, 0.0, -0.01));
  Surface tgt = apply(truth, src);
  // 30% extra points pushed > eps_d outward along their normals.
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(tgt.size()) - 1);
  const int extra = static_cast<int>(0.3 * tgt.size());
  for (int k = 0; k < extra; ++k) {
    const int i = pick(rng);
    tgt.vertices.push_back(tgt.vertices[i] + 0.45 * tgt.normals[i]);
    tgt.normals.push_back(tgt.normals[i]);
  }
  IcpOptions opt;
  opt.iterations = 15;
  IcpReport rep;
  const RigidTransform est = rigid_icp_init(src, tgt, opt, &rep);
  EXPECT_LE(transform_error(est, truth), 1e-4);
  for (std::size_t k = 1; k < rep.mean_squared_distance.size(); ++k)
    EXPECT_LE(rep.mean_squared_distance[k], rep.mean_squared_distance[k - 1] + 1e-15);
}

TEST(RigidIcp, SeedPairsStartTheAlignment) {
  const Surface src = blob();
  const RigidTransform truth = make_rigid(90.0, Vec3(1, 1, 0), Vec3(0.2, 0.1, 0));
  const Surface tgt = apply(truth, src);
  IcpOptions opt;
  opt.seed_pairs = {{0, 0}, {100, 100}, {300, 300}, {500, 500}};
  const RigidTransform est = rigid_icp_init(src, tgt, opt);
  EXPECT_LE(transform_error(est, truth), 1e-9);
}

TEST(RigidIcp, TooFewPairsNamesIteration) {
  const Surface src = blob();
  Surface far = src;
  for (Vec3& p : far.vertices) p += Vec3(5, 0, 0);
  try {
    rigid_icp_init(src, far);
    FAIL() << "expected InitializationError";
  } catch (const InitializationError& e) {
    EXPECT_EQ(e.iteration(), 1);
  }
  Surface bare = src;
  bare.normals.clear();
  EXPECT_THROW(rigid_icp_init(bare, src), InvalidInput);
}

TEST(Lift, IdentityTranslationAndRandomRigid) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 6; ++trial) {
    const Surface s = shapes::random_mesh(9, 8, 20 + trial);
    const DeformationGraph g = build_graph(s, 4.0 * mean_edge_length(s));
    const TransformState id = lift_rigid_to_state(RigidTransform{}, g);
    EXPECT_EQ(id.X, TransformState::identity(g.node_count()).X);

    const Vec3 t0(1, -2, 0.5);
    const TransformState tr = lift_rigid_to_state(RigidTransform{Mat3::Identity(), t0}, g);
    for (int j = 0; j < g.node_count(); ++j) {
      EXPECT_EQ(tr.affine(j), Mat3::Identity());
      EXPECT_LE((tr.translation(j) - t0).norm(), 1e-12);
    }

    std::uniform_real_distribution<double> u(-1, 1);
    const RigidTransform rt = make_rigid(180.0 * u(rng), Vec3(u(rng), u(rng), u(rng)), Vec3(u(rng), u(rng), u(rng)));
    const Points out = transform_points(g, lift_rigid_to_state(rt, g), s.vertices);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_LE((out[i] - rt.apply(s.vertices[i])).norm(), 1e-12);
  }
}
