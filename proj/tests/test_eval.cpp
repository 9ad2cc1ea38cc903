#include "rnrr/correspondence.hpp"
#include "rnrr/eval.hpp"
#include "support/shapes.hpp"
#include "support/tempdir.hpp"

#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <random>

using namespace rnrr;
namespace shapes = rnrr::testing;

TEST(Rmse, Examples) {
  const Points gt{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  EXPECT_EQ(rmse(gt, gt), 0.0);
  Points off = gt;
  for (Vec3& p : off) p += Vec3(0, 0.6, 0.8);
  EXPECT_NEAR(rmse(off, gt), 1.0, 1e-15);
  const Points r{Vec3(3, 0, 0), Vec3(1, 4, 0)};
  EXPECT_NEAR(rmse(r, gt), std::sqrt(12.5), 1e-15);
  EXPECT_NEAR(rmse(r, gt), 3.5355, 1e-4);
  EXPECT_NEAR(rmse(r, GroundTruth{gt}), std::sqrt(12.5), 1e-15);
  const std::vector<int> second{1};
  EXPECT_NEAR(rmse(r, gt, second), 4.0, 1e-15);
}

TEST(Rmse, Errors) {
  const Points a{Vec3(0, 0, 0)}, b{Vec3(0, 0, 0), Vec3(1, 1, 1)};
  EXPECT_THROW(rmse(a, b), InvalidInput);
  EXPECT_THROW(rmse(Points{}, Points{}), InvalidInput);
  EXPECT_THROW(rmse(b, b, std::vector<int>{}), InvalidInput);
  EXPECT_THROW(pointwise_errors(a, b), InvalidInput);
}

TEST(Rmse, InvariantUnderCommonRigidMotion) {
  std::mt19937 rng(2);
  const Points r = shapes::random_points(200, 1), g = shapes::random_points(200, 2);
  for (int trial = 0; trial < 10; ++trial) {
    std::normal_distribution<double> n(0.0, 1.0);
    const RigidTransform rt{Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix(),
                            Vec3(n(rng), n(rng), n(rng)) * 10.0};
    Points r2, g2;
    for (const Vec3& p : r) r2.push_back(rt.apply(p));
    for (const Vec3& p : g) g2.push_back(rt.apply(p));
    EXPECT_NEAR(rmse(r2, g2), rmse(r, g), 1e-9);
  }
}

TEST(Noise, IdentityCases) {
  const Surface s = compute_normals(shapes::bumpy_sphere(10, 20, 1.0, 0.1));
  EXPECT_EQ(add_gaussian_normal_noise(s, 0.5, 0.0, 1).vertices, s.vertices);
  EXPECT_EQ(add_gaussian_normal_noise(s, 0.0, 1.0, 1).vertices, s.vertices);
  EXPECT_EQ(add_normal_outliers(s, 0.0, 1.0, 1).vertices, s.vertices);
  Surface bare = s;
  bare.normals.clear();
  EXPECT_THROW(add_gaussian_normal_noise(bare, 0.5, 1.0, 1), InvalidInput);
  EXPECT_THROW(add_normal_outliers(bare, 0.5, 1.0, 1), InvalidInput);
  EXPECT_THROW(add_gaussian_normal_noise(s, 1.5, 1.0, 1), InvalidParameter);
  EXPECT_THROW(add_gaussian_normal_noise(s, 0.5, -1.0, 1), InvalidParameter);
}

TEST(Noise, StandardDeviationMatchesSigma) {
  const Surface s = compute_normals(shapes::bumpy_sphere(80, 128, 1.0, 0.1));
  ASSERT_GE(s.size(), 10000u);
  const double sigma = 0.3 * mean_edge_length(s);
  const Surface noisy = add_gaussian_normal_noise(s, 1.0, sigma, 7);
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vec3 d = noisy.vertices[i] - s.vertices[i];
    const double along = d.dot(s.normals[i]);
    EXPECT_LE((d - along * s.normals[i]).norm(), 1e-12);  // purely normal
    sum += along;
    sq += along * along;
  }
  const double n = static_cast<double>(s.size());
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  EXPECT_NEAR(sd, sigma, 0.05 * sigma);
}

TEST(Noise, FractionAndReproducibility) {
  const Surface s = compute_normals(shapes::bumpy_sphere(20, 40, 1.0, 0.1));
  const Surface a = add_gaussian_normal_noise(s, 0.25, 0.01, 42);
  const Surface b = add_gaussian_normal_noise(s, 0.25, 0.01, 42);
  EXPECT_EQ(a.vertices, b.vertices);
  EXPECT_NE(add_gaussian_normal_noise(s, 0.25, 0.01, 43).vertices, a.vertices);
  int moved = 0;
  for (std::size_t i = 0; i < s.size(); ++i) moved += a.vertices[i] != s.vertices[i];
  EXPECT_EQ(moved, static_cast<int>(std::floor(0.25 * s.size())));

  const Surface o = add_normal_outliers(s, 0.1, 0.5, 3);
  EXPECT_EQ(o.vertices, add_normal_outliers(s, 0.1, 0.5, 3).vertices);
  int out = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = (o.vertices[i] - s.vertices[i]).norm();
    if (d > 0) {
      EXPECT_NEAR(d, 0.5, 1e-12);
      ++out;
    }
  }
  EXPECT_EQ(out, static_cast<int>(std::floor(0.1 * s.size())));
}

TEST(RemoveRegion, TinyRadiusRemovesOnlySeed) {
  const Surface s = shapes::grid_mesh(6, 6, 1.0);
  const PartialSurface p = remove_region(s, 14, 0.5);
  EXPECT_EQ(p.surface.size(), s.size() - 1);
  EXPECT_EQ(std::find(p.kept.begin(), p.kept.end(), 14), p.kept.end());
  EXPECT_NO_THROW(validate(p.surface));
  for (std::size_t k = 0; k < p.kept.size(); ++k) EXPECT_EQ(p.surface.vertices[k], s.vertices[p.kept[k]]);
}

TEST(RemoveRegion, HugeRadiusIsAnError) {
  const Surface s = shapes::grid_mesh(4, 4, 1.0);
  EXPECT_THROW(remove_region(s, 0, 100.0), InvalidInput);
  EXPECT_THROW(remove_region(s, 0, 0.0), InvalidParameter);
}

TEST(RemoveRegion, ConservationAndValidity) {
  const Surface s = compute_normals(shapes::bumpy_sphere(20, 40, 1.0, 0.15));
  const GeodesicEngine engine(s);
  for (int seed : {0, 77, 400}) {
    for (double radius : {0.2, 0.5, 1.0}) {
      const PartialSurface p = remove_region(s, seed, radius);
      const GeodesicField f = engine.from(seed);
      std::size_t inside = 0;
      for (double d : f.distances) inside += d <= radius;
      EXPECT_EQ(p.surface.size() + inside, s.size());
      EXPECT_NO_THROW(validate(p.surface));
      EXPECT_EQ(p.surface.normals.size(), p.surface.size());
      for (int k : p.kept) EXPECT_GT(f.distances[k], radius);
    }
  }
}

TEST(Synthesize, IdentityRigidAndScalarOracle) {
  const Surface s = compute_normals(shapes::bumpy_sphere(12, 24, 1.0, 0.1));
  const DeformationGraph g = build_graph(s, 4.0 * mean_edge_length(s));

  const SyntheticPair same = synthesize_deformation(s, g, TransformState::identity(g.node_count()));
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_LE((same.truth.gt_positions[i] - s.vertices[i]).norm(), 1e-12);

  const RigidTransform rt{Eigen::AngleAxisd(0.7, Vec3(1, 2, 0).normalized()).toRotationMatrix(), Vec3(1, 0, -2)};
  const SyntheticPair rigid = synthesize_deformation(s, g, lift_rigid_to_state(rt, g));
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_LE((rigid.target.vertices[i] - rt.apply(s.vertices[i])).norm(), 1e-12);
    EXPECT_LE((rigid.target.normals[i] - rt.rotation * s.normals[i]).norm(), 1e-9);
  }

  const TransformState st = random_node_transforms(g.node_count(), 5.0, 0.01, 5);
  const SyntheticPair syn = synthesize_deformation(s, g, st);
  EXPECT_EQ(syn.target.vertices, syn.truth.gt_positions);
  for (std::size_t i = 0; i < s.size(); ++i) {
    Vec3 v = Vec3::Zero();
    for (const InfluenceWeight& iw : g.influence[i]) {
      const Vec3 p = g.nodes[iw.node].position;
      v += iw.weight * (st.affine(iw.node) * (s.vertices[i] - p) + p + st.translation(iw.node));
    }
    EXPECT_LE((syn.truth.gt_positions[i] - v).norm(), 1e-12);
  }
}

TEST(Synthesize, RandomTransformsAreBoundedRotations) {
  const TransformState st = random_node_transforms(50, 10.0, 0.2, 8);
  for (int j = 0; j < 50; ++j) {
    const Mat3 a = st.affine(j);
    EXPECT_LE((a.transpose() * a - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(a.determinant(), 1.0, 1e-12);
    EXPECT_LE(Eigen::AngleAxisd(a).angle(), 10.0 * std::numbers::pi / 180.0 + 1e-12);
    EXPECT_LE(st.translation(j).cwiseAbs().maxCoeff(), 0.2);
  }
  EXPECT_EQ(random_node_transforms(50, 10.0, 0.2, 8).X, st.X);
  TransformState bad = st;
  bad.X(0, 0) = std::nan("");
  const Surface s = shapes::polyline(3);
  EXPECT_THROW(synthesize_deformation(s, build_graph(s, 10.0), TransformState(bad.X.topRows(4))), InvalidInput);
}

TEST(GroundTruthIo, RoundTrip) {
  shapes::TempDir dir;
  const GroundTruth gt{shapes::random_points(30, 4)};
  write_ground_truth(gt, dir / "gt.ply");
  const GroundTruth back = read_ground_truth(dir / "gt.ply");
  ASSERT_EQ(back.gt_positions.size(), 30u);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(back.gt_positions[i], gt.gt_positions[i]);
}
