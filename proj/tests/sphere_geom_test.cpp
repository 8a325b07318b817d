#include <gtest/gtest.h>

#include <random>

#include "filippov/sphere_geom.hpp"

using namespace filippov;

TEST(ProjectToSphere, ScalesAndFixesUnitVectors) {
  const SpherePoint a = project_to_sphere(Vec3(0, 0, 2));
  EXPECT_EQ(a.vec(), Vec3(0, 0, 1));
  const SpherePoint b = project_to_sphere(Vec3(1, 0, 0));
  EXPECT_EQ(b.vec(), Vec3(1, 0, 0));
}

TEST(ProjectToSphere, DiagonalMatchesLongDoubleReference) {
  const SpherePoint p = project_to_sphere(Vec3(1, 1, 1));
  const long double r = 1.0L / std::sqrt(3.0L);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p.vec()[i], static_cast<double>(r), 2.5e-16);  // 2 ulp
  EXPECT_NEAR(p.vec().norm(), 1.0, 1e-15);
}

TEST(ProjectToSphere, RejectsTinyVectors) {
  try {
    project_to_sphere(Vec3(1e-13, 0, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVector);
  }
}

TEST(ProjectToSphere, Idempotent) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 v(g(rng), g(rng), g(rng));
    const Vec3 once = project_to_sphere(v).vec();
    const Vec3 twice = project_to_sphere(once).vec();
    EXPECT_LE((once - twice).norm(), 1e-15);
  }
}

TEST(CircleParam, UpperBandCircle) {
  const PlaneCircle c(Vec3::UnitZ(), 0.5, 1);
  const double r = std::sqrt(1.0 - 0.25);
  EXPECT_LE((circle_param(c, 0.0).vec() - Vec3(r, 0, 0.5)).norm(), 1e-15);
  EXPECT_LE((circle_param(c, kPi / 2).vec() - Vec3(0, r, 0.5)).norm(), 1e-15);
  EXPECT_LE((circle_param(c, 0.0).vec() - circle_param(c, kTwoPi).vec()).norm(), 1e-12);
}

TEST(CircleParam, EquatorHasZeroHeight) {
  const PlaneCircle c(Vec3::UnitZ(), 0.0, 1);
  for (double phi : {0.1, 1.3, 2.9, 5.5}) EXPECT_NEAR(circle_param(c, phi).z(), 0.0, 1e-15);
}

TEST(CircleParam, TiltedFrame) {
  const Vec3 n = Vec3(1, 2, 2) / 3.0;
  const PlaneCircle c(n, -0.3, 1);
  EXPECT_LE((c.e1() - n.cross(Vec3::UnitZ()).normalized()).norm(), 1e-15);
  EXPECT_LE((c.e2() - n.cross(c.e1())).norm(), 1e-15);
}

TEST(CircleParam, UnitNormAndOnPlaneEverywhere) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(-0.95, 0.95), ang(0.0, kTwoPi);
  for (int i = 0; i < 200; ++i) {
    const PlaneCircle c(Vec3(g(rng), g(rng), g(rng)).normalized(), u(rng), 1);
    for (int j = 0; j < 20; ++j) {
      const double phi = ang(rng);
      const Vec3 p = circle_point(c, phi);
      EXPECT_NEAR(p.norm(), 1.0, 1e-12);
      EXPECT_NEAR(c.normal().dot(p), c.offset(), 1e-12);
      EXPECT_NEAR(c.angle_of(p), phi, 1e-9);
    }
  }
}

TEST(PlaneCircle, ValidatesInputs) {
  EXPECT_THROW(PlaneCircle(Vec3(0, 0, 2), 0.0, 1), Error);
  EXPECT_THROW(PlaneCircle(Vec3::UnitZ(), 1.0, 1), Error);
}

TEST(SpherePoint, RejectsOffSphere) {
  EXPECT_THROW(SpherePoint(1.0, 0.0, 1e-4), Error);
  EXPECT_NO_THROW(SpherePoint(1.0, 0.0, 1e-10));
}

TEST(Rotation, RodriguesKeepsNorm) {
  const Vec3 axis = Vec3(0, -0.5, std::sqrt(3.0) / 2);
  const Vec3 p = Vec3(0.3, -0.4, std::sqrt(0.75));
  for (double t = 0; t < 7; t += 0.37) EXPECT_NEAR(rotate(p, axis, t).norm(), 1.0, 1e-15);
}

TEST(FibonacciSphere, NodesAreUnitAndSpread) {
  const auto nodes = fibonacci_sphere(200);
  ASSERT_EQ(nodes.size(), 200u);
  double worst = 0;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int i = 0; i < 2000; ++i) {
    const Vec3 q = Vec3(g(rng), g(rng), g(rng)).normalized();
    double best = 10;
    for (const Vec3& p : nodes) best = std::min(best, geodesic_distance(p, q));
    worst = std::max(worst, best);
  }
  for (const Vec3& p : nodes) EXPECT_NEAR(p.norm(), 1.0, 1e-12);
  EXPECT_LT(worst, 0.25);
}
