#include <gtest/gtest.h>

#include <random>

#include "filippov/classify.hpp"

using namespace filippov;

namespace {

const double kR3 = std::sqrt(3.0);

const Psvf& z3() {
  static const Psvf z = make_z_theta(kPi / 3);
  return z;
}

const PlaneCircle& sigma(int i) { return z3().circle(CircleId{i}); }

Vec3 on_circle(int i, double x, double y) { return Vec3(x, y, i == 1 ? 0.5 : -0.5); }

} // namespace

TEST(LieDerivative, CapFieldFirstOrder) {
  const Field& x = *z3().field(RegionId{1});
  for (double phi : {0.2, 1.7, 3.5, 5.9}) {
    const Vec3 p = circle_point(sigma(1), phi);
    EXPECT_NEAR(lie_derivative(x, sigma(1), p, 1), -p.x(), 1e-15);
  }
}

TEST(LieDerivative, CapFieldSecondOrderAtTangency) {
  const Field& x = *z3().field(RegionId{1});
  EXPECT_NEAR(lie_derivative(x, sigma(1), on_circle(1, 0, kR3 / 2), 2), -0.5, 1e-15);
}

TEST(LieDerivative, BandFieldFirstOrder) {
  const Field& y = *z3().field(RegionId{2});
  for (double phi : {0.2, 1.7, 3.5, 5.9}) {
    const Vec3 p = circle_point(sigma(1), phi);
    EXPECT_NEAR(lie_derivative(y, sigma(1), p, 1), p.x() / 2, 1e-15);
  }
}

TEST(LieDerivative, LinearFieldPowers) {
  // order k equals <A^k p, n>
  const auto& f = static_cast<const LinearField&>(*z3().field(RegionId{2}));
  const Vec3 p = circle_point(sigma(2), 0.77);
  Vec3 q = p;
  for (int k = 1; k <= 4; ++k) {
    q = f.matrix() * q;
    EXPECT_NEAR(lie_derivative(f, sigma(2), p, k), q.z(), 1e-15);
  }
}

TEST(LieDerivative, Errors) {
  const Field& x = *z3().field(RegionId{1});
  try {
    lie_derivative(x, sigma(1), on_circle(1, 0, kR3 / 2), 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OrderTooHigh);
  }
  try {
    lie_derivative(x, sigma(1), Vec3(1, 0, 0), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OffCircle);
  }
}

TEST(ClassifySigmaPoint, UpperCircleHalves) {
  EXPECT_EQ(classify_sigma_point(z3(), CircleId{1}, on_circle(1, kR3 / 2, 0)).kind, SigmaClass::Sliding);
  EXPECT_EQ(classify_sigma_point(z3(), CircleId{1}, on_circle(1, -kR3 / 2, 0)).kind, SigmaClass::Escaping);
  const RegionClass t = classify_sigma_point(z3(), CircleId{1}, on_circle(1, 0, kR3 / 2));
  EXPECT_EQ(t.kind, SigmaClass::Tangency);
  EXPECT_EQ(t.sides, TangentSides::Both);
}

TEST(ClassifySigmaPoint, LowerCircleHalves) {
  // below the lower circle the cap field reverses the sign pattern of the upper one
  EXPECT_EQ(classify_sigma_point(z3(), CircleId{2}, on_circle(2, -kR3 / 2, 0)).kind, SigmaClass::Sliding);
  EXPECT_EQ(classify_sigma_point(z3(), CircleId{2}, on_circle(2, kR3 / 2, 0)).kind, SigmaClass::Escaping);
}

TEST(ClassifySigmaPoint, OffCircle) {
  try {
    classify_sigma_point(z3(), CircleId{1}, Vec3(1, 0, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OffCircle);
  }
}

TEST(SlidingField, UpperSlidingPoint) {
  const Vec3 z = sliding_field_at(z3(), CircleId{1}, on_circle(1, kR3 / 2, 0));
  EXPECT_LE((z - Vec3(0, 0.5, 0)).norm(), 1e-15);
  EXPECT_LE((z - (kR3 / 3) * Vec3(0, kR3 / 2, 0)).norm(), 1e-15);
}

TEST(SlidingField, ExtendedValueAtLowerTangency) {
  const Vec3 z = sliding_field_at(z3(), CircleId{2}, on_circle(2, 0, -kR3 / 2));
  EXPECT_LE((z - Vec3(0.5, 0, 0)).norm(), 1e-10);
}

TEST(SlidingField, TangentToCircleAndSphere) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, kTwoPi);
  for (int i = 0; i < 500; ++i) {
    const int k = 1 + i % 2;
    const Vec3 p = circle_point(sigma(k), u(rng));
    const Vec3 z = sliding_field_at(z3(), CircleId{k}, p);
    EXPECT_NEAR(z.dot(sigma(k).normal()), 0.0, 1e-10);
    EXPECT_NEAR(z.dot(p), 0.0, 1e-10);
  }
}

TEST(SlidingField, DegenerateWhereNoLimitExists) {
  // identical rotation fields tangent to the circle at two points: a = b everywhere
  const auto f = LinearField::from_axis(Vec3::UnitX(), "F");
  const Psvf s({PlaneCircle(Vec3::UnitZ(), 0.0, 1)}, {Region{{1}, f}, Region{{-1}, f}});
  try {
    sliding_field_at(s, CircleId{1}, Vec3(1, 0, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateDenominator);
  }
}

TEST(FindTangencies, UpperCircle) {
  const auto t = find_tangencies(z3(), CircleId{1});
  ASSERT_EQ(t.size(), 2u);
  for (const auto& info : t) {
    EXPECT_NEAR(info.point.x(), 0.0, 1e-10);
    EXPECT_NEAR(std::abs(info.point.y()), kR3 / 2, 1e-10);
    EXPECT_NE(info.double_type, DoubleType::None);
  }
}

TEST(FindTangencies, LowerCircleIsAntipodal) {
  const auto up = find_tangencies(z3(), CircleId{1});
  const auto down = find_tangencies(z3(), CircleId{2});
  ASSERT_EQ(down.size(), 2u);
  for (const auto& d : down) {
    bool matched = false;
    for (const auto& u : up) matched = matched || (d.point.vec() + u.point.vec()).norm() < 1e-9;
    EXPECT_TRUE(matched);
  }
}

TEST(FindTangencies, RotationAboutCircleNormalIsNonIsolated) {
  const auto f = LinearField::from_axis(Vec3::UnitZ(), "F");
  const auto g = LinearField::from_axis(Vec3::UnitX(), "G");
  const Psvf s({PlaneCircle(Vec3::UnitZ(), 0.2, 1)}, {Region{{1}, f}, Region{{-1}, g}});
  try {
    find_tangencies(s, CircleId{1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonIsolatedTangency);
  }
}

TEST(ClassifyTangency, ParabolicUpperPoint) {
  const TangencyInfo t = classify_tangency(z3(), CircleId{1}, on_circle(1, 0, kR3 / 2));
  ASSERT_TRUE(t.above && t.below);
  EXPECT_EQ(t.above->order, 2);
  EXPECT_NEAR(t.above->value, -0.5, 1e-15);
  EXPECT_EQ(t.above->visibility, Visibility::Invisible);
  EXPECT_EQ(t.below->order, 2);
  EXPECT_NEAR(t.below->value, -0.5, 1e-15);
  EXPECT_EQ(t.below->visibility, Visibility::Visible);
  EXPECT_EQ(t.double_type, DoubleType::Parabolic);
}

TEST(ClassifyTangency, EllipticUpperPoint) {
  const TangencyInfo t = classify_tangency(z3(), CircleId{1}, on_circle(1, 0, -kR3 / 2));
  ASSERT_TRUE(t.above && t.below);
  EXPECT_EQ(t.above->visibility, Visibility::Invisible);
  EXPECT_EQ(t.below->visibility, Visibility::Invisible);
  EXPECT_NEAR(t.below->value, 0.25, 1e-15);
  EXPECT_EQ(t.double_type, DoubleType::Elliptic);
}

TEST(ClassifyTangency, AntipodesMirrorTypes) {
  const auto a = classify_tangency(z3(), CircleId{2}, on_circle(2, 0, -kR3 / 2));
  const auto b = classify_tangency(z3(), CircleId{2}, on_circle(2, 0, kR3 / 2));
  EXPECT_EQ(a.double_type, DoubleType::Parabolic);
  EXPECT_EQ(b.double_type, DoubleType::Elliptic);
  // the visible field at the lower parabolic point is the band field, above the circle
  EXPECT_EQ(a.above->visibility, Visibility::Visible);
  EXPECT_EQ(a.below->visibility, Visibility::Invisible);
}

TEST(ClassifyTangency, EquilibriumOnSigmaIsUnresolved) {
  // at theta = pi/6 the band field vanishes at (0, -sqrt3/2, 1/2)
  const Psvf z = make_z_theta(kPi / 6);
  try {
    classify_tangency(z, CircleId{1}, on_circle(1, 0, -kR3 / 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ContactOrderUnresolved);
  }
}

TEST(PseudoEquilibria, NoneOnEitherCircle) {
  EXPECT_TRUE(pseudo_equilibria(z3(), CircleId{1}).empty());
  EXPECT_TRUE(pseudo_equilibria(z3(), CircleId{2}).empty());
}

TEST(PseudoEquilibria, TiltedEquatorSystemHasRoots) {
  const double al = 0.3;
  const PlaneCircle c(Vec3(std::sin(al), 0, std::cos(al)), 0.0, 1);
  const Psvf s({c}, {Region{{1}, LinearField::from_axis(Vec3::UnitZ(), "A1")},
                     Region{{-1}, LinearField::from_axis(Vec3(0, 0.5, -1), "A2")}});
  // brute force: the tangential component changes sign inside a sliding or escaping run
  int changes = 0;
  const int m = 20000;
  auto tangential = [&](double phi) {
    const Vec3 p = circle_point(c, phi);
    const Vec3 f1 = s.field(RegionId{1})->eval(p), f2 = s.field(RegionId{2})->eval(p);
    const double a = f1.dot(c.normal()), b = f2.dot(c.normal());
    return std::make_pair(a * b < 0, ((b * f1 - a * f2) / (b - a)).dot(c.tangent(phi)));
  };
  for (int j = 0; j < m; ++j) {
    const auto [ok0, t0] = tangential(kTwoPi * (j + 0.37) / m);
    const auto [ok1, t1] = tangential(kTwoPi * (j + 1.37) / m);
    if (ok0 && ok1 && (t0 < 0) != (t1 < 0)) ++changes;
  }
  ASSERT_GE(changes, 1);
  const auto roots = pseudo_equilibria(s, CircleId{1});
  EXPECT_EQ(static_cast<int>(roots.size()), changes);
  for (const auto& r : roots) EXPECT_LT(sliding_field_at(s, CircleId{1}, r.vec()).norm(), 1e-10);
  // unchanged under time reversal
  const auto reversed = pseudo_equilibria(s.time_reversed(), CircleId{1});
  ASSERT_EQ(reversed.size(), roots.size());
  for (std::size_t i = 0; i < roots.size(); ++i) EXPECT_LT((reversed[i].vec() - roots[i].vec()).norm(), 1e-9);
}

TEST(ClassSegments, HalfCirclesSplitAtXZero) {
  for (int k : {1, 2}) {
    for (SigmaClass kind : {SigmaClass::Sliding, SigmaClass::Escaping}) {
      const auto segs = class_segments(z3(), CircleId{k}, kind);
      ASSERT_EQ(segs.size(), 1u);
      EXPECT_NEAR(segs[0].second - segs[0].first, kPi, 2 * kTwoPi / 3600);
    }
  }
}
