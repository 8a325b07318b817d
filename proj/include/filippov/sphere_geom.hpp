#pragma once

// Points, tangent vectors, rotations and plane cuts of the unit sphere.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "filippov/error.hpp"
#include "filippov/tolerances.hpp"

namespace filippov {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// A point of S^2 in ambient coordinates. Construction checks |p| = 1.
class SpherePoint {
 public:
  SpherePoint() : p_(0.0, 0.0, 1.0) {}

  explicit SpherePoint(const Vec3& p) : p_(p) {
    if (std::abs(p.norm() - 1.0) > tol::kUnitInput) {
      throw Error(ErrorCode::InvalidInput, "point is not on the unit sphere");
    }
  }

  SpherePoint(double x, double y, double z) : SpherePoint(Vec3(x, y, z)) {}

  double x() const { return p_.x(); }
  double y() const { return p_.y(); }
  double z() const { return p_.z(); }
  const Vec3& vec() const { return p_; }

  SpherePoint antipode() const { return SpherePoint(-p_); }

 private:
  Vec3 p_;
};

/// Vector tangent to the sphere at `base`.
struct TangentVector {
  SpherePoint base;
  Vec3 v;

  double norm() const { return v.norm(); }
};

/// Returns v / |v|.
inline SpherePoint project_to_sphere(const Vec3& v) {
  const double n = v.norm();
  if (!(n > tol::kZeroVector)) {
    throw Error(ErrorCode::ZeroVector, "cannot project a vector of norm <= 1e-12");
  }
  return SpherePoint(v / n);
}

inline Vec3 tangential_part(const Vec3& v, const Vec3& p) { return v - v.dot(p) * p; }

inline double geodesic_distance(const Vec3& a, const Vec3& b) {
  // atan2 form keeps full precision for nearby and antipodal points alike
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

/// Rodrigues rotation of p about the unit axis by `angle` (right hand rule).
inline Vec3 rotate(const Vec3& p, const Vec3& axis, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return p * c + axis.cross(p) * s + axis * (axis.dot(p) * (1.0 - c));
}

/// Set {p in S^2 : <n, p> = offset}. The level function gamma(p) = <n,p> - offset
/// is positive on the side n points to.
class PlaneCircle {
 public:
  PlaneCircle(const Vec3& normal, double offset, int id) : n_(normal), c_(offset), id_(id) {
    if (std::abs(normal.norm() - 1.0) > tol::kUnitConstructed) {
      throw Error(ErrorCode::InvalidInput, "circle normal must be a unit vector");
    }
    if (!(std::abs(offset) < 1.0)) {
      throw Error(ErrorCode::InvalidInput, "circle offset must satisfy |c| < 1");
    }
    // fixed frame: poles use the coordinate axes, everything else n x z
    if (std::abs(std::abs(n_.z()) - 1.0) <= tol::kUnitConstructed) {
      e1_ = Vec3(1.0, 0.0, 0.0);
      e2_ = Vec3(0.0, 1.0, 0.0);
    } else {
      e1_ = n_.cross(Vec3::UnitZ()).normalized();
      e2_ = n_.cross(e1_);
    }
  }

  const Vec3& normal() const { return n_; }
  double offset() const { return c_; }
  int id() const { return id_; }
  double radius() const { return std::sqrt(1.0 - c_ * c_); }
  /// Geodesic radius measured from the center n.
  double angular_radius() const { return std::acos(c_); }
  const Vec3& e1() const { return e1_; }
  const Vec3& e2() const { return e2_; }

  double gamma(const Vec3& p) const { return n_.dot(p) - c_; }

  /// Unit tangent of the circle at angle phi (direction of increasing phi).
  Vec3 tangent(double phi) const { return -std::sin(phi) * e1_ + std::cos(phi) * e2_; }

  /// In-sphere unit normal at a circle point: tangent to S^2, orthogonal to the
  /// circle, pointing to the gamma > 0 side.
  Vec3 side_normal(const Vec3& p) const { return tangential_part(n_, p).normalized(); }

  /// Angle of the projection of p onto the circle's plane frame, in [0, 2pi).
  double angle_of(const Vec3& p) const {
    double phi = std::atan2(p.dot(e2_), p.dot(e1_));
    if (phi < 0.0) phi += kTwoPi;
    return phi;
  }

 private:
  Vec3 n_;
  double c_;
  int id_;
  Vec3 e1_;
  Vec3 e2_;
};

inline Vec3 circle_point(const PlaneCircle& circle, double phi) {
  return circle.offset() * circle.normal() +
         circle.radius() * (std::cos(phi) * circle.e1() + std::sin(phi) * circle.e2());
}

/// Point at angle phi on the circle, in the circle's fixed plane frame.
inline SpherePoint circle_param(const PlaneCircle& circle, double phi) {
  return SpherePoint(circle_point(circle, phi));
}

/// True when the two circles share at least one point of S^2.
inline bool circles_intersect(const PlaneCircle& a, const PlaneCircle& b) {
  const double ra = a.angular_radius();
  const double rb = b.angular_radius();
  const double d = geodesic_distance(a.normal(), b.normal());
  return std::abs(ra - rb) <= d + 1e-12 && d <= std::min(ra + rb, kTwoPi - ra - rb) + 1e-12;
}

/// Geodesic distance from p to the circle.
inline double distance_to_circle(const PlaneCircle& circle, const Vec3& p) {
  return std::abs(geodesic_distance(circle.normal(), p) - circle.angular_radius());
}

/// Near-uniform point set on S^2 (golden angle spiral).
inline std::vector<Vec3> fibonacci_sphere(int n) {
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(n));
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double a = golden * i;
    pts.emplace_back(r * std::cos(a), r * std::sin(a), z);
  }
  return pts;
}

/// Uniformly distributed rotation matrix drawn from the given seed.
inline Mat3 random_rotation(unsigned long long seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  return q.toRotationMatrix();
}

/// Axis vector w of a skew matrix, so that A p = w x p.
inline Vec3 skew_axis(const Mat3& a) { return Vec3(a(2, 1), a(0, 2), a(1, 0)); }

inline Mat3 skew_from_axis(const Vec3& w) {
  Mat3 a;
  a << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return a;
}

} // namespace filippov
