#pragma once

// Smooth vector fields on S^2 given in ambient coordinates.

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "filippov/sphere_geom.hpp"

namespace filippov {

class Field;
using FieldHandle = std::shared_ptr<const Field>;

/// A vector field tangent to S^2. Implementations provide the value and the
/// directional derivative DF(p) v; higher derivatives along the flow fall back
/// to central differences unless overridden.
class Field {
 public:
  explicit Field(std::string label) : label_(std::move(label)) {}
  virtual ~Field() = default;

  virtual Vec3 eval(const Vec3& p) const = 0;
  /// DF(p) v.
  virtual Vec3 jvp(const Vec3& p, const Vec3& v) const = 0;
  /// Zeros of the field on S^2.
  virtual std::vector<Vec3> equilibria() const = 0;
  /// The field -F.
  virtual FieldHandle negated() const = 0;

  /// d^k/dt^k of the flow through p at t = 0, for 1 <= k <= 4.
  virtual Vec3 flow_derivative(const Vec3& p, int k) const {
    if (k == 1) return eval(p);
    if (k == 2) return jvp(p, eval(p));
    const double h = tol::kFiniteDifferenceStep;
    const Vec3 f = eval(p);
    return (flow_derivative(p + h * f, k - 1) - flow_derivative(p - h * f, k - 1)) / (2.0 * h);
  }

  const std::string& label() const { return label_; }

  TangentVector at(const SpherePoint& p) const { return TangentVector{p, eval(p.vec())}; }

 protected:
  std::string label_;
};

/// p -> A p with A skew-symmetric, i.e. the rotation field p -> w x p.
class LinearField final : public Field {
 public:
  LinearField(const Mat3& a, std::string label) : Field(std::move(label)), a_(a) {
    if (((a + a.transpose()).array().abs() > tol::kSkew).any()) {
      throw Error(ErrorCode::NotSkewSymmetric, "linear field matrix must satisfy A + A^T = 0");
    }
  }

  static FieldHandle from_axis(const Vec3& w, std::string label) {
    return std::make_shared<LinearField>(skew_from_axis(w), std::move(label));
  }

  Vec3 eval(const Vec3& p) const override { return a_ * p; }
  Vec3 jvp(const Vec3&, const Vec3& v) const override { return a_ * v; }

  Vec3 flow_derivative(const Vec3& p, int k) const override {
    Vec3 out = p;
    for (int i = 0; i < k; ++i) out = a_ * out;
    return out;
  }

  std::vector<Vec3> equilibria() const override {
    const Vec3 w = axis();
    const double n = w.norm();
    if (n < 1e-300) return {};  // every point is fixed; callers treat via axis()
    return {w / n, -w / n};
  }

  FieldHandle negated() const override {
    return std::make_shared<LinearField>(Mat3(-a_), "-" + label_);
  }

  const Mat3& matrix() const { return a_; }
  Vec3 axis() const { return skew_axis(a_); }

 private:
  Mat3 a_;
};

/// Compactly supported C^1 bump: amplitude * (1 - (r/radius)^2)^2 for geodesic
/// distance r < radius, applied to the tangential part of `direction`.
struct BumpPerturbation {
  SpherePoint center;
  double radius = 0.1;
  Vec3 direction = Vec3::UnitX();
  double amplitude = 0.0;

  void validate() const {
    if (!(radius > 0.0) || !(radius < kPi)) {
      throw Error(ErrorCode::InvalidInput, "bump radius must lie in (0, pi)");
    }
    if (std::abs(direction.norm() - 1.0) > tol::kUnitInput) {
      throw Error(ErrorCode::InvalidInput, "bump direction must be a unit vector");
    }
    if (!std::isfinite(amplitude)) {
      throw Error(ErrorCode::InvalidInput, "bump amplitude must be finite");
    }
  }

  double profile(double r) const {
    if (r >= radius) return 0.0;
    const double s = r / radius;
    const double u = 1.0 - s * s;
    return amplitude * u * u;
  }

  Vec3 eval(const Vec3& p) const {
    const double r = geodesic_distance(p, center.vec());
    if (r >= radius || amplitude == 0.0) return Vec3::Zero();
    return profile(r) * tangential_part(direction, p);
  }

  BumpPerturbation negated() const {
    BumpPerturbation b = *this;
    b.amplitude = -amplitude;
    return b;
  }
};

/// base + bump. Outside the support the base value is returned unchanged.
class BumpedField final : public Field {
 public:
  BumpedField(FieldHandle base, BumpPerturbation bump)
      : Field(base->label() + "+bump"), base_(std::move(base)), bump_(std::move(bump)) {
    bump_.validate();
  }

  Vec3 eval(const Vec3& p) const override {
    const Vec3 b = base_->eval(p);
    if (bump_.amplitude == 0.0) return b;
    if (geodesic_distance(p, bump_.center.vec()) >= bump_.radius) return b;
    return b + bump_.eval(p);
  }

  Vec3 jvp(const Vec3& p, const Vec3& v) const override {
    const Vec3 base_part = base_->jvp(p, v);
    if (bump_.amplitude == 0.0) return base_part;
    const double h = tol::kFiniteDifferenceStep;
    return base_part + (bump_.eval(p + h * v) - bump_.eval(p - h * v)) / (2.0 * h);
  }

  std::vector<Vec3> equilibria() const override;

  FieldHandle negated() const override {
    return std::make_shared<BumpedField>(base_->negated(), bump_.negated());
  }

  const FieldHandle& base() const { return base_; }
  const BumpPerturbation& bump() const { return bump_; }

 private:
  FieldHandle base_;
  BumpPerturbation bump_;
};

inline std::vector<Vec3> BumpedField::equilibria() const {
  std::vector<Vec3> out;
  for (const Vec3& e : base_->equilibria()) {
    if (geodesic_distance(e, bump_.center.vec()) >= bump_.radius) out.push_back(e);
  }
  if (bump_.amplitude == 0.0) return out;
  // zeros created inside the support: grid search, then Newton in the tangent plane
  const Vec3 c = bump_.center.vec();
  const Vec3 u = (std::abs(c.z()) < 0.9 ? c.cross(Vec3::UnitZ()) : c.cross(Vec3::UnitX())).normalized();
  const Vec3 w = c.cross(u);
  constexpr int kRings = 40;
  constexpr int kSpokes = 72;
  for (int i = 0; i <= kRings; ++i) {
    const double r = bump_.radius * i / kRings;
    for (int j = 0; j < (i == 0 ? 1 : kSpokes); ++j) {
      const double a = kTwoPi * j / kSpokes;
      Vec3 p = rotate(c, (std::cos(a) * u + std::sin(a) * w).cross(c).normalized(), r);
      // |base| > |bump| rules out a zero nearby
      if (base_->eval(p).norm() > 2.0 * std::abs(bump_.amplitude)) continue;
      for (int it = 0; it < 30; ++it) {
        const Vec3 f = eval(p);
        if (f.norm() < tol::kRealEquilibrium) break;
        // solve J d = -f restricted to the tangent plane at p
        const Vec3 t1 = (std::abs(p.z()) < 0.9 ? p.cross(Vec3::UnitZ()) : p.cross(Vec3::UnitX())).normalized();
        const Vec3 t2 = p.cross(t1);
        Eigen::Matrix2d j;
        const Vec3 j1 = tangential_part(jvp(p, t1), p);
        const Vec3 j2 = tangential_part(jvp(p, t2), p);
        j << j1.dot(t1), j2.dot(t1), j1.dot(t2), j2.dot(t2);
        const Eigen::Vector2d rhs(-f.dot(t1), -f.dot(t2));
        if (std::abs(j.determinant()) < 1e-14) break;
        const Eigen::Vector2d d = j.lu().solve(rhs);
        p = (p + d.x() * t1 + d.y() * t2).normalized();
        if (it > 0 && d.norm() > bump_.radius) break;
      }
      if (eval(p).norm() < tol::kRealEquilibrium &&
          geodesic_distance(p, c) < bump_.radius) {
        bool seen = false;
        for (const Vec3& q : out) seen = seen || (q - p).norm() < 1e-8;
        if (!seen) out.push_back(p);
      }
    }
  }
  return out;
}

} // namespace filippov
