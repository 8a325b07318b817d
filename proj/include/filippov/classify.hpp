#pragma once

// Pointwise analysis on the switching circles: Lie derivatives, the
// crossing/sliding/escaping split, the sliding field and tangency points.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "filippov/psvf.hpp"

namespace filippov {

inline TangentVector eval_field(const Field& f, const SpherePoint& p) { return f.at(p); }

enum class SigmaClass { Crossing, Sliding, Escaping, Tangency };

/// Which adjacent fields are tangent at a tangency point.
enum class TangentSides { None, Above, Below, Both };

struct RegionClass {
  SigmaClass kind = SigmaClass::Crossing;
  TangentSides sides = TangentSides::None;

  bool is(SigmaClass k) const { return kind == k; }
  friend bool operator==(const RegionClass&, const RegionClass&) = default;
};

inline const char* to_string(SigmaClass k) {
  switch (k) {
    case SigmaClass::Crossing: return "crossing";
    case SigmaClass::Sliding: return "sliding";
    case SigmaClass::Escaping: return "escaping";
    case SigmaClass::Tangency: return "tangency";
  }
  return "?";
}

inline const char* to_string(TangentSides s) {
  switch (s) {
    case TangentSides::None: return "none";
    case TangentSides::Above: return "above";
    case TangentSides::Below: return "below";
    case TangentSides::Both: return "both";
  }
  return "?";
}

enum class Visibility { Visible, Invisible };
enum class DoubleType { None, Elliptic, Hyperbolic, Parabolic };

inline const char* to_string(Visibility v) { return v == Visibility::Visible ? "visible" : "invisible"; }

inline const char* to_string(DoubleType d) {
  switch (d) {
    case DoubleType::None: return "none";
    case DoubleType::Elliptic: return "elliptic";
    case DoubleType::Hyperbolic: return "hyperbolic";
    case DoubleType::Parabolic: return "parabolic";
  }
  return "?";
}

/// Contact of one adjacent field with the circle.
struct SideContact {
  int order = 2;        // first k with a non-negligible k-th Lie derivative
  double value = 0.0;   // that derivative
  Visibility visibility = Visibility::Visible;

  bool odd() const { return order % 2 == 1; }
};

struct TangencyInfo {
  SpherePoint point;
  CircleId circle;
  double phi = 0.0;
  std::optional<SideContact> above;
  std::optional<SideContact> below;
  DoubleType double_type = DoubleType::None;

  TangentSides sides() const {
    if (above && below) return TangentSides::Both;
    if (above) return TangentSides::Above;
    if (below) return TangentSides::Below;
    return TangentSides::None;
  }
  const std::optional<SideContact>& contact(Side s) const { return s == Side::Above ? above : below; }
};

namespace detail {

inline void require_on_circle(const PlaneCircle& c, const Vec3& p) {
  if (std::abs(c.gamma(p)) > tol::kOffCircle) {
    throw Error(ErrorCode::OffCircle, "point is not on circle " + std::to_string(c.id()));
  }
}

inline double wrap_angle(double phi) {
  phi = std::fmod(phi, kTwoPi);
  return phi < 0.0 ? phi + kTwoPi : phi;
}

inline double angle_gap(double a, double b) {
  const double d = std::abs(wrap_angle(a) - wrap_angle(b));
  return std::min(d, kTwoPi - d);
}

} // namespace detail

/// k-th Lie derivative of the circle's level function along the field at p.
inline double lie_derivative(const Field& field, const PlaneCircle& circle, const Vec3& p, int k) {
  if (k < 1 || k > tol::kMaxContactOrder) {
    throw Error(ErrorCode::OrderTooHigh, "Lie derivative order must lie in 1..4");
  }
  detail::require_on_circle(circle, p);
  return field.flow_derivative(p, k).dot(circle.normal());
}

/// Normal components (a, b) of the fields above and below the circle at p.
inline std::pair<double, double> normal_components(const Psvf& psvf, CircleId id, const Vec3& p) {
  const PlaneCircle& c = psvf.circle(id);
  return {psvf.adjacent_field(id, Side::Above)->eval(p).dot(c.normal()),
          psvf.adjacent_field(id, Side::Below)->eval(p).dot(c.normal())};
}

inline RegionClass classify_components(double a, double b) {
  const bool ta = std::abs(a) <= tol::kTangency;
  const bool tb = std::abs(b) <= tol::kTangency;
  if (ta && tb) return {SigmaClass::Tangency, TangentSides::Both};
  if (ta) return {SigmaClass::Tangency, TangentSides::Above};
  if (tb) return {SigmaClass::Tangency, TangentSides::Below};
  if (a * b > 0.0) return {SigmaClass::Crossing, TangentSides::None};
  if (a < 0.0) return {SigmaClass::Sliding, TangentSides::None};
  return {SigmaClass::Escaping, TangentSides::None};
}

inline RegionClass classify_sigma_point(const Psvf& psvf, CircleId id, const Vec3& p) {
  detail::require_on_circle(psvf.circle(id), p);
  const auto [a, b] = normal_components(psvf, id, p);
  return classify_components(a, b);
}

namespace detail {

inline Vec3 sliding_combination(const Psvf& psvf, CircleId id, const Vec3& p, double a, double b) {
  const Vec3 fa = psvf.adjacent_field(id, Side::Above)->eval(p);
  const Vec3 fb = psvf.adjacent_field(id, Side::Below)->eval(p);
  return (b * fa - a * fb) / (b - a);
}

} // namespace detail

/// Filippov sliding field at p. Where the denominator vanishes (double
/// tangencies) the symmetric limit along the circle is returned if it exists.
inline Vec3 sliding_field_at(const Psvf& psvf, CircleId id, const Vec3& p) {
  const PlaneCircle& c = psvf.circle(id);
  detail::require_on_circle(c, p);
  const auto [a, b] = normal_components(psvf, id, p);
  if (std::abs(a - b) >= tol::kDegenerateDenominator) {
    return detail::sliding_combination(psvf, id, p, a, b);
  }
  // Richardson extrapolation of the two-sided average at h and 2h
  const double phi = c.angle_of(p);
  auto side_value = [&](double dphi) -> std::optional<Vec3> {
    const Vec3 q = circle_point(c, phi + dphi);
    const auto [qa, qb] = normal_components(psvf, id, q);
    if (std::abs(qa - qb) < tol::kDegenerateDenominator) return std::nullopt;
    return detail::sliding_combination(psvf, id, q, qa, qb);
  };
  constexpr double h = 1e-4;
  const auto p1 = side_value(h), m1 = side_value(-h), p2 = side_value(2 * h), m2 = side_value(-2 * h);
  if (!p1 || !m1 || !p2 || !m2 || (*p1 - *m1).norm() > 1e-2) {
    throw Error(ErrorCode::DegenerateDenominator, "sliding field denominator vanishes at p");
  }
  const Vec3 l1 = 0.5 * (*p1 + *m1);
  const Vec3 l2 = 0.5 * (*p2 + *m2);
  Vec3 z = (4.0 * l1 - l2) / 3.0;
  // the limit is tangent to the circle; drop the extrapolation residue
  const Vec3 t = c.tangent(phi);
  return z.dot(t) * t;
}

/// Convex weight lambda with Z = lambda F_above + (1 - lambda) F_below.
inline double sliding_weight(double a, double b) { return b / (b - a); }

inline TangencyInfo classify_tangency(const Psvf& psvf, CircleId id, const Vec3& p) {
  const PlaneCircle& c = psvf.circle(id);
  detail::require_on_circle(c, p);
  const auto [a, b] = normal_components(psvf, id, p);
  TangencyInfo info;
  info.point = SpherePoint(p.normalized());
  info.circle = id;
  info.phi = c.angle_of(p);
  auto contact = [&](Side side) {
    const Field& f = *psvf.adjacent_field(id, side);
    for (int k = 2; k <= tol::kMaxContactOrder; ++k) {
      const double v = lie_derivative(f, c, p, k);
      if (std::abs(v) > tol::kContactOrder) {
        SideContact sc{k, v, Visibility::Visible};
        if (k % 2 == 0 && (v > 0.0) != (side == Side::Above)) sc.visibility = Visibility::Invisible;
        return sc;
      }
    }
    throw Error(ErrorCode::ContactOrderUnresolved,
                std::string("no Lie derivative of order <= 4 exceeds 1e-8 on the ") + to_string(side) +
                    " side of circle " + std::to_string(id.value));
  };
  if (std::abs(a) <= tol::kTangency) info.above = contact(Side::Above);
  if (std::abs(b) <= tol::kTangency) info.below = contact(Side::Below);
  if (!info.above && !info.below) {
    throw Error(ErrorCode::InvalidInput, "point is not a tangency of either adjacent field");
  }
  if (info.above && info.below) {
    const bool va = info.above->visibility == Visibility::Visible;
    const bool vb = info.below->visibility == Visibility::Visible;
    info.double_type = (va && vb) ? DoubleType::Hyperbolic
                       : (!va && !vb) ? DoubleType::Elliptic
                                      : DoubleType::Parabolic;
  }
  return info;
}

namespace detail {

/// Roots of f over [0, 2pi) by uniform sampling, sign-change bisection and a
/// golden-section search for touching zeros. Throws when f vanishes on an arc.
template <class F>
std::vector<double> circle_roots(const F& f, int samples, double zero_tol, const char* what) {
  std::vector<double> phis(static_cast<std::size_t>(samples));
  std::vector<double> vals(static_cast<std::size_t>(samples));
  for (int j = 0; j < samples; ++j) {
    phis[static_cast<std::size_t>(j)] = kTwoPi * j / samples;
    vals[static_cast<std::size_t>(j)] = f(phis[static_cast<std::size_t>(j)]);
  }
  auto at = [&](int j) { return vals[static_cast<std::size_t>(((j % samples) + samples) % samples)]; };
  for (int j = 0; j < samples; ++j) {
    if (std::abs(at(j)) <= zero_tol && std::abs(at(j + 1)) <= zero_tol && std::abs(at(j + 2)) <= zero_tol) {
      throw Error(ErrorCode::NonIsolatedTangency, std::string(what) + " vanishes along an arc of the circle");
    }
  }
  std::vector<double> roots;
  const double step = kTwoPi / samples;
  for (int j = 0; j < samples; ++j) {
    const double lo_phi = step * j;
    const double f0 = at(j);
    const double f1 = at(j + 1);
    if (f0 == 0.0) {
      roots.push_back(lo_phi);
      continue;
    }
    if (f1 != 0.0 && (f0 < 0.0) != (f1 < 0.0)) {
      double lo = lo_phi, hi = lo_phi + step;
      const bool neg_lo = f0 < 0.0;
      // bisect down to the representable limit, far below the 1e-10 contract
      while (hi - lo > 1e-15) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = f(mid);
        if (fm == 0.0) {
          lo = hi = mid;
          break;
        }
        ((fm < 0.0) == neg_lo ? lo : hi) = mid;
      }
      roots.push_back(wrap_angle(0.5 * (lo + hi)));
      continue;
    }
    // touching zero: |f| has a sampled local minimum without a sign change
    const double fp = at(j - 1);
    if ((fp < 0.0) == (f0 < 0.0) && (f1 < 0.0) == (f0 < 0.0) && std::abs(f0) < std::abs(fp) &&
        std::abs(f0) <= std::abs(f1)) {
      double lo = lo_phi - step, hi = lo_phi + step;
      const double g = 0.5 * (std::sqrt(5.0) - 1.0);
      double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
      double v1 = std::abs(f(x1)), v2 = std::abs(f(x2));
      for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
        if (v1 < v2) {
          hi = x2;
          x2 = x1;
          v2 = v1;
          x1 = hi - g * (hi - lo);
          v1 = std::abs(f(x1));
        } else {
          lo = x1;
          x1 = x2;
          v1 = v2;
          x2 = lo + g * (hi - lo);
          v2 = std::abs(f(x2));
        }
      }
      const double m = 0.5 * (lo + hi);
      if (std::abs(f(m)) <= zero_tol) roots.push_back(wrap_angle(m));
    }
  }
  return roots;
}

} // namespace detail

/// Every tangency of either adjacent field on the circle, merged and classified.
inline std::vector<TangencyInfo> find_tangencies(const Psvf& psvf, CircleId id) {
  const PlaneCircle& c = psvf.circle(id);
  const Vec3 n = c.normal();
  const FieldHandle fa = psvf.adjacent_field(id, Side::Above);
  const FieldHandle fb = psvf.adjacent_field(id, Side::Below);
  auto a = [&](double phi) { return fa->eval(circle_point(c, phi)).dot(n); };
  auto b = [&](double phi) { return fb->eval(circle_point(c, phi)).dot(n); };
  std::vector<double> roots = detail::circle_roots(a, tol::kTangencySamples, tol::kTangency, "field above");
  const std::vector<double> rb = detail::circle_roots(b, tol::kTangencySamples, tol::kTangency, "field below");
  roots.insert(roots.end(), rb.begin(), rb.end());
  std::sort(roots.begin(), roots.end());
  std::vector<double> merged;
  for (double r : roots) {
    if (!merged.empty() && detail::angle_gap(merged.back(), r) <= tol::kRootMerge) continue;
    if (!merged.empty() && detail::angle_gap(merged.front(), r) <= tol::kRootMerge) continue;
    merged.push_back(r);
  }
  std::vector<TangencyInfo> out;
  for (double phi : merged) {
    Vec3 p = circle_point(c, phi);
    // a merged double root: settle both components at the same point
    auto [va, vb] = normal_components(psvf, id, p);
    if (std::abs(va) > tol::kTangency && std::abs(vb) > tol::kTangency) continue;
    out.push_back(classify_tangency(psvf, id, p));
  }
  return out;
}

/// Zeros of the sliding field on the sliding and escaping parts of the circle.
inline std::vector<SpherePoint> pseudo_equilibria(const Psvf& psvf, CircleId id) {
  const PlaneCircle& c = psvf.circle(id);
  auto mode = [&](double phi) {
    const auto [a, b] = normal_components(psvf, id, circle_point(c, phi));
    return classify_components(a, b).kind;
  };
  auto tangential = [&](double phi) {
    const Vec3 p = circle_point(c, phi);
    const auto [a, b] = normal_components(psvf, id, p);
    return detail::sliding_combination(psvf, id, p, a, b).dot(c.tangent(phi));
  };
  const int m = tol::kTangencySamples;
  const double step = kTwoPi / m;
  std::vector<SpherePoint> out;
  auto accept = [&](double phi) {
    const Vec3 p = circle_point(c, phi);
    const auto [a, b] = normal_components(psvf, id, p);
    if (detail::sliding_combination(psvf, id, p, a, b).norm() >= tol::kPseudoEquilibrium) return;
    for (const SpherePoint& q : out) {
      if ((q.vec() - p).norm() < 1e-8) return;
    }
    out.emplace_back(p);
  };
  for (int j = 0; j < m; ++j) {
    double lo = step * j, hi = step * (j + 1);
    const SigmaClass k0 = mode(lo);
    if (k0 != SigmaClass::Sliding && k0 != SigmaClass::Escaping) continue;
    if (mode(hi) != k0) continue;
    double s0 = tangential(lo);
    const double s1 = tangential(hi);
    if (s0 == 0.0) {
      accept(lo);
      continue;
    }
    if ((s0 < 0.0) == (s1 < 0.0)) continue;
    while (hi - lo > 1e-15) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      const double sm = tangential(mid);
      if ((sm < 0.0) == (s0 < 0.0)) {
        lo = mid;
        s0 = sm;
      } else {
        hi = mid;
      }
    }
    accept(0.5 * (lo + hi));
  }
  return out;
}

/// Sampled circle arcs of one class, as [phi_begin, phi_end) with phi_end > phi_begin
/// possibly beyond 2 pi.
inline std::vector<std::pair<double, double>> class_segments(const Psvf& psvf, CircleId id, SigmaClass kind,
                                                             int samples = 3600) {
  const PlaneCircle& c = psvf.circle(id);
  std::vector<bool> in(static_cast<std::size_t>(samples));
  for (int j = 0; j < samples; ++j) {
    const double phi = kTwoPi * (j + 0.5) / samples;
    in[static_cast<std::size_t>(j)] = classify_sigma_point(psvf, id, circle_point(c, phi)).kind == kind;
  }
  std::vector<std::pair<double, double>> segs;
  int start = -1;
  for (int j = 0; j < samples; ++j) {
    if (in[static_cast<std::size_t>(j)] && !in[static_cast<std::size_t>((j + samples - 1) % samples)]) {
      start = j;
      int e = j;
      while (in[static_cast<std::size_t>((e + 1) % samples)] && e + 1 < j + samples) ++e;
      segs.emplace_back(kTwoPi * j / samples, kTwoPi * (e + 1) / samples);
    }
  }
  if (segs.empty() && start < 0 && samples > 0 && in[0]) segs.emplace_back(0.0, kTwoPi);
  return segs;
}

} // namespace filippov
