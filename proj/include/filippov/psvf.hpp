#pragma once

// Piecewise-smooth vector fields on S^2: disjoint plane-cut circles, the regions
// they bound, and one field per region.

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "filippov/field.hpp"

namespace filippov {

/// Strong ids. Both are 1-based, matching Sigma_1, R_1, ...
struct CircleId {
  int value = 1;
  int index() const { return value - 1; }
  friend bool operator==(CircleId, CircleId) = default;
};

struct RegionId {
  int value = 1;
  int index() const { return value - 1; }
  friend bool operator==(RegionId, RegionId) = default;
};

enum class Side { Above, Below };

inline Side opposite(Side s) { return s == Side::Above ? Side::Below : Side::Above; }
inline double sign_of(Side s) { return s == Side::Above ? 1.0 : -1.0; }
inline const char* to_string(Side s) { return s == Side::Above ? "above" : "below"; }

struct Region {
  std::vector<int> signs;  // +1 / -1 per circle, in circle order
  FieldHandle field;
};

/// Result of apply_bump.
struct BumpedSystem;

class Psvf {
 public:
  Psvf(std::vector<PlaneCircle> circles, std::vector<Region> regions, std::string name = "psvf")
      : circles_(std::move(circles)), regions_(std::move(regions)), name_(std::move(name)) {
    validate();
  }

  const std::vector<PlaneCircle>& circles() const { return circles_; }
  const std::vector<Region>& regions() const { return regions_; }
  const std::string& name() const { return name_; }

  const PlaneCircle& circle(CircleId id) const {
    if (id.index() < 0 || id.index() >= static_cast<int>(circles_.size())) {
      throw Error(ErrorCode::InvalidInput, "unknown circle id " + std::to_string(id.value));
    }
    return circles_[static_cast<std::size_t>(id.index())];
  }

  const FieldHandle& field(RegionId id) const {
    if (id.index() < 0 || id.index() >= static_cast<int>(regions_.size())) {
      throw Error(ErrorCode::InvalidInput, "unknown region id " + std::to_string(id.value));
    }
    return regions_[static_cast<std::size_t>(id.index())].field;
  }

  int circle_count() const { return static_cast<int>(circles_.size()); }
  int region_count() const { return static_cast<int>(regions_.size()); }

  /// Region whose sign vector matches p; throws OnSwitchingManifold near any circle.
  RegionId region_of(const Vec3& p) const {
    for (const auto& c : circles_) {
      if (std::abs(c.gamma(p)) <= tol::kOnSigma) {
        throw Error(ErrorCode::OnSwitchingManifold,
                    "point lies on circle " + std::to_string(c.id()));
      }
    }
    return region_by_signs(p);
  }

  /// Same as region_of but never throws on Sigma: points on a circle are assigned
  /// by the side given for that circle.
  RegionId region_on_side(const Vec3& p, CircleId on, Side side) const {
    std::vector<int> s(circles_.size());
    for (std::size_t i = 0; i < circles_.size(); ++i) {
      s[i] = static_cast<int>(i) == on.index() ? (side == Side::Above ? 1 : -1)
                                               : (circles_[i].gamma(p) > 0.0 ? 1 : -1);
    }
    return lookup(s);
  }

  /// Region adjacent to circle `id` on the given side.
  RegionId adjacent_region(CircleId id, Side side) const {
    const auto& pair = adjacency_.at(static_cast<std::size_t>(id.index()));
    return side == Side::Above ? pair.first : pair.second;
  }

  const FieldHandle& adjacent_field(CircleId id, Side side) const {
    return field(adjacent_region(id, side));
  }

  /// Side of circle `id` on which region `r` lies.
  Side side_of_region(CircleId id, RegionId r) const {
    if (adjacent_region(id, Side::Above) == r) return Side::Above;
    if (adjacent_region(id, Side::Below) == r) return Side::Below;
    throw Error(ErrorCode::InvalidInput, "region is not adjacent to circle");
  }

  /// The system with every field negated (time reversal).
  Psvf time_reversed() const {
    std::vector<Region> regions = regions_;
    for (auto& r : regions) r.field = r.field->negated();
    return Psvf(circles_, std::move(regions), name_ + "-reversed");
  }

  /// Replace one region's field.
  Psvf with_field(RegionId id, FieldHandle f, std::string name) const {
    std::vector<Region> regions = regions_;
    regions.at(static_cast<std::size_t>(id.index())).field = std::move(f);
    return Psvf(circles_, std::move(regions), std::move(name));
  }

 private:
  RegionId region_by_signs(const Vec3& p) const {
    std::vector<int> s(circles_.size());
    for (std::size_t i = 0; i < circles_.size(); ++i) s[i] = circles_[i].gamma(p) > 0.0 ? 1 : -1;
    return lookup(s);
  }

  RegionId lookup(const std::vector<int>& s) const {
    const auto it = by_signs_.find(s);
    if (it == by_signs_.end()) {
      throw Error(ErrorCode::InvalidInput, "sign vector does not match any region");
    }
    return it->second;
  }

  void validate() {
    const std::size_t n = circles_.size();
    if (regions_.size() != n + 1) {
      throw Error(ErrorCode::InvalidInput, "a system with n circles needs n+1 regions");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (circles_[i].id() != static_cast<int>(i) + 1) {
        throw Error(ErrorCode::InvalidInput, "circle ids must be 1..n in order");
      }
      for (std::size_t j = i + 1; j < n; ++j) {
        if (circles_intersect(circles_[i], circles_[j])) {
          throw Error(ErrorCode::InvalidInput, "switching circles must be pairwise disjoint");
        }
      }
    }
    for (std::size_t r = 0; r < regions_.size(); ++r) {
      const auto& reg = regions_[r];
      if (reg.signs.size() != n) {
        throw Error(ErrorCode::InvalidInput, "region sign vector has the wrong length");
      }
      for (int s : reg.signs) {
        if (s != 1 && s != -1) throw Error(ErrorCode::InvalidInput, "region signs must be +1 or -1");
      }
      if (!reg.field) throw Error(ErrorCode::InvalidInput, "region without a field");
      if (!by_signs_.emplace(reg.signs, RegionId{static_cast<int>(r) + 1}).second) {
        throw Error(ErrorCode::InvalidInput, "duplicate region sign vector");
      }
    }
    // every realized sign vector must be declared; every declared one realized
    std::map<std::vector<int>, bool> seen;
    for (const Vec3& p : fibonacci_sphere(4000)) {
      bool near = false;
      std::vector<int> s(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double g = circles_[i].gamma(p);
        near = near || std::abs(g) < 1e-9;
        s[i] = g > 0.0 ? 1 : -1;
      }
      if (near) continue;
      if (!by_signs_.count(s)) {
        throw Error(ErrorCode::InvalidInput, "some part of the sphere is not covered by a region");
      }
      seen[s] = true;
    }
    adjacency_.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = circles_[i];
      const Vec3 p = circle_point(c, 0.3);
      const Vec3 dn = c.side_normal(p);
      const Vec3 up = (p + 1e-6 * dn).normalized();
      const Vec3 down = (p - 1e-6 * dn).normalized();
      adjacency_.emplace_back(region_by_signs(up), region_by_signs(down));
    }
    for (const auto& reg : regions_) {
      bool adjacent = n == 0;
      for (const auto& [a, b] : adjacency_) {
        adjacent = adjacent || regions_[static_cast<std::size_t>(a.index())].signs == reg.signs ||
                   regions_[static_cast<std::size_t>(b.index())].signs == reg.signs;
      }
      if (!adjacent && !seen.count(reg.signs)) {
        throw Error(ErrorCode::InvalidInput, "declared region is empty on the sphere");
      }
    }
    // fields must be tangent to the sphere
    for (const auto& reg : regions_) {
      for (const Vec3& p : fibonacci_sphere(64)) {
        if (std::abs(reg.field->eval(p).dot(p)) > tol::kUnitInput) {
          throw Error(ErrorCode::InvalidInput, "field " + reg.field->label() + " is not tangent to S^2");
        }
      }
    }
  }

  std::vector<PlaneCircle> circles_;
  std::vector<Region> regions_;
  std::string name_;
  std::map<std::vector<int>, RegionId> by_signs_;
  std::vector<std::pair<RegionId, RegionId>> adjacency_;  // (above, below) per circle
};

// ---------------------------------------------------------------------------
// Builtin systems

/// Axis of the band field Y_theta: the rotation of -X by theta clockwise about x.
inline Vec3 z_theta_band_axis(double theta) { return Vec3(0.0, -std::cos(theta), std::sin(theta)); }

/// Field X(p) = (z, 0, -x), the rotation about the y axis.
inline FieldHandle cap_field_x() { return LinearField::from_axis(Vec3(0.0, 1.0, 0.0), "X"); }

/// Three-zone system: X on the caps |z| >= 1/2, Y_theta on the band.
inline Psvf make_z_theta(double theta) {
  if (!(theta > 0.0 && theta < kPi)) {
    throw Error(ErrorCode::InvalidAngle, "theta must lie in (0, pi)");
  }
  std::vector<PlaneCircle> circles{
      PlaneCircle(Vec3::UnitZ(), 0.5, 1),
      PlaneCircle(Vec3::UnitZ(), -0.5, 2),
  };
  const FieldHandle x = cap_field_x();
  const FieldHandle y = LinearField::from_axis(z_theta_band_axis(theta), "Y_theta");
  std::vector<Region> regions{
      Region{{1, 1}, x},
      Region{{-1, 1}, y},
      Region{{-1, -1}, x},
  };
  std::ostringstream name;
  name.precision(17);
  name << "z-theta(" << theta << ")";
  return Psvf(std::move(circles), std::move(regions), name.str());
}

// ---------------------------------------------------------------------------
// Perturbation

struct BumpedSystem {
  Psvf system;
  double sup_norm;  // max |W| over the support, sampled
};

/// Adds the bump to the field of region `id`. The support must avoid every circle.
inline BumpedSystem apply_bump(const Psvf& psvf, const BumpPerturbation& bump, RegionId id) {
  bump.validate();
  for (const auto& c : psvf.circles()) {
    if (distance_to_circle(c, bump.center.vec()) <= bump.radius) {
      throw Error(ErrorCode::SupportTouchesSigma,
                  "bump support meets circle " + std::to_string(c.id()));
    }
  }
  if (!(psvf.region_of(bump.center.vec()) == id)) {
    throw Error(ErrorCode::InvalidInput, "bump center is not inside the named region");
  }
  auto field = std::make_shared<BumpedField>(psvf.field(id), bump);
  // sup norm of the added term, sampled on a polar grid of the support
  double sup = 0.0;
  const Vec3 c = bump.center.vec();
  const Vec3 u = (std::abs(c.z()) < 0.9 ? c.cross(Vec3::UnitZ()) : c.cross(Vec3::UnitX())).normalized();
  const Vec3 w = c.cross(u);
  for (int i = 0; i <= 50; ++i) {
    const double r = bump.radius * i / 50.0;
    for (int j = 0; j < 72; ++j) {
      const double a = kTwoPi * j / 72.0;
      const Vec3 axis = (std::cos(a) * u + std::sin(a) * w).cross(c).normalized();
      sup = std::max(sup, bump.eval(rotate(c, axis, r)).norm());
    }
  }
  return BumpedSystem{psvf.with_field(id, field, psvf.name() + "+bump"), sup};
}

// ---------------------------------------------------------------------------
// JSON ingestion

inline Vec3 json_vec3(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::InvalidInput, std::string(what) + " must be an array of 3 numbers");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

/// Accepts {"circles":[{"normal":[..],"offset":..}], "regions":[{"signs":[..],
/// "field":{"matrix":[[..],[..],[..]]}}]} or {"builtin":"z-theta","theta":..}.
inline Psvf psvf_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.is_object()) throw Error(ErrorCode::InvalidInput, "system document must be an object");
    if (doc.contains("builtin")) {
      for (const auto& [key, _] : doc.items()) {
        if (key != "builtin" && key != "theta") {
          throw Error(ErrorCode::InvalidInput, "unknown key '" + key + "' in builtin system");
        }
      }
      if (doc.at("builtin").get<std::string>() != "z-theta") {
        throw Error(ErrorCode::InvalidInput, "unknown builtin system");
      }
      return make_z_theta(doc.value("theta", kPi / 3.0));
    }
    for (const auto& [key, _] : doc.items()) {
      if (key != "circles" && key != "regions") {
        throw Error(ErrorCode::InvalidInput, "unknown key '" + key + "' in system");
      }
    }
    std::vector<PlaneCircle> circles;
    int id = 1;
    for (const auto& c : doc.at("circles")) {
      circles.emplace_back(json_vec3(c.at("normal"), "normal"), c.at("offset").get<double>(), id++);
    }
    std::vector<Region> regions;
    int k = 1;
    for (const auto& r : doc.at("regions")) {
      const auto& m = r.at("field").at("matrix");
      if (!m.is_array() || m.size() != 3) throw Error(ErrorCode::InvalidInput, "matrix must be 3x3");
      Mat3 a;
      for (int i = 0; i < 3; ++i) {
        if (!m[static_cast<std::size_t>(i)].is_array() || m[static_cast<std::size_t>(i)].size() != 3) {
          throw Error(ErrorCode::InvalidInput, "matrix must be 3x3");
        }
        for (int j = 0; j < 3; ++j) a(i, j) = m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
      }
      regions.push_back(Region{r.at("signs").get<std::vector<int>>(),
                               std::make_shared<LinearField>(a, "F" + std::to_string(k++))});
    }
    return Psvf(std::move(circles), std::move(regions), "json");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("malformed system JSON: ") + e.what());
  }
}

inline Psvf load_psvf(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidInput, "cannot open system file " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidInput, std::string("malformed system JSON: ") + e.what());
  }
  return psvf_from_json(doc);
}

} // namespace filippov
