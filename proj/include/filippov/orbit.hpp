#pragma once

// Event-driven Filippov orbits: region flows, slides along the circles, the
// concatenation rules between them and branching at escaping points.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "filippov/classify.hpp"
#include "filippov/integrator.hpp"

namespace filippov {

enum class ArcMode { RegionFlow, SlidingFlow, EscapingSlide };

inline const char* to_string(ArcMode m) {
  switch (m) {
    case ArcMode::RegionFlow: return "region";
    case ArcMode::SlidingFlow: return "sliding";
    case ArcMode::EscapingSlide: return "escaping";
  }
  return "?";
}

enum class TerminalKind {
  HitCircle,
  ReachedTangency,
  PseudoEquilibrium,
  Equilibrium,  // real equilibrium of a region field
  HorizonReached,
  ExitBranch,
};

inline const char* to_string(TerminalKind k) {
  switch (k) {
    case TerminalKind::HitCircle: return "hit-circle";
    case TerminalKind::ReachedTangency: return "reached-tangency";
    case TerminalKind::PseudoEquilibrium: return "pseudo-equilibrium";
    case TerminalKind::Equilibrium: return "equilibrium";
    case TerminalKind::HorizonReached: return "horizon";
    case TerminalKind::ExitBranch: return "exit-branch";
  }
  return "?";
}

struct TerminalEvent {
  TerminalKind kind = TerminalKind::HorizonReached;
  int circle = 0;            // 0 when no circle is involved
  std::optional<Side> side;  // arriving side for hits, departure side for exits
  bool grazing = false;
  std::optional<TangencyInfo> tangency;
};

struct OrbitSample {
  double t;
  Vec3 p;
};

struct OrbitArc {
  ArcMode mode = ArcMode::RegionFlow;
  int id = 0;  // region id for region flows, circle id for slides
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<OrbitSample> samples;
  TerminalEvent terminal;

  const Vec3& first() const { return samples.front().p; }
  const Vec3& last() const { return samples.back().p; }
  double duration() const { return t_end - t_start; }
};

enum class DecisionKind { Default, Stay, Exit, Dwell };

struct BranchDecision {
  DecisionKind kind = DecisionKind::Default;
  Side side = Side::Above;
  double dwell = 0.0;

  static BranchDecision fallback() { return {}; }
  static BranchDecision stay() { return {DecisionKind::Stay, Side::Above, 0.0}; }
  static BranchDecision exit(Side s) { return {DecisionKind::Exit, s, 0.0}; }
  static BranchDecision dwell_exit(double d, Side s) { return {DecisionKind::Dwell, s, d}; }

  std::string describe() const {
    char buf[64];
    switch (kind) {
      case DecisionKind::Default: return "default";
      case DecisionKind::Stay: return "stay";
      case DecisionKind::Exit: return std::string("exit-") + to_string(side);
      case DecisionKind::Dwell:
        std::snprintf(buf, sizeof buf, "dwell-%.17g-%s", dwell, to_string(side));
        return buf;
    }
    return "?";
  }

  friend bool operator==(const BranchDecision&, const BranchDecision&) = default;
};

enum class EncounterKind {
  Escaping,  // interior point of an escaping segment
  Tangency,  // tangency where an escaping slide is one of several continuations
};

/// A point where the forward orbit is not unique.
struct Encounter {
  EncounterKind kind = EncounterKind::Escaping;
  CircleId circle;
  Vec3 point = Vec3::Zero();
  double t = 0.0;
  std::vector<Side> exits;  // sides whose region the orbit may enter from here
  BranchDecision fallback;  // what the deterministic rules would do
  bool can_slide = true;    // an escaping slide may start here

  bool allows(Side s) const { return std::find(exits.begin(), exits.end(), s) != exits.end(); }
};

struct BranchRecord {
  double t;
  Vec3 point;
  int circle;
  EncounterKind encounter;
  BranchDecision decision;
};

struct FilippovOrbit {
  Vec3 initial = Vec3::UnitZ();
  std::vector<OrbitArc> arcs;
  std::vector<BranchRecord> branch_log;
  TerminalEvent end;                 // why the orbit stopped
  std::optional<Encounter> pending;  // set when stopped at an undecided branch point

  double t_end() const { return arcs.empty() ? 0.0 : arcs.back().t_end; }
  Vec3 final_point() const { return arcs.empty() ? initial : arcs.back().last(); }
};

/// Decides continuations at escaping points and non-unique tangencies.
class BranchPolicy {
 public:
  enum class Rule { StaySliding, ExitNow, Scheduled, Sampled, Tour, Replay, HaltAtBranch };

  static BranchPolicy stay_sliding() { return BranchPolicy(Rule::StaySliding); }
  static BranchPolicy exit_now(Side s) {
    BranchPolicy p(Rule::ExitNow);
    p.side_ = s;
    return p;
  }
  /// One (dwell, side) entry per encounter; a zero dwell exits at once.
  static BranchPolicy scheduled(const std::vector<std::pair<double, Side>>& plan) {
    BranchPolicy p(Rule::Scheduled);
    for (const auto& [d, s] : plan) {
      p.list_.push_back(d > 0.0 ? BranchDecision::dwell_exit(d, s) : BranchDecision::exit(s));
    }
    return p;
  }
  /// Random decisions: exit above, exit below or dwell up to `max_dwell` then exit.
  static BranchPolicy sampled(unsigned long long seed, double max_dwell = 2.0) {
    BranchPolicy p(Rule::Sampled);
    p.seed_ = seed;
    p.max_dwell_ = max_dwell;
    return p;
  }
  /// Deterministic excursions: exit below at two encounters, then above at
  /// two, and so on; a side that is closed at the encounter is reached after
  /// sliding `dwell` along the escaping arc.
  static BranchPolicy tour(double dwell = 0.5) {
    BranchPolicy p(Rule::Tour);
    p.max_dwell_ = dwell;
    return p;
  }
  static BranchPolicy replay(const std::vector<BranchRecord>& log) {
    BranchPolicy p(Rule::Replay);
    for (const auto& r : log) p.list_.push_back(r.decision);
    return p;
  }
  static BranchPolicy halt_at_branch() { return BranchPolicy(Rule::HaltAtBranch); }

  Rule rule() const { return rule_; }
  unsigned long long seed() const { return seed_; }

  /// Decision for the index-th encounter of a run; nullopt halts the orbit.
  std::optional<BranchDecision> decide(const Encounter& enc, std::size_t index, std::mt19937_64& rng) const {
    switch (rule_) {
      case Rule::StaySliding:
        return enc.kind == EncounterKind::Escaping ? BranchDecision::stay() : BranchDecision::fallback();
      case Rule::ExitNow: return BranchDecision::exit(side_);
      case Rule::Scheduled:
        if (index >= list_.size()) {
          throw Error(ErrorCode::PolicyExhausted, "branch schedule ended before the horizon");
        }
        return list_[index];
      case Rule::Replay:
        return index < list_.size() ? list_[index] : BranchDecision::fallback();
      case Rule::Sampled: {
        std::uniform_int_distribution<int> pick(0, 2);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const int k = pick(rng);
        const double d = u(rng) * max_dwell_;
        const Side s = u(rng) < 0.5 ? Side::Above : Side::Below;
        if (k == 2) return BranchDecision::dwell_exit(d, s);
        return BranchDecision::exit(k == 0 ? Side::Above : Side::Below);
      }
      case Rule::Tour: {
        const Side s = (index / 2) % 2 == 0 ? Side::Below : Side::Above;
        if (enc.allows(s) || !enc.can_slide) return BranchDecision::exit(s);
        return BranchDecision::dwell_exit(max_dwell_, s);
      }
      case Rule::HaltAtBranch: return std::nullopt;
    }
    return BranchDecision::fallback();
  }

 private:
  explicit BranchPolicy(Rule r) : rule_(r) {}

  Rule rule_;
  Side side_ = Side::Above;
  std::vector<BranchDecision> list_;
  unsigned long long seed_ = 0;
  double max_dwell_ = 2.0;
};

/// Known tangency of a circle. `info` is empty when the contact order could
/// not be resolved (e.g. an equilibrium sitting on the circle).
struct TangencyPoint {
  Vec3 point;
  double phi;
  std::optional<TangencyInfo> info;
};

class OrbitEngine {
 public:
  explicit OrbitEngine(Psvf psvf) : psvf_(std::move(psvf)) {
    for (const auto& c : psvf_.circles()) {
      const CircleId id{c.id()};
      std::vector<TangencyPoint> list;
      try {
        for (double phi : tangency_angles(id)) {
          const Vec3 p = circle_point(c, phi);
          std::optional<TangencyInfo> info;
          try {
            info = classify_tangency(psvf_, id, p);
          } catch (const Error&) {
          }
          list.push_back({p, phi, info});
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonIsolatedTangency) throw;
      }
      tangencies_.push_back(std::move(list));
    }
  }

  const Psvf& psvf() const { return psvf_; }
  const std::vector<TangencyPoint>& tangencies(CircleId id) const {
    return tangencies_.at(static_cast<std::size_t>(id.index()));
  }

  OrbitArc flow_region(RegionId r, const Vec3& p, double horizon, double t0 = 0.0) const;
  OrbitArc slide(CircleId c, const Vec3& p, double horizon, ArcMode mode, double t0 = 0.0) const;

  FilippovOrbit integrate(const Vec3& p, double horizon, const BranchPolicy& policy) const;

  /// Continues from an encounter after applying `first` there.
  FilippovOrbit continue_from(const Encounter& enc, const BranchDecision& first, double horizon,
                              const BranchPolicy& policy) const;

  /// Duration of the escaping slide from the encounter point (capped).
  double escaping_extent(const Encounter& enc, double cap) const {
    if (!enc.can_slide) return 0.0;
    const OrbitArc arc = slide(enc.circle, enc.point, cap, ArcMode::EscapingSlide, 0.0);
    return arc.duration();
  }

  /// Encounter at p if p is a branch point (escaping interior or non-unique tangency).
  std::optional<Encounter> encounter_at(const Vec3& p) const;

  /// Known tangency within the snap radius of p on the circle.
  const TangencyPoint* snap(CircleId id, const Vec3& p, double own_normal = 1.0) const {
    for (const auto& t : tangencies(id)) {
      const double d = geodesic_distance(t.point, p);
      if (d <= tol::kTangencySnap || (d <= 1e-4 && std::abs(own_normal) <= 1e-4)) return &t;
    }
    return nullptr;
  }

 private:
  enum class Arrival { Start, RegionFlow, Sliding, Escaping };

  struct State {
    enum class Kind { Region, Slide, Encounter, Halt } kind = Kind::Halt;
    RegionId region;
    CircleId circle;
    Vec3 p = Vec3::UnitZ();
    ArcMode mode = ArcMode::SlidingFlow;
    std::optional<BranchDecision> dwell;  // dwell-then-exit on escaping slides
    Encounter enc;
    TerminalEvent halt;
  };

  std::vector<double> tangency_angles(CircleId id) const {
    // roots shared with find_tangencies, without the classification step
    const PlaneCircle& c = psvf_.circle(id);
    const Vec3 n = c.normal();
    const FieldHandle fa = psvf_.adjacent_field(id, Side::Above);
    const FieldHandle fb = psvf_.adjacent_field(id, Side::Below);
    auto a = [&](double phi) { return fa->eval(circle_point(c, phi)).dot(n); };
    auto b = [&](double phi) { return fb->eval(circle_point(c, phi)).dot(n); };
    std::vector<double> roots = detail::circle_roots(a, tol::kTangencySamples, tol::kTangency, "field above");
    const auto rb = detail::circle_roots(b, tol::kTangencySamples, tol::kTangency, "field below");
    roots.insert(roots.end(), rb.begin(), rb.end());
    std::sort(roots.begin(), roots.end());
    std::vector<double> merged;
    for (double r : roots) {
      if (!merged.empty() && detail::angle_gap(merged.back(), r) <= tol::kRootMerge) continue;
      if (!merged.empty() && detail::angle_gap(merged.front(), r) <= tol::kRootMerge) continue;
      merged.push_back(r);
    }
    return merged;
  }

  State region_state(RegionId r, const Vec3& p) const {
    State s;
    s.kind = State::Kind::Region;
    s.region = r;
    s.p = p;
    return s;
  }
  State slide_state(CircleId c, const Vec3& p, ArcMode mode, std::optional<BranchDecision> dwell = {}) const {
    State s;
    s.kind = State::Kind::Slide;
    s.circle = c;
    s.p = p;
    s.mode = mode;
    s.dwell = dwell;
    return s;
  }
  State halt_state(TerminalKind k, CircleId c, const Vec3& p, std::optional<TangencyInfo> info = {}) const {
    State s;
    s.kind = State::Kind::Halt;
    s.p = p;
    s.halt.kind = k;
    s.halt.circle = c.value;
    s.halt.tangency = std::move(info);
    return s;
  }
  State encounter_state(Encounter enc) const {
    State s;
    s.kind = State::Kind::Encounter;
    s.p = enc.point;
    s.circle = enc.circle;
    s.enc = std::move(enc);
    return s;
  }

  /// Whether the field of `side` leaves the circle into its own region at p.
  bool exits_into(CircleId c, const Vec3& p, Side side, const TangencyPoint* tp) const {
    const auto [a, b] = normal_components(psvf_, c, p);
    const double u = side == Side::Above ? a : b;
    if (std::abs(u) > tol::kTangency) return sign_of(side) * u > 0.0;
    if (!tp || !tp->info) return false;
    const auto& contact = tp->info->contact(side);
    return contact && !contact->odd() && contact->visibility == Visibility::Visible;
  }

  /// Class of the circle just ahead along the (extended) sliding field.
  std::optional<SigmaClass> slide_ahead(CircleId c, const Vec3& p) const {
    const PlaneCircle& circle = psvf_.circle(c);
    Vec3 z;
    try {
      z = sliding_field_at(psvf_, c, p);
    } catch (const Error&) {
      return std::nullopt;
    }
    if (z.norm() < tol::kPseudoEquilibrium) return std::nullopt;
    const double phi = circle.angle_of(p);
    const double dir = z.dot(circle.tangent(phi)) > 0.0 ? 1.0 : -1.0;
    const Vec3 q = circle_point(circle, phi + dir * 1e-6);
    const auto [a, b] = normal_components(psvf_, c, q);
    return classify_components(a, b).kind;
  }

  State start_state(const Vec3& p) const;
  State after_hit(CircleId c, Side arriving, Vec3 q, bool grazing) const;
  State at_tangency(CircleId c, const Vec3& q, Arrival arrival, Side arriving, const TangencyPoint* tp) const;
  State apply(const Encounter& enc, BranchDecision d) const;
  FilippovOrbit run(State st, double t0, double horizon, const BranchPolicy& policy,
                    std::optional<BranchDecision> first) const;

  Psvf psvf_;
  std::vector<std::vector<TangencyPoint>> tangencies_;
};

// ---------------------------------------------------------------------------
// Region flow

inline OrbitArc OrbitEngine::flow_region(RegionId r, const Vec3& p0, double horizon, double t0) const {
  using DP = DormandPrince<3>;
  const Field& f = *psvf_.field(r);
  const auto& signs = psvf_.regions().at(static_cast<std::size_t>(r.index())).signs;
  const auto& circles = psvf_.circles();

  OrbitArc arc;
  arc.mode = ArcMode::RegionFlow;
  arc.id = r.value;
  arc.t_start = t0;
  arc.t_end = t0;
  arc.samples.push_back({t0, p0});
  if (f.eval(p0).norm() < tol::kRealEquilibrium) {
    arc.terminal.kind = TerminalKind::Equilibrium;
    return arc;
  }
  std::vector<double> s(signs.begin(), signs.end());
  auto rhs = [&](double, const Vec3& y) -> Vec3 { return f.eval(y); };
  auto post = [](DenseStep<3>& d) { d.y1.normalize(); };

  struct Hit {
    double t;
    std::size_t circle;
    bool grazing;
  };

  auto on_step = [&](const DenseStep<3>& d) -> bool {
    auto point = [&](double t) -> Vec3 { return d.at(t).normalized(); };
    std::optional<Hit> best;
    const double t_ignore = t0 + tol::kEventIgnoreStart;
    for (std::size_t i = 0; i < circles.size(); ++i) {
      const PlaneCircle& c = circles[i];
      const Vec3& n = c.normal();
      auto g = [&](double t) { return s[i] * c.gamma(point(t)); };
      auto crossing_root = [&](double lo, double hi) {
        while (hi - lo > tol::kEventTime) {
          const double mid = 0.5 * (lo + hi);
          (g(mid) >= 0.0 ? lo : hi) = mid;
        }
        return hi;
      };
      const double g1 = s[i] * c.gamma(d.y1);
      std::optional<Hit> h;
      if (g1 < 0.0) {
        const double th = crossing_root(d.t0, d.t1());
        if (th < t_ignore) {
          s[i] = -s[i];  // started on the far side by round-off; adopt it
          continue;
        }
        h = Hit{th, i, false};
      } else {
        const double d0 = s[i] * n.dot(f.eval(d.y0.normalized()));
        const double d1 = s[i] * n.dot(f.eval(d.y1));
        if (d0 < 0.0 && d1 > 0.0) {
          auto dg = [&](double t) { return s[i] * n.dot(f.eval(point(t))); };
          double lo = d.t0, hi = d.t1();
          while (hi - lo > tol::kEventTime) {
            const double mid = 0.5 * (lo + hi);
            (dg(mid) < 0.0 ? lo : hi) = mid;
          }
          const double te = 0.5 * (lo + hi);
          const double ge = g(te);
          if (ge < 0.0) {
            const double th = crossing_root(d.t0, te);
            if (th >= t_ignore) h = Hit{th, i, false};
          } else if (ge <= tol::kGraze && te >= t_ignore && snap(CircleId{c.id()}, point(te))) {
            h = Hit{te, i, true};
          }
        }
      }
      if (h && (!best || h->t < best->t)) best = h;
    }
    if (best) {
      const PlaneCircle& c = circles[best->circle];
      Vec3 q = point(best->t);
      q = circle_point(c, c.angle_of(q));
      if (const TangencyPoint* tp = snap(CircleId{c.id()}, q)) {
        // a touch at a tangency: round-off decides the sign of gamma, so use
        // the turning point of the normal component and the exact point
        const double si = s[best->circle];
        auto dg = [&](double t) { return si * c.normal().dot(f.eval(d.at(t).normalized())); };
        double lo = d.t0, hi = d.t1();
        if (dg(lo) < 0.0 && dg(hi) > 0.0) {
          while (hi - lo > tol::kEventTime) {
            const double mid = 0.5 * (lo + hi);
            (dg(mid) < 0.0 ? lo : hi) = mid;
          }
          best->t = 0.5 * (lo + hi);
        }
        q = tp->point;
      }
      arc.samples.push_back({best->t, q});
      arc.t_end = best->t;
      arc.terminal.kind = TerminalKind::HitCircle;
      arc.terminal.circle = c.id();
      arc.terminal.side = s[best->circle] > 0.0 ? Side::Above : Side::Below;
      arc.terminal.grazing = best->grazing;
      return false;
    }
    arc.samples.push_back({d.t1(), d.y1});
    arc.t_end = d.t1();
    if (f.eval(d.y1).norm() < tol::kRealEquilibrium) {
      arc.terminal.kind = TerminalKind::Equilibrium;
      return false;
    }
    return true;
  };

  DP dp;
  arc.terminal.kind = TerminalKind::HorizonReached;
  dp.drive(rhs, t0, Vec3(p0), t0 + horizon, 0.05, post, on_step);
  return arc;
}

// ---------------------------------------------------------------------------
// Sliding

inline OrbitArc OrbitEngine::slide(CircleId id, const Vec3& p0, double horizon, ArcMode mode, double t0) const {
  using DP = DormandPrince<1>;
  using S1 = DP::State;
  const PlaneCircle& c = psvf_.circle(id);
  const SigmaClass want = mode == ArcMode::SlidingFlow ? SigmaClass::Sliding : SigmaClass::Escaping;
  const RegionClass cls = classify_sigma_point(psvf_, id, p0);
  if (cls.kind != want && cls.kind != SigmaClass::Tangency) {
    throw Error(ErrorCode::WrongMode, std::string("slide start classifies as ") + to_string(cls.kind));
  }
  const double r = c.radius();
  const double phi0 = c.angle_of(p0);
  const FieldHandle fa = psvf_.adjacent_field(id, Side::Above);
  const FieldHandle fb = psvf_.adjacent_field(id, Side::Below);
  const Vec3& n = c.normal();

  auto zfield = [&](double phi) -> Vec3 {
    const Vec3 p = circle_point(c, phi);
    const double a = fa->eval(p).dot(n);
    const double b = fb->eval(p).dot(n);
    if (std::abs(a - b) >= tol::kDegenerateDenominator) {
      return (b * fa->eval(p) - a * fb->eval(p)) / (b - a);
    }
    return sliding_field_at(psvf_, id, p);
  };
  auto rhs = [&](double, const S1& y) -> S1 { return S1(zfield(y[0]).dot(c.tangent(y[0])) / r); };
  // inside the mode both guards are positive
  const double sa = mode == ArcMode::SlidingFlow ? -1.0 : 1.0;
  auto guard = [&](double phi) {
    const Vec3 p = circle_point(c, phi);
    return std::min(sa * fa->eval(p).dot(n), -sa * fb->eval(p).dot(n));
  };

  OrbitArc arc;
  arc.mode = mode;
  arc.id = id.value;
  arc.t_start = t0;
  arc.t_end = t0;
  arc.samples.push_back({t0, circle_point(c, phi0)});
  if (zfield(phi0).norm() < tol::kPseudoEquilibrium) {
    arc.terminal.kind = TerminalKind::PseudoEquilibrium;
    arc.terminal.circle = id.value;
    return arc;
  }
  arc.terminal.kind = TerminalKind::HorizonReached;
  const double t_ignore = t0 + tol::kEventIgnoreStart;

  auto on_step = [&](const DenseStep<1>& d) -> bool {
    auto phi_at = [&](double t) { return d.at(t)[0]; };
    const double g1 = guard(d.y1[0]);
    if (g1 <= 0.0 && d.t1() >= t_ignore) {
      double lo = std::max(d.t0, t_ignore), hi = d.t1();
      if (guard(phi_at(lo)) > 0.0) {
        while (hi - lo > tol::kEventTime) {
          const double mid = 0.5 * (lo + hi);
          (guard(phi_at(mid)) > 0.0 ? lo : hi) = mid;
        }
      } else {
        hi = lo;
      }
      Vec3 q = circle_point(c, phi_at(hi));
      arc.terminal.kind = TerminalKind::ReachedTangency;
      arc.terminal.circle = id.value;
      const auto [a, b] = normal_components(psvf_, id, q);
      const double own = std::min(std::abs(a), std::abs(b));
      if (const TangencyPoint* tp = snap(id, q, own)) {
        q = tp->point;
        arc.terminal.tangency = tp->info;
      } else {
        try {
          arc.terminal.tangency = classify_tangency(psvf_, id, q);
        } catch (const Error&) {
        }
      }
      if (hi > arc.t_end) {
        arc.samples.push_back({hi, q});
        arc.t_end = hi;
      } else {
        arc.samples.back().p = q;
      }
      return false;
    }
    arc.samples.push_back({d.t1(), circle_point(c, d.y1[0])});
    arc.t_end = d.t1();
    if (zfield(d.y1[0]).norm() < tol::kPseudoEquilibrium) {
      arc.terminal.kind = TerminalKind::PseudoEquilibrium;
      arc.terminal.circle = id.value;
      return false;
    }
    return true;
  };

  DP dp;
  dp.drive(rhs, t0, S1(phi0), t0 + horizon, 0.05, [](DenseStep<1>&) {}, on_step, 0.05);
  return arc;
}

// ---------------------------------------------------------------------------
// Concatenation rules

inline std::optional<Encounter> OrbitEngine::encounter_at(const Vec3& p) const {
  const State s = start_state(p);
  if (s.kind == State::Kind::Encounter) return s.enc;
  return std::nullopt;
}

inline OrbitEngine::State OrbitEngine::start_state(const Vec3& p) const {
  for (const auto& c : psvf_.circles()) {
    if (std::abs(c.gamma(p)) > tol::kOffCircle) continue;
    const CircleId id{c.id()};
    const Vec3 q = circle_point(c, c.angle_of(p));
    const auto [a, b] = normal_components(psvf_, id, q);
    if (const TangencyPoint* tp = snap(id, q, std::min(std::abs(a), std::abs(b)))) {
      return at_tangency(id, tp->point, Arrival::Start, Side::Above, tp);
    }
    const RegionClass cls = classify_components(a, b);
    switch (cls.kind) {
      case SigmaClass::Crossing: {
        const Side s = a > 0.0 ? Side::Above : Side::Below;
        return region_state(psvf_.adjacent_region(id, s), q);
      }
      case SigmaClass::Sliding: return slide_state(id, q, ArcMode::SlidingFlow);
      case SigmaClass::Escaping: {
        Encounter e;
        e.kind = EncounterKind::Escaping;
        e.circle = id;
        e.point = q;
        e.exits = {Side::Above, Side::Below};
        e.fallback = BranchDecision::stay();
        return encounter_state(e);
      }
      case SigmaClass::Tangency: return at_tangency(id, q, Arrival::Start, Side::Above, nullptr);
    }
  }
  return region_state(psvf_.region_of(p), p);
}

inline OrbitEngine::State OrbitEngine::after_hit(CircleId id, Side arriving, Vec3 q, bool grazing) const {
  const auto [a, b] = normal_components(psvf_, id, q);
  const double own = arriving == Side::Above ? a : b;
  if (const TangencyPoint* tp = snap(id, q, own)) {
    return at_tangency(id, tp->point, Arrival::RegionFlow, arriving, tp);
  }
  if (grazing) return region_state(psvf_.adjacent_region(id, arriving), q);
  const RegionClass cls = classify_components(a, b);
  switch (cls.kind) {
    case SigmaClass::Crossing:
      return region_state(psvf_.adjacent_region(id, opposite(arriving)), q);
    case SigmaClass::Sliding: return slide_state(id, q, ArcMode::SlidingFlow);
    default: return at_tangency(id, q, Arrival::RegionFlow, arriving, nullptr);
  }
}

inline OrbitEngine::State OrbitEngine::at_tangency(CircleId id, const Vec3& q, Arrival arrival, Side arriving,
                                                   const TangencyPoint* tp) const {
  std::optional<TangencyInfo> info;
  if (tp) {
    info = tp->info;
  } else {
    try {
      info = classify_tangency(psvf_, id, q);
    } catch (const Error&) {
    }
  }
  const auto [a, b] = normal_components(psvf_, id, q);
  std::vector<Side> exits;
  for (Side s : {Side::Above, Side::Below}) {
    if (exits_into(id, q, s, tp)) exits.push_back(s);
  }
  const std::optional<SigmaClass> ahead = slide_ahead(id, q);
  const bool to_escaping = ahead == SigmaClass::Escaping;

  Encounter e;
  e.kind = EncounterKind::Tangency;
  e.circle = id;
  e.point = q;
  e.exits = exits;
  e.can_slide = to_escaping;

  switch (arrival) {
    case Arrival::RegionFlow: {
      const double own = arriving == Side::Above ? a : b;
      if (std::abs(own) <= tol::kTangency) {
        // touching from the region's side: keep flowing in it
        if (!to_escaping) return region_state(psvf_.adjacent_region(id, arriving), q);
        if (!e.allows(arriving)) e.exits.push_back(arriving);
        e.fallback = BranchDecision::exit(arriving);
        return encounter_state(e);
      }
      if (exits_into(id, q, opposite(arriving), tp)) {
        return region_state(psvf_.adjacent_region(id, opposite(arriving)), q);
      }
      if (ahead == SigmaClass::Sliding) return slide_state(id, q, ArcMode::SlidingFlow);
      if (to_escaping) {
        e.fallback = BranchDecision::stay();
        return encounter_state(e);
      }
      return halt_state(TerminalKind::ReachedTangency, id, q, info);
    }
    case Arrival::Start:
    case Arrival::Sliding: {
      if (to_escaping) {
        e.fallback = exits.empty() ? BranchDecision::stay() : BranchDecision::exit(exits.front());
        return encounter_state(e);
      }
      if (ahead == SigmaClass::Sliding && arrival == Arrival::Start) return slide_state(id, q, ArcMode::SlidingFlow);
      if (!exits.empty()) return region_state(psvf_.adjacent_region(id, exits.front()), q);
      if (ahead == SigmaClass::Sliding) return slide_state(id, q, ArcMode::SlidingFlow);
      return halt_state(TerminalKind::ReachedTangency, id, q, info);
    }
    case Arrival::Escaping: {
      if (info && info->double_type == DoubleType::Elliptic) {
        return halt_state(TerminalKind::ReachedTangency, id, q, info);
      }
      if (!exits.empty()) return region_state(psvf_.adjacent_region(id, exits.front()), q);
      if (ahead == SigmaClass::Sliding) return slide_state(id, q, ArcMode::SlidingFlow);
      return halt_state(TerminalKind::ReachedTangency, id, q, info);
    }
  }
  return halt_state(TerminalKind::ReachedTangency, id, q, info);
}

inline OrbitEngine::State OrbitEngine::apply(const Encounter& enc, BranchDecision d) const {
  if (d.kind == DecisionKind::Default) d = enc.fallback;
  if ((d.kind == DecisionKind::Stay || d.kind == DecisionKind::Dwell) && !enc.can_slide) d = enc.fallback;
  if (d.kind == DecisionKind::Exit && !enc.allows(d.side)) d = enc.fallback;
  switch (d.kind) {
    case DecisionKind::Exit: return region_state(psvf_.adjacent_region(enc.circle, d.side), enc.point);
    case DecisionKind::Stay: return slide_state(enc.circle, enc.point, ArcMode::EscapingSlide);
    case DecisionKind::Dwell:
      if (d.dwell <= 0.0) return region_state(psvf_.adjacent_region(enc.circle, d.side), enc.point);
      return slide_state(enc.circle, enc.point, ArcMode::EscapingSlide, d);
    case DecisionKind::Default: break;
  }
  return halt_state(TerminalKind::ReachedTangency, enc.circle, enc.point);
}

inline FilippovOrbit OrbitEngine::run(State st, double t0, double horizon, const BranchPolicy& policy,
                                      std::optional<BranchDecision> first) const {
  FilippovOrbit orbit;
  orbit.initial = st.p;
  orbit.end.kind = TerminalKind::HorizonReached;
  std::mt19937_64 rng(policy.seed());
  std::size_t decisions = 0;
  double t = t0;
  const double t_stop = t0 + horizon;
  int idle = 0;  // consecutive transitions without progress in time

  auto push = [&](OrbitArc&& arc) {
    if (arc.t_end > arc.t_start) {
      t = arc.t_end;
      orbit.arcs.push_back(std::move(arc));
      idle = 0;
    } else {
      ++idle;
    }
  };

  while (t < t_stop) {
    if (idle > 64) {
      orbit.end.kind = TerminalKind::ReachedTangency;
      break;
    }
    switch (st.kind) {
      case State::Kind::Halt:
        orbit.end = st.halt;
        return orbit;
      case State::Kind::Region: {
        OrbitArc arc = flow_region(st.region, st.p, t_stop - t, t);
        const TerminalEvent term = arc.terminal;
        const Vec3 q = arc.last();
        push(std::move(arc));
        if (term.kind == TerminalKind::HitCircle) {
          st = after_hit(CircleId{term.circle}, *term.side, q, term.grazing);
        } else {
          orbit.end = term;
          return orbit;
        }
        break;
      }
      case State::Kind::Slide: {
        double span = t_stop - t;
        const bool dwell = st.dwell.has_value() && st.dwell->dwell < span;
        if (dwell) span = st.dwell->dwell;
        OrbitArc arc = slide(st.circle, st.p, span, st.mode, t);
        const Vec3 q = arc.last();
        if (dwell && arc.terminal.kind == TerminalKind::HorizonReached) {
          arc.terminal.kind = TerminalKind::ExitBranch;
          arc.terminal.circle = st.circle.value;
          arc.terminal.side = st.dwell->side;
          const Side s = st.dwell->side;
          const CircleId c = st.circle;
          push(std::move(arc));
          st = region_state(psvf_.adjacent_region(c, s), q);
          break;
        }
        const TerminalEvent term = arc.terminal;
        const CircleId c = st.circle;
        const ArcMode mode = st.mode;
        push(std::move(arc));
        if (term.kind == TerminalKind::ReachedTangency) {
          const TangencyPoint* tp = snap(c, q, 0.0);
          st = at_tangency(c, q, mode == ArcMode::SlidingFlow ? Arrival::Sliding : Arrival::Escaping, Side::Above,
                           tp);
          if (st.kind == State::Kind::Halt && !st.halt.tangency) st.halt.tangency = term.tangency;
        } else {
          orbit.end = term;
          return orbit;
        }
        break;
      }
      case State::Kind::Encounter: {
        Encounter enc = st.enc;
        enc.t = t;
        std::optional<BranchDecision> d;
        if (first) {
          d = first;
          first.reset();
        } else {
          d = policy.decide(enc, decisions, rng);
        }
        if (!d) {
          orbit.pending = enc;
          orbit.end.kind = TerminalKind::ReachedTangency;
          orbit.end.circle = enc.circle.value;
          return orbit;
        }
        ++decisions;
        orbit.branch_log.push_back({t, enc.point, enc.circle.value, enc.kind, *d});
        st = apply(enc, *d);
        ++idle;
        break;
      }
    }
  }
  orbit.end.kind = TerminalKind::HorizonReached;
  return orbit;
}

inline FilippovOrbit OrbitEngine::integrate(const Vec3& p, double horizon, const BranchPolicy& policy) const {
  if (std::abs(p.norm() - 1.0) > tol::kUnitInput) {
    throw Error(ErrorCode::InvalidInput, "start point is not on the unit sphere");
  }
  if (!(horizon > 0.0)) {
    FilippovOrbit o;
    o.initial = p;
    return o;
  }
  FilippovOrbit o = run(start_state(p), 0.0, horizon, policy, std::nullopt);
  o.initial = p;
  return o;
}

inline FilippovOrbit OrbitEngine::continue_from(const Encounter& enc, const BranchDecision& first, double horizon,
                                                const BranchPolicy& policy) const {
  FilippovOrbit o = run(encounter_state(enc), enc.t, horizon, policy, first);
  o.initial = enc.point;
  return o;
}

// ---------------------------------------------------------------------------
// Free-function front ends

inline OrbitArc flow_region(const Psvf& psvf, RegionId r, const Vec3& p, double horizon) {
  return OrbitEngine(psvf).flow_region(r, p, horizon);
}

inline OrbitArc slide(const Psvf& psvf, CircleId c, const Vec3& p, double horizon, ArcMode mode) {
  return OrbitEngine(psvf).slide(c, p, horizon, mode);
}

inline FilippovOrbit integrate_orbit(const Psvf& psvf, const Vec3& p, double horizon, const BranchPolicy& policy) {
  return OrbitEngine(psvf).integrate(p, horizon, policy);
}

/// Continuation options at an encounter: the feasible immediate exits, then
/// `budget - 2` exits after dwell times equally spaced over the remaining
/// escaping slide, with alternating sides. Truncated to `budget`.
/// Number of distinct phases used for the sampled dwell.
inline constexpr int kDwellPhases = 8;

/// Fraction of the escaping arc used by the sampled dwell at branch `index`.
inline double dwell_phase(std::size_t index) {
  const double g = 0.6180339887498949 * static_cast<double>(index % kDwellPhases + 1);
  return g - std::floor(g);
}

/// Continuations at an escaping encounter: the feasible exits, then
/// budget - 2 dwells equally spaced over the remaining escaping arc. A slot
/// left free by an infeasible exit is given to a dwell at a sampled fraction
/// of the arc, whose phase depends on the branch index.
inline std::vector<BranchDecision> branch_options(const OrbitEngine& engine, const Encounter& enc, int budget,
                                                  double cap = 50.0, std::size_t index = 0) {
  std::vector<BranchDecision> out;
  if (budget <= 0) return out;
  for (Side s : {Side::Above, Side::Below}) {
    if (enc.allows(s)) out.push_back(BranchDecision::exit(s));
  }
  const int k = budget - 2;
  const double extent = enc.can_slide ? engine.escaping_extent(enc, cap) : 0.0;
  if (extent > 0.0) {
    for (int j = 1; j <= k; ++j) {
      const double d = extent * j / (k + 1);
      out.push_back(BranchDecision::dwell_exit(d, j % 2 == 1 ? Side::Above : Side::Below));
    }
    if (static_cast<int>(out.size()) < budget && enc.exits.size() < 2) {
      const Side s = enc.allows(Side::Above) ? Side::Below : Side::Above;
      out.push_back(BranchDecision::dwell_exit(extent * dwell_phase(index), s));
    }
  }
  if (static_cast<int>(out.size()) > budget) out.resize(static_cast<std::size_t>(budget));
  return out;
}

/// Orbit that stops at its first branch point (or at the horizon).
inline FilippovOrbit orbit_prefix(const OrbitEngine& engine, const Vec3& p, double horizon) {
  return engine.integrate(p, horizon, BranchPolicy::halt_at_branch());
}

/// Continuations of a prefix that ends at a branch point, each followed for
/// `horizon` more time units under `after`.
inline std::vector<FilippovOrbit> enumerate_branches(const OrbitEngine& engine, const FilippovOrbit& prefix,
                                                     int budget, double horizon = 10.0,
                                                     const BranchPolicy& after = BranchPolicy::stay_sliding()) {
  if (!prefix.pending) throw Error(ErrorCode::NotABranchPoint, "orbit prefix does not end at a branch point");
  const Encounter& enc = *prefix.pending;
  std::vector<FilippovOrbit> out;
  for (const BranchDecision& d : branch_options(engine, enc, budget, 50.0, prefix.branch_log.size())) {
    FilippovOrbit tail = engine.continue_from(enc, d, horizon, after);
    FilippovOrbit full = prefix;
    full.pending.reset();
    full.arcs.insert(full.arcs.end(), tail.arcs.begin(), tail.arcs.end());
    full.branch_log.insert(full.branch_log.end(), tail.branch_log.begin(), tail.branch_log.end());
    full.end = tail.end;
    full.pending = tail.pending;
    out.push_back(std::move(full));
  }
  return out;
}

/// Position along the orbit at time t (linear in the samples, then projected).
inline Vec3 orbit_point_at(const FilippovOrbit& orbit, double t) {
  for (const OrbitArc& arc : orbit.arcs) {
    if (t > arc.t_end) continue;
    const auto& s = arc.samples;
    for (std::size_t k = 1; k < s.size(); ++k) {
      if (t <= s[k].t) {
        const double w = (t - s[k - 1].t) / std::max(s[k].t - s[k - 1].t, 1e-300);
        return ((1.0 - w) * s[k - 1].p + w * s[k].p).normalized();
      }
    }
    return arc.last();
  }
  return orbit.final_point();
}

// ---------------------------------------------------------------------------
// Independent checker

struct ValidationReport {
  bool ok = true;
  std::string violation;  // first failure, empty when ok

  explicit operator bool() const { return ok; }
};

namespace detail {

inline Vec3 rk4_region(const Field& f, Vec3 p, double dt) {
  const int n = std::max(1, static_cast<int>(std::ceil(std::abs(dt) / 0.005)));
  const double h = dt / n;
  for (int i = 0; i < n; ++i) {
    const Vec3 k1 = f.eval(p);
    const Vec3 k2 = f.eval(p + 0.5 * h * k1);
    const Vec3 k3 = f.eval(p + 0.5 * h * k2);
    const Vec3 k4 = f.eval(p + h * k3);
    p = (p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).normalized();
  }
  return p;
}

inline Vec3 rk4_slide(const Psvf& psvf, CircleId id, const Vec3& p, double dt) {
  const PlaneCircle& c = psvf.circle(id);
  auto rate = [&](double phi) {
    return sliding_field_at(psvf, id, circle_point(c, phi)).dot(c.tangent(phi)) / c.radius();
  };
  double phi = c.angle_of(p);
  const int n = std::max(1, static_cast<int>(std::ceil(std::abs(dt) / 0.005)));
  const double h = dt / n;
  for (int i = 0; i < n; ++i) {
    const double k1 = rate(phi);
    const double k2 = rate(phi + 0.5 * h * k1);
    const double k3 = rate(phi + 0.5 * h * k2);
    const double k4 = rate(phi + h * k3);
    phi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return circle_point(c, phi);
}

inline std::string fmt_violation(const char* what, std::size_t arc, double t) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s (arc %zu, t=%.9g)", what, arc, t);
  return buf;
}

} // namespace detail

/// Re-checks an orbit with independent integration and classification.
inline ValidationReport validate_orbit(const Psvf& psvf, const FilippovOrbit& orbit) {
  ValidationReport rep;
  auto fail = [&](std::string why) {
    rep.ok = false;
    rep.violation = std::move(why);
    return rep;
  };
  for (std::size_t ai = 0; ai < orbit.arcs.size(); ++ai) {
    const OrbitArc& arc = orbit.arcs[ai];
    if (!(arc.t_end > arc.t_start)) return fail(detail::fmt_violation("empty arc", ai, arc.t_start));
    if (arc.samples.size() < 2) return fail(detail::fmt_violation("arc with fewer than two samples", ai, arc.t_start));
    for (std::size_t k = 0; k < arc.samples.size(); ++k) {
      const auto& s = arc.samples[k];
      if (std::abs(s.p.norm() - 1.0) > tol::kUnitInput) {
        return fail(detail::fmt_violation("sample off the unit sphere", ai, s.t));
      }
      if (k > 0 && !(s.t > arc.samples[k - 1].t)) {
        return fail(detail::fmt_violation("sample times not increasing", ai, s.t));
      }
    }
    if (std::abs(arc.samples.front().t - arc.t_start) > 1e-12 || std::abs(arc.samples.back().t - arc.t_end) > 1e-12) {
      return fail(detail::fmt_violation("arc times disagree with samples", ai, arc.t_start));
    }
    if (ai > 0) {
      const OrbitArc& prev = orbit.arcs[ai - 1];
      if ((prev.last() - arc.first()).norm() > 1e-7) {
        return fail(detail::fmt_violation("arcs do not share an endpoint", ai, arc.t_start));
      }
      if (arc.t_start < prev.t_end - 1e-12) return fail(detail::fmt_violation("time runs backwards", ai, arc.t_start));
    } else if ((arc.first() - orbit.initial).norm() > 1e-7) {
      return fail(detail::fmt_violation("first arc does not start at the initial point", ai, arc.t_start));
    }
    if (arc.mode == ArcMode::RegionFlow) {
      const RegionId r{arc.id};
      if (r.value < 1 || r.value > psvf.region_count()) return fail(detail::fmt_violation("unknown region", ai, arc.t_start));
      const Field& f = *psvf.field(r);
      const auto& signs = psvf.regions()[static_cast<std::size_t>(r.index())].signs;
      for (std::size_t k = 1; k < arc.samples.size(); ++k) {
        const auto& s0 = arc.samples[k - 1];
        const auto& s1 = arc.samples[k];
        if ((detail::rk4_region(f, s0.p, s1.t - s0.t) - s1.p).norm() > 1e-6) {
          return fail(detail::fmt_violation("region-flow residual above 1e-6", ai, s1.t));
        }
        for (std::size_t i = 0; i < signs.size(); ++i) {
          if (signs[i] * psvf.circles()[i].gamma(s1.p) < -1e-8) {
            return fail(detail::fmt_violation("sample outside its region", ai, s1.t));
          }
        }
      }
    } else {
      const CircleId c{arc.id};
      if (c.value < 1 || c.value > psvf.circle_count()) return fail(detail::fmt_violation("unknown circle", ai, arc.t_start));
      const PlaneCircle& circle = psvf.circle(c);
      const SigmaClass want = arc.mode == ArcMode::SlidingFlow ? SigmaClass::Sliding : SigmaClass::Escaping;
      for (std::size_t k = 0; k < arc.samples.size(); ++k) {
        const auto& s = arc.samples[k];
        if (std::abs(circle.gamma(s.p)) > 1e-8) return fail(detail::fmt_violation("slide sample off its circle", ai, s.t));
        const bool near_end = geodesic_distance(s.p, arc.first()) <= 1e-6 || geodesic_distance(s.p, arc.last()) <= 1e-6;
        if (!near_end && classify_sigma_point(psvf, c, s.p).kind != want) {
          return fail(detail::fmt_violation("slide sample in the wrong class", ai, s.t));
        }
        if (k > 0) {
          const auto& s0 = arc.samples[k - 1];
          if ((detail::rk4_slide(psvf, c, s0.p, s.t - s0.t) - s.p).norm() > 1e-6) {
            return fail(detail::fmt_violation("slide residual above 1e-6", ai, s.t));
          }
        }
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Symmetry images

/// Image of an orbit under a linear isometry M of the sphere, with region and
/// circle ids re-derived in `target`.
inline FilippovOrbit mapped_orbit(const Psvf& target, const FilippovOrbit& orbit, const Mat3& m) {
  FilippovOrbit out = orbit;
  out.initial = m * orbit.initial;
  out.pending.reset();
  for (auto& rec : out.branch_log) rec.point = m * rec.point;
  for (OrbitArc& arc : out.arcs) {
    for (auto& s : arc.samples) s.p = m * s.p;
    const Vec3 mid = arc.samples[arc.samples.size() / 2].p;
    if (arc.mode == ArcMode::RegionFlow) {
      // choose the sample farthest from every circle to read the region
      Vec3 best = mid;
      double margin = -1.0;
      for (const auto& s : arc.samples) {
        double d = 1e9;
        for (const auto& c : target.circles()) d = std::min(d, std::abs(c.gamma(s.p)));
        if (d > margin) {
          margin = d;
          best = s.p;
        }
      }
      arc.id = target.region_of(best).value;
    } else {
      for (const auto& c : target.circles()) {
        if (std::abs(c.gamma(mid)) <= 1e-8) arc.id = c.id();
      }
    }
    if (arc.terminal.circle != 0) {
      for (const auto& c : target.circles()) {
        if (std::abs(c.gamma(arc.last())) <= 1e-8) arc.terminal.circle = c.id();
      }
    }
  }
  return out;
}

/// Orbit with every sample negated.
inline FilippovOrbit antipodal_image(const Psvf& psvf, const FilippovOrbit& orbit) {
  return mapped_orbit(psvf, orbit, -Mat3::Identity());
}

/// Orbit reflected through the plane x = 0.
inline FilippovOrbit mirror_image(const Psvf& psvf, const FilippovOrbit& orbit) {
  return mapped_orbit(psvf, orbit, Vec3(-1.0, 1.0, 1.0).asDiagonal().toDenseMatrix());
}

} // namespace filippov
