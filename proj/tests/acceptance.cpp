// One line per acceptance criterion; nonzero exit when any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "filippov/analysis.hpp"

using namespace filippov;

namespace {

const double kR3 = std::sqrt(3.0);

struct Outcome {
  bool ok = true;
  std::string note;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      note = what;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return Vec3(g(rng), g(rng), g(rng)).normalized();
}

Psvf random_system(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::normal_distribution<double> g;
  const Vec3 n = random_unit(rng);
  auto field = [&](const char* label) { return LinearField::from_axis(Vec3(g(rng), g(rng), g(rng)), label); };
  double c1 = u(rng), c2 = u(rng);
  if (c1 < c2) std::swap(c1, c2);
  if (c1 - c2 < 0.05) c1 = c2 + 0.05;
  return Psvf({PlaneCircle(n, c1, 1), PlaneCircle(n, c2, 2)},
              {Region{{1, 1}, field("F1")}, Region{{-1, 1}, field("F2")}, Region{{-1, -1}, field("F3")}});
}

const Psvf& z3() {
  static const Psvf z = make_z_theta(kPi / 3);
  return z;
}

// criterion 1
Outcome sliding_closed_form() {
  Outcome o;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, kTwoPi);
  double worst = 0.0;
  for (int j = 0; j < 1000; ++j) {
    const CircleId id{1 + j % 2};
    const Vec3 p = circle_point(z3().circle(id), u(rng));
    worst = std::max(worst, (sliding_field_at(z3(), id, p) - (kR3 / 3) * Vec3(-p.y(), p.x(), 0)).norm());
  }
  o.require(worst <= 1e-10, fmt("max error %.3g", worst));
  o.note = o.ok ? fmt("max error %.3g over 1000 points", worst) : o.note;
  return o;
}

// criterion 2
Outcome flow_oracle() {
  Outcome o;
  const OrbitEngine engine(z3());
  std::mt19937_64 rng(2);
  int count[2] = {0, 0};
  double worst = 0.0;
  while (count[0] < 100 || count[1] < 100) {
    const Vec3 p = random_unit(rng);
    const RegionId r = z3().region_of(p);
    const int k = r.value == 2 ? 1 : 0;
    if (count[k] >= 100) continue;
    ++count[k];
    // follow the field through circle hits by restarting in the same region's field
    const ModelField which = k == 1 ? ModelField::Y : ModelField::X;
    const Field& f = *z3().field(r);
    double t = 0.0;
    Vec3 q = p;
    DormandPrince<3> dp;
    dp.drive([&](double, const Vec3& y) -> Vec3 { return f.eval(y); }, 0.0, Vec3(p), kTwoPi, 0.05,
             [](DenseStep<3>& d) { d.y1.normalize(); },
             [&](const DenseStep<3>& d) {
               t = d.t1();
               q = d.y1;
               worst = std::max(worst, (q - closed_form_flow(which, t, p)).norm());
               return true;
             });
    // and the event-driven arc up to its first circle hit
    const OrbitArc arc = engine.flow_region(r, p, kTwoPi);
    for (const auto& s : arc.samples) worst = std::max(worst, (s.p - closed_form_flow(which, s.t, p)).norm());
  }
  o.require(worst <= 1e-8, fmt("max error %.3g", worst));
  if (o.ok) o.note = fmt("max error %.3g, 100 starts per field", worst);
  return o;
}

// criterion 3
Outcome structure() {
  Outcome o;
  const OrbitEngine engine(z3());
  int total = 0;
  for (int c : {1, 2}) {
    const auto list = find_tangencies(z3(), CircleId{c});
    total += static_cast<int>(list.size());
    for (const TangencyInfo& t : list) {
      const Vec3 p = t.point.vec();
      const double zc = c == 1 ? 0.5 : -0.5;
      const Vec3 want(0, p.y() > 0 ? kR3 / 2 : -kR3 / 2, zc);
      o.require((p - want).norm() <= 1e-9, fmt("tangency off by %.3g", (p - want).norm()));
      // cap field is invisible everywhere; the band field is visible at T1+ and T2-
      const Side cap = c == 1 ? Side::Above : Side::Below;
      const Side band = opposite(cap);
      o.require(t.contact(cap) && t.contact(cap)->visibility == Visibility::Invisible, "cap field visible");
      const bool y_visible = (c == 1) == (p.y() > 0);
      o.require(t.contact(band) && (t.contact(band)->visibility == Visibility::Visible) == y_visible,
                "band field visibility");
    }
    o.require(pseudo_equilibria(z3(), CircleId{c}).empty(), "pseudo-equilibrium found");
  }
  o.require(total == 4, fmt("%g tangency points", total));
  int samples = 0;
  for (int c : {1, 2}) {
    const PlaneCircle& circle = z3().circle(CircleId{c});
    for (int j = 0; j < 5000; ++j) {
      const Vec3 p = circle_point(circle, kTwoPi * (j + 0.5) / 5000);
      const SigmaClass k = classify_sigma_point(z3(), CircleId{c}, p).kind;
      ++samples;
      o.require(k != SigmaClass::Crossing, "crossing point sampled");
      if (std::abs(p.x()) < 1e-9) continue;
      // upper circle slides for x > 0, lower circle for x < 0
      const bool sliding = (c == 1) == (p.x() > 0);
      o.require(k == (sliding ? SigmaClass::Sliding : SigmaClass::Escaping), "half-circle split");
    }
  }
  for (int r : {1, 2, 3}) o.require(equilibrium_status(z3(), RegionId{r}) == "virtual", "real equilibrium");
  if (o.ok) o.note = fmt("4 tangencies, %g sigma samples, no crossing", samples);
  return o;
}

// criterion 4: time and endpoint of the exit orbit from T1+
struct Exit {
  double time;
  double miss;
};

Exit exit_connection(const Psvf& sys) {
  const ConnectionData c = measure_connection(sys, Vec3(0, -kR3 / 2, -0.5), kPi);
  return {c.arrival_time, c.offset_at_reference};
}

Outcome claim_iv() {
  Outcome o;
  const OrbitEngine engine(z3());
  // the sliding orbit reaches T1+ and its continuation into the band
  const FilippovOrbit orbit = engine.integrate(Vec3(kR3 / 2, 0, 0.5), 10.0, BranchPolicy::replay({}));
  o.require(orbit.arcs.size() >= 2 && orbit.arcs[1].mode == ArcMode::RegionFlow && orbit.arcs[1].id == 2,
            "exit does not enter the band");
  if (!o.ok) return o;
  const OrbitArc& arc = orbit.arcs[1];
  o.require((arc.first() - Vec3(0, kR3 / 2, 0.5)).norm() <= 1e-8, "exit not at T1+");
  const double dt = arc.duration();
  const double miss = (arc.last() - Vec3(0, -kR3 / 2, -0.5)).norm();
  o.require(std::abs(dt - kPi) <= 1e-6, fmt("arrival after %.12g", dt));
  o.require(miss <= 1e-6, fmt("misses T2- by %.3g", miss));
  const Exit e = exit_connection(z3());
  o.require(std::abs(e.time - kPi) <= 1e-6 && e.miss <= 1e-6, "closest approach disagrees");
  if (o.ok) o.note = fmt("arrival time pi%+.2g, miss %.2g", dt - kPi, miss);
  return o;
}

// criterion 5
Outcome transitivity_window() {
  Outcome o;
  const std::vector<double> thetas{0.3, 0.45, kPi / 6, 0.6, 0.8, kPi / 3, 1.2};
  const std::vector<Verdict> want{Verdict::Fails, Verdict::Fails, Verdict::Fails, Verdict::TransitiveEvidence,
                                  Verdict::TransitiveEvidence, Verdict::TransitiveEvidence, Verdict::Fails};
  ProbeConfig cfg;  // N=200, epsilon=0.25, horizon=200, budget=4
  std::string table;
  for (unsigned long long seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    const auto rows = theta_sweep(thetas, cfg);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      o.require(rows[i].verdict == want[i], fmt("theta %.4f seed %g", thetas[i], static_cast<double>(seed)));
      if (seed == 0) table += rows[i].verdict == Verdict::TransitiveEvidence ? "T" : "F";
    }
  }
  if (o.ok) o.note = "verdicts " + table + " on 5 seeds";
  return o;
}

// criterion 6
Outcome theorem_b() {
  Outcome o;
  const EvidenceReport rep = sliding_escaping_evidence(z3(), ProbeConfig{});
  for (int c : {1, 2}) {
    o.require(rep.sliding_nonempty(CircleId{c}) && rep.escaping_nonempty(CircleId{c}), "empty class");
  }
  std::size_t best = 0;
  for (std::size_t e = 0; e < rep.segments.size(); ++e) {
    for (std::size_t s = 0; s < rep.segments.size(); ++s) {
      if (rep.segments[e].kind != SigmaClass::Escaping || rep.segments[s].kind != SigmaClass::Sliding) continue;
      std::set<std::string> logs;
      for (const auto& w : rep.witnesses) {
        if (w.escaping != e || w.sliding != s) continue;
        std::string key;
        for (const auto& r : w.log) key += r.decision.describe() + ";";
        if (validate_orbit(z3(), w.orbit)) logs.insert(key);
      }
      best = std::max(best, logs.size());
    }
  }
  o.require(best >= 4, fmt("%g distinct witnesses", static_cast<double>(best)));
  if (o.ok) o.note = fmt("%g branch-distinct witnesses for a segment pair", static_cast<double>(best));
  return o;
}

// criterion 7
Outcome two_zone() {
  Outcome o;
  ProbeConfig cfg;
  const Mat3 rz = skew_from_axis(Vec3::UnitZ());
  const Mat3 rx = skew_from_axis(Vec3::UnitX());
  const auto a = two_zone_check(rz, rx, PlaneCircle(Vec3::UnitZ(), 0.0, 1), cfg);
  o.require(a.label == TwoZoneCase::RealCenterOffSigma && a.verdict == Verdict::Fails, "first example");
  const auto b = two_zone_check(rz, rz, PlaneCircle(Vec3::UnitZ(), 0.5, 1), cfg);
  o.require(b.label == TwoZoneCase::NotGreatCircle && b.verdict == Verdict::Fails, "second example");
  Mat3 bad = rz;
  bad(0, 1) = 2.0;
  bool rejected = false;
  try {
    two_zone_check(bad, rz, PlaneCircle(Vec3::UnitZ(), 0.0, 1), cfg);
  } catch (const Error& e) {
    rejected = e.code() == ErrorCode::NotSkewSymmetric;
  }
  o.require(rejected, "non-skew matrix accepted");
  if (o.ok) o.note = std::string(to_string(a.label)) + ", " + to_string(b.label) + ", non-skew rejected";
  return o;
}

// criterion 8
Outcome non_robustness() {
  Outcome o;
  double prev = 0.0;
  double at_1e3 = 0.0;
  for (double amp : {1e-4, 1e-3, 1e-2}) {
    const RobustnessReport r = robustness_experiment(z3(), default_connection_bump(z3(), amp));
    o.require(r.after.offset_at_reference > prev, fmt("not monotone at amplitude %.0e", amp));
    prev = r.after.offset_at_reference;
    if (amp == 1e-3) at_1e3 = prev;
  }
  o.require(at_1e3 > 1e-4, fmt("displacement %.4g at amplitude 1e-3", at_1e3));
  const RobustnessReport zero = robustness_experiment(z3(), default_connection_bump(z3(), 0.0));
  const ConnectionData base = measure_connection(z3());
  o.require(zero.after.arrival_time == base.arrival_time && zero.after.offset == base.offset &&
                zero.delta_time == 0.0 && zero.delta_offset == 0.0,
            "zero amplitude changes the connection");
  o.require(std::abs(zero.after.arrival_time - kPi) <= 1e-6 && zero.after.offset_at_reference <= 1e-6,
            "zero amplitude misses T2-");
  if (o.ok) o.note = fmt("displacement %.4g at amplitude 1e-3, %.4g at 1e-2", at_1e3, prev);
  return o;
}

// criterion 9
Outcome properties() {
  Outcome o;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, kTwoPi);
  int sigma_points = 0;
  for (int s = 0; s < 10; ++s) {
    const Psvf sys = random_system(rng);
    const Psvf rev = sys.time_reversed();
    for (const auto& c : sys.circles()) {
      const CircleId id{c.id()};
      for (int j = 0; j < 500; ++j) {
        const Vec3 p = circle_point(c, u(rng));
        const auto [a, b] = normal_components(sys, id, p);
        const SigmaClass k = classify_sigma_point(sys, id, p).kind;
        const SigmaClass r = classify_sigma_point(rev, id, p).kind;
        ++sigma_points;
        if (std::min(std::abs(a), std::abs(b)) > tol::kTangency) o.require(k != SigmaClass::Tangency, "partition");
        const SigmaClass dual = k == SigmaClass::Sliding ? SigmaClass::Escaping
                                : k == SigmaClass::Escaping ? SigmaClass::Sliding
                                                            : k;
        o.require(r == dual, "time-reversal duality");
        if (k == SigmaClass::Sliding || k == SigmaClass::Escaping) {
          const double lam = b / (b - a);
          o.require(lam > 0.0 && lam < 1.0, "lambda outside (0,1)");
          const Vec3 want = lam * sys.adjacent_field(id, Side::Above)->eval(p) +
                            (1 - lam) * sys.adjacent_field(id, Side::Below)->eval(p);
          o.require((sliding_field_at(sys, id, p) - want).norm() <= 1e-10, "convex combination");
        }
      }
    }
  }
  int orbits = 0;
  for (double theta : {0.6, kPi / 3, 0.9}) {
    const OrbitEngine e(make_z_theta(theta));
    for (int i = 0; i < 10; ++i) {
      const Vec3 p = random_unit(rng);
      if (std::abs(std::abs(p.z()) - 0.5) < 1e-3) continue;
      const auto seed = static_cast<unsigned long long>(i);
      for (const BranchPolicy& pol : {BranchPolicy::sampled(seed), BranchPolicy::tour(), BranchPolicy::stay_sliding()}) {
        const FilippovOrbit a = e.integrate(p, 40.0, pol);
        ++orbits;
        const ValidationReport v = validate_orbit(e.psvf(), a);
        o.require(v.ok, "validator: " + v.violation);
        const FilippovOrbit b = e.integrate(p, 40.0, BranchPolicy::replay(a.branch_log));
        bool same = a.arcs.size() == b.arcs.size();
        for (std::size_t k = 0; same && k < a.arcs.size(); ++k) same = (a.arcs[k].last() - b.arcs[k].last()).norm() <= 1e-9;
        o.require(same, "replay differs");
      }
    }
  }
  auto includes = [](const std::vector<std::vector<bool>>& big, const std::vector<std::vector<bool>>& small) {
    for (std::size_t i = 0; i < small.size(); ++i) {
      for (std::size_t j = 0; j < small[i].size(); ++j) {
        if (small[i][j] && !big[i][j]) return false;
      }
    }
    return true;
  };
  ProbeConfig c;
  c.n = 48;
  c.epsilon = 0.4;
  std::vector<std::vector<bool>> prev;
  for (double h : {3.0, 5.0, 8.0, 20.0}) {
    c.horizon = h;
    const auto r = reachability_probe(z3(), c, 0).reach;
    if (!prev.empty()) o.require(includes(r, prev), "probe shrinks with horizon");
    prev = r;
  }
  c.horizon = 8.0;
  prev.clear();
  for (int b : {1, 2, 3, 5}) {
    c.budget = b;
    const auto r = reachability_probe(z3(), c, 0).reach;
    if (!prev.empty()) o.require(includes(r, prev), "probe shrinks with budget");
    prev = r;
  }
  if (o.ok) {
    o.note = fmt("%g sigma points, %g orbits validated and replayed", sigma_points, orbits);
  }
  return o;
}

} // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"sliding field closed form", sliding_closed_form},
      {"flow oracle", flow_oracle},
      {"structure of the pi/3 system", structure},
      {"band connection T1+ to T2-", claim_iv},
      {"transitivity window", transitivity_window},
      {"sliding and escaping evidence", theorem_b},
      {"two-zone cases", two_zone},
      {"non-robustness mechanism", non_robustness},
      {"property suites", properties},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.ok = false;
      o.note = std::string("exception: ") + e.what();
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %zu: %s %s: %s (%.2f s)\n", i + 1, o.ok ? "PASS" : "FAIL", criteria[i].first,
                o.note.c_str(), dt);
    std::fflush(stdout);
    failed += !o.ok;
  }
  return failed == 0 ? 0 : 1;
}
