#include <gtest/gtest.h>

#include <random>

#include "filippov/analysis.hpp"

using namespace filippov;

namespace {

const double kR3 = std::sqrt(3.0);

Mat3 rotation_generator(const Vec3& w) { return skew_from_axis(w); }

ProbeConfig small_config() {
  ProbeConfig c;
  c.n = 60;
  c.epsilon = 0.35;
  c.horizon = 120.0;
  return c;
}

} // namespace

TEST(ClosedForm, Examples) {
  EXPECT_LE((closed_form_flow(ModelField::X, kPi / 2, Vec3::UnitZ()) - Vec3::UnitX()).norm(), 1e-15);
  EXPECT_LE((closed_form_flow(ModelField::Y, kPi, Vec3(0, kR3 / 2, 0.5)) - Vec3(0, -kR3 / 2, -0.5)).norm(), 1e-15);
  const Vec3 p = Vec3(0.3, -0.4, 0.7).normalized();
  for (ModelField w : {ModelField::X, ModelField::Y}) EXPECT_EQ(closed_form_flow(w, 0.0, p), p);
}

TEST(ClosedForm, BandFlowFollowsTheGreatCircle) {
  for (double t = 0; t < kTwoPi; t += 0.37) {
    const Vec3 want(-std::sin(t), kR3 / 2 * std::cos(t), 0.5 * std::cos(t));
    EXPECT_LE((closed_form_flow(ModelField::Y, t, Vec3(0, kR3 / 2, 0.5)) - want).norm(), 1e-14);
  }
}

TEST(Probe, PiOverThreeSmallNet) {
  const ProbeReport rep = reachability_probe(make_z_theta(kPi / 3), small_config());
  EXPECT_EQ(rep.verdict, Verdict::TransitiveEvidence);
  EXPECT_TRUE(rep.strongly_connected);
  EXPECT_EQ(rep.unreached_count, 0u);
  EXPECT_TRUE(rep.certificates.empty());
}

TEST(Probe, WitnessesReplayToTheirTargets) {
  const Psvf z = make_z_theta(kPi / 3);
  const ProbeReport rep = reachability_probe(z, small_config(), 6);
  ASSERT_FALSE(rep.witnesses.empty());
  for (const Witness& w : rep.witnesses) {
    const FilippovOrbit o = witness_orbit(z, rep, w);
    double best = 10;
    for (const auto& a : o.arcs) {
      for (const auto& s : a.samples) best = std::min(best, geodesic_distance(s.p, rep.nodes[static_cast<std::size_t>(w.to)]));
    }
    EXPECT_LE(best, rep.config.epsilon + 1e-6) << w.from << "->" << w.to;
    EXPECT_TRUE(validate_orbit(z, o)) << validate_orbit(z, o).violation;
  }
}

TEST(Probe, RealEquilibriumFails) {
  const ProbeReport rep = reachability_probe(make_z_theta(0.45), small_config());
  EXPECT_EQ(rep.verdict, Verdict::Fails);
  ASSERT_FALSE(rep.certificates.empty());
  EXPECT_EQ(rep.certificates.front().kind, "real-equilibrium");
}

TEST(Probe, WideBandFails) {
  const ProbeReport rep = reachability_probe(make_z_theta(1.2), small_config());
  EXPECT_EQ(rep.verdict, Verdict::Fails);
}

TEST(Probe, ConfigValidation) {
  ProbeConfig c = small_config();
  c.n = 11;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.epsilon = 0.1;  // below half the spacing of 60 nodes
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.budget = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Probe, ThreadCountDoesNotChangeTheRelation) {
  const Psvf z = make_z_theta(kPi / 3);
  ProbeConfig a = small_config();
  a.horizon = 40.0;
  ProbeConfig b = a;
  a.threads = 1;
  b.threads = 3;
  EXPECT_EQ(reachability_probe(z, a, 0).reach, reachability_probe(z, b, 0).reach);
}

TEST(Sweep, Diagnostics) {
  const auto rows = theta_sweep({0.3, 0.45, kPi / 6, 0.8}, small_config());
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].verdict, Verdict::Fails);
  EXPECT_EQ(rows[0].diagnostic, "real equilibrium");
  EXPECT_EQ(rows[1].verdict, Verdict::Fails);
  EXPECT_EQ(rows[1].diagnostic, "real equilibrium");
  EXPECT_EQ(rows[2].verdict, Verdict::Fails);
  EXPECT_EQ(rows[2].diagnostic, "equilibrium on sigma");
  EXPECT_EQ(rows[3].verdict, Verdict::TransitiveEvidence);
  EXPECT_EQ(rows[3].equilibrium, "virtual");
  EXPECT_EQ(rows[3].tangency_count, 4);
  EXPECT_TRUE(rows[3].crossing_empty);
}

TEST(Sweep, RejectsAnglesOutsideTheRange) {
  EXPECT_THROW(theta_sweep({0.0}, small_config()), Error);
  EXPECT_THROW(theta_sweep({kPi}, small_config()), Error);
}

TEST(Evidence, PiOverThree) {
  const Psvf z = make_z_theta(kPi / 3);
  const EvidenceReport rep = sliding_escaping_evidence(z, ProbeConfig{});
  for (int c : {1, 2}) {
    EXPECT_TRUE(rep.sliding_nonempty(CircleId{c}));
    EXPECT_TRUE(rep.escaping_nonempty(CircleId{c}));
  }
  std::size_t esc2 = rep.segments.size(), sl1 = rep.segments.size();
  for (std::size_t i = 0; i < rep.segments.size(); ++i) {
    const Segment& s = rep.segments[i];
    if (s.circle.value == 2 && s.kind == SigmaClass::Escaping) esc2 = i;
    if (s.circle.value == 1 && s.kind == SigmaClass::Sliding) sl1 = i;
  }
  ASSERT_LT(esc2, rep.segments.size());
  ASSERT_LT(sl1, rep.segments.size());
  EXPECT_GE(rep.witnesses_between(esc2, sl1), 4u);
  // pairwise distinct branch logs
  std::vector<std::string> logs;
  for (const auto& w : rep.witnesses) {
    if (w.escaping != esc2 || w.sliding != sl1) continue;
    std::string s;
    for (const auto& r : w.log) s += r.decision.describe() + ";";
    logs.push_back(s);
    EXPECT_TRUE(validate_orbit(z, w.orbit)) << validate_orbit(z, w.orbit).violation;
  }
  std::sort(logs.begin(), logs.end());
  EXPECT_EQ(std::unique(logs.begin(), logs.end()), logs.end());
}

TEST(Evidence, TimeReversalSwapsRoles) {
  const Psvf z = make_z_theta(kPi / 3);
  const EvidenceReport a = sliding_escaping_evidence(z, ProbeConfig{});
  const EvidenceReport b = sliding_escaping_evidence(z.time_reversed(), ProbeConfig{});
  EXPECT_EQ(a.sliding_samples, b.escaping_samples);
  EXPECT_EQ(a.escaping_samples, b.sliding_samples);
  EXPECT_EQ(a.witnesses.size(), b.witnesses.size());
}

TEST(Evidence, CrossingOnlySystem) {
  const auto f = LinearField::from_axis(Vec3::UnitX(), "F");
  const Psvf s({PlaneCircle(Vec3::UnitZ(), 0.3, 1)}, {Region{{1}, f}, Region{{-1}, f}});
  const EvidenceReport rep = sliding_escaping_evidence(s, ProbeConfig{});
  EXPECT_FALSE(rep.sliding_nonempty(CircleId{1}));
  EXPECT_FALSE(rep.escaping_nonempty(CircleId{1}));
  EXPECT_TRUE(rep.witnesses.empty());
}

TEST(TwoZone, RealCenterOffSigma) {
  const auto rep = two_zone_check(rotation_generator(Vec3::UnitZ()), rotation_generator(Vec3::UnitX()),
                                  PlaneCircle(Vec3::UnitZ(), 0.0, 1), small_config());
  EXPECT_EQ(rep.label, TwoZoneCase::RealCenterOffSigma);
  EXPECT_EQ(rep.verdict, Verdict::Fails);
  EXPECT_STREQ(to_string(rep.label), "RealCenterOffSigma");
}

TEST(TwoZone, NotGreatCircle) {
  const Mat3 a = rotation_generator(Vec3::UnitZ());
  const auto rep = two_zone_check(a, a, PlaneCircle(Vec3::UnitZ(), 0.5, 1), small_config());
  EXPECT_EQ(rep.label, TwoZoneCase::NotGreatCircle);
  EXPECT_EQ(rep.verdict, Verdict::Fails);
}

TEST(TwoZone, CentersOnTheCircle) {
  // both axes in the plane z = 0: centers sit on the equator
  const auto rep = two_zone_check(rotation_generator(Vec3::UnitX()), rotation_generator(Vec3(0, 1, 0)),
                                  PlaneCircle(Vec3::UnitZ(), 0.0, 1), small_config());
  EXPECT_TRUE(rep.label == TwoZoneCase::EquilibriaOnSigmaElliptic ||
              rep.label == TwoZoneCase::EquilibriaOnSigmaInvariant);
  EXPECT_EQ(rep.verdict, Verdict::Fails);
}

TEST(TwoZone, NotSkewSymmetric) {
  Mat3 a = rotation_generator(Vec3::UnitZ());
  a(0, 0) = 0.1;
  try {
    two_zone_check(a, a, PlaneCircle(Vec3::UnitZ(), 0.0, 1), small_config());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotSkewSymmetric);
  }
}

TEST(Robustness, ConnectionOfTheUnperturbedSystem) {
  const ConnectionData c = measure_connection(make_z_theta(kPi / 3));
  EXPECT_LE((c.t_a - Vec3(0, kR3 / 2, 0.5)).norm(), 1e-9);
  EXPECT_LE((c.t_b - Vec3(0, -kR3 / 2, -0.5)).norm(), 1e-9);
  EXPECT_NEAR(c.arrival_time, kPi, 1e-6);
  EXPECT_LE(c.offset, 1e-8);
}

TEST(Robustness, ZeroAmplitudeChangesNothing) {
  const Psvf z = make_z_theta(kPi / 3);
  const RobustnessReport rep = robustness_experiment(z, default_connection_bump(z, 0.0));
  EXPECT_EQ(rep.delta_time, 0.0);
  EXPECT_EQ(rep.delta_offset, 0.0);
  EXPECT_EQ(rep.perturbation_sup, 0.0);
  EXPECT_EQ(rep.before.offset_at_reference, rep.after.offset_at_reference);
}

TEST(Robustness, OffsetGrowsWithAmplitude) {
  const Psvf z = make_z_theta(kPi / 3);
  double prev = 0.0;
  for (double a : {1e-4, 1e-3, 1e-2}) {
    const RobustnessReport rep = robustness_experiment(z, default_connection_bump(z, a));
    EXPECT_GT(rep.after.offset_at_reference, prev) << a;
    EXPECT_NEAR(rep.perturbation_sup, a, 1e-12);
    prev = rep.after.offset_at_reference;
  }
  const RobustnessReport mid = robustness_experiment(z, default_connection_bump(z, 1e-3));
  EXPECT_GT(mid.after.offset_at_reference, 1e-4);
  EXPECT_LE(mid.before.offset_at_reference, 1e-8);
}

TEST(Robustness, BumpAwayFromTheConnection) {
  const Psvf z = make_z_theta(kPi / 3);
  BumpPerturbation b;
  b.center = SpherePoint(Vec3(-0.3, -0.3, 0.9).normalized());
  b.radius = 0.1;
  b.direction = Vec3(0, 1, 0).cross(b.center.vec()).normalized();
  b.amplitude = 1e-2;
  const RobustnessReport rep = robustness_experiment(z, b);
  EXPECT_LE(std::abs(rep.delta_time), 1e-9);
  EXPECT_LE(std::abs(rep.delta_offset), 1e-9);
  EXPECT_LE(std::abs(rep.after.offset_at_reference - rep.before.offset_at_reference), 1e-9);
}
