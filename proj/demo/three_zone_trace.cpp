// Orbit of the three-zone system that visits both caps, the band and both
// switching circles. Writes the samples as CSV and a short arc summary on
// stderr.
//
//   three_zone_trace [horizon] > trace.csv

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "filippov/orbit_io.hpp"

using namespace filippov;

int main(int argc, char** argv) {
  const double horizon = argc > 1 ? std::atof(argv[1]) : 20.0;
  const Psvf z = make_z_theta(kPi / 3);
  const Vec3 start = Vec3(0.1, 0.1, 0.99).normalized();

  const FilippovOrbit orbit = integrate_orbit(z, start, horizon, BranchPolicy::tour());
  write_orbit_csv(std::cout, orbit);

  for (const OrbitArc& arc : orbit.arcs) {
    std::fprintf(stderr, "%-8s %d  t=[%7.3f, %7.3f]  ends %s\n", to_string(arc.mode), arc.id, arc.t_start, arc.t_end,
                 to_string(arc.terminal.kind));
  }
  const ValidationReport check = validate_orbit(z, orbit);
  std::fprintf(stderr, "validator: %s\n", check.ok ? "ok" : check.violation.c_str());
  return check.ok ? 0 : 1;
}
