// A small bump on the orbit that joins the two visible tangencies breaks the
// connection. Prints the miss distance at the unperturbed arrival time.

#include <cstdio>

#include "filippov/analysis.hpp"

using namespace filippov;

int main() {
  const Psvf z = make_z_theta(kPi / 3);
  const ConnectionData base = measure_connection(z);
  std::printf("T_A = (%.4f, %.4f, %.4f)  T_B = (%.4f, %.4f, %.4f)  arrival %.12f\n", base.t_a.x(), base.t_a.y(),
              base.t_a.z(), base.t_b.x(), base.t_b.y(), base.t_b.z(), base.arrival_time);

  std::printf("%10s  %12s  %12s  %12s\n", "amplitude", "sup |W|", "miss at t0", "closest");
  for (double amp : {0.0, 1e-4, 1e-3, 1e-2}) {
    const RobustnessReport r = robustness_experiment(z, default_connection_bump(z, amp));
    std::printf("%10.0e  %12.3e  %12.4e  %12.4e\n", amp, r.perturbation_sup, r.after.offset_at_reference,
                r.after.offset);
  }
}
