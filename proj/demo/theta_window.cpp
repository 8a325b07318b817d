// Probes the family Z_theta across the transitivity window and prints one
// row per angle. A smaller net than the default keeps this quick.

#include <cstdio>

#include "filippov/analysis.hpp"

using namespace filippov;

int main() {
  ProbeConfig cfg;
  cfg.n = 100;
  cfg.epsilon = 0.3;

  const std::vector<double> thetas{0.3, 0.45, kPi / 6, 0.6, 0.8, kPi / 3, 1.2};
  std::printf("%8s  %-18s  %4s  %-9s  %s\n", "theta", "verdict", "tang", "equilib.", "diagnostic");
  for (const SweepRow& row : theta_sweep(thetas, cfg)) {
    std::printf("%8.4f  %-18s  %4d  %-9s  %s\n", row.theta, to_string(row.verdict), row.tangency_count,
                row.equilibrium.c_str(), row.diagnostic.empty() ? "-" : row.diagnostic.c_str());
  }
}
