// Reconstruct the Phi4 test distribution built on a white-noise model and fit the delta-exponent.

#include <iostream>

#include "regstruct/reconstruction.hpp"

using namespace regstruct;

int main() {
  Grid g(1.0 / 64.0, -0.3, 0.6);
  auto K = std::make_shared<const KernelDecomposition>(KernelDecomposition::cached(g));
  auto Z = DiscreteModel::canonical(white_noise(g, 3), K, phi4_structure(0.01));
  const double gamma = 1.1;
  auto f = phi4_test_distribution(Z, gamma, std::lround(-0.28 / g.dt()), std::lround(0.55 / g.dt()));
  ReconstructionOptions opt;
  opt.plan = {{0.0, 0.25, 0.0, 1.0}, 1.0 / 8.0, 1.0 / 4.0, 3, 1.0, 3};
  auto rep = reconstruction_scaling_test(f, 1.0 / 32.0, 0.5, opt);
  for (std::size_t i = 0; i < rep.delta_grid.size(); ++i)
    std::cout << "delta " << rep.delta_grid[i] << " sup pairing " << rep.max_pairing[i] << "\n";
  std::cout << "fitted exponent " << rep.fitted_exponent << " (gamma " << gamma << ")\n";
  return 0;
}
