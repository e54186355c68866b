// Lift a smooth function to the extended Phi4 structure, apply K_gamma and compare increment exponents.

#include <cmath>
#include <iostream>

#include "regstruct/convolution.hpp"

using namespace regstruct;

int main() {
  Grid g(1.0 / 64.0, 0.0, 0.7);
  auto K = std::make_shared<const KernelDecomposition>(KernelDecomposition::cached(g));
  auto Z = DiscreteModel::canonical(white_noise(g, 5), K, phi4_structure(0.01)).extend("I(Xi)^3");
  const double w = 2.0 * M_PI, gamma = 1.5;
  auto f = polynomial_lift(Z, gamma, 0, std::lround(0.6 / g.dt()), [w](double t, double x, const MultiIndex& k) {
    double a = k.t == 0 ? 1.0 + t : (k.t == 1 ? 1.0 : 0.0);
    return a * std::pow(w, k.x) * std::sin(w * x + k.x * M_PI / 2.0);
  });
  SchauderOptions opt;
  opt.plan = {{0.3, 0.55, 0.0, 1.0}, 4000, 5};
  opt.increments.plan = {{0.3, 0.55, 0.0, 1.0}, 20000, 5};
  opt.increments.dmax = 0.125;
  auto rep = verify_schauder(f, opt);
  std::cout << "identity residual " << rep.identity_residual << "\n"
            << "input exponent " << rep.input.exponent << ", output exponent " << rep.output.exponent << ", gain "
            << rep.gain << "\n";
  return rep.identity_ok && rep.gain_ok ? 0 : 1;
}
