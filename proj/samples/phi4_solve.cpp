// Solve the Phi4 equation on [0, T] x T^1 by Picard iteration and print the residual history.

#include <iostream>

#include "regstruct/fixedpoint.hpp"

int main() {
  regstruct::Phi4Config c;
  c.eps = 1.0 / 64.0;
  c.T = 0.25;
  c.seed = 11;
  auto r = regstruct::phi4_run(c);
  for (std::size_t i = 0; i < r.report.residuals.size(); ++i)
    std::cout << "iteration " << i + 1 << " residual " << r.report.residuals[i] << "\n";
  std::cout << "converged " << r.report.converged << " on [0, " << r.report.T << "], sup |u| " << r.Ru.sup() << "\n";
  return r.report.converged ? 0 : 1;
}
