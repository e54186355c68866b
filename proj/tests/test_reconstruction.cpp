#include <gtest/gtest.h>

#include "regstruct/reconstruction.hpp"

using namespace regstruct;

namespace {

long row(const Grid& g, double t) { return std::lround(t / g.dt()); }

DiscreteModel poly_model(double eps, double t0, double t1, int degree = 3) {
  return DiscreteModel::polynomial(Grid(eps, t0, t1), polynomial_structure(degree));
}

DiscreteModel phi4(double eps, double t0, double t1, std::uint64_t seed = 11) {
  Grid g(eps, t0, t1);
  auto K = std::make_shared<const KernelDecomposition>(KernelDecomposition::build(g));
  return DiscreteModel::canonical(white_noise(g, seed), K, phi4_structure());
}

ModelledDistribution x2_lift(const DiscreteModel& Z, double gamma, long r0, long r1) {
  return polynomial_lift(Z, gamma, r0, r1, [](double, double x, const MultiIndex& k) {
    if (k.t) return 0.0;
    return k.x == 0 ? x * x : (k.x == 1 ? 2.0 * x : (k.x == 2 ? 2.0 : 0.0));
  });
}

ReconstructionOptions small_options() {
  ReconstructionOptions o;
  o.plan.box = {0.0, 0.25, 0.0, 1.0};
  o.plan.step_t = 1.0 / 8.0;
  o.plan.step_x = 1.0 / 4.0;
  o.plan.profiles = 3;
  return o;
}

// lifts of polynomials in x are polynomial on one period only: keep supports inside (0, 1)
ReconstructionOptions centred_options() {
  ReconstructionOptions o = small_options();
  o.plan.box = {0.0, 0.25, 0.5, 1.0};
  o.plan.step_x = 0.5;
  return o;
}

}  // namespace

TEST(Reconstruction, PolynomialLiftIsExact) {
  auto Z = poly_model(std::ldexp(1.0, -5), -0.3, 0.6);
  const Grid& g = Z.grid();
  auto dg = [](double t, double x, const MultiIndex& k) {
    // g = 1 + 2x - 3x^2 + t
    if (k.t == 1 && k.x == 0) return 1.0;
    if (k.t) return 0.0;
    return k.x == 0 ? 1 + 2 * x - 3 * x * x + t : (k.x == 1 ? 2 - 6 * x : (k.x == 2 ? -6.0 : 0.0));
  };
  auto f = polynomial_lift(Z, 2.5, row(g, -0.28), row(g, 0.55), dg);
  auto R = reconstruct(f);
  double err = 0.0;
  for (long m = f.first_row(); m <= f.last_row(); m += 7)
    for (long j = 0; j < g.cols(); ++j) {
      double t = g.time(m), x = g.space(j);
      err = std::max(err, std::abs(R(m, j) - (1 + 2 * x - 3 * x * x + t)));
    }
  EXPECT_LE(err, 1e-13);
  auto rep = reconstruction_scaling_test(f, R, 0.0, 0.5, centred_options());
  EXPECT_TRUE(rep.skipped);
  for (double v : rep.max_pairing) EXPECT_LT(v, 1e-12);
}

TEST(Reconstruction, ConstantAndLinearity) {
  auto Z = phi4(std::ldexp(1.0, -4), -0.3, 0.5);
  const Grid& g = Z.grid();
  long r0 = row(g, 0.0), r1 = row(g, 0.2);
  auto c = symbol_lift(Z, "1", 1.2, r0, r1, 2.5);
  auto Rc = reconstruct(c);
  for (double v : Rc.values()) EXPECT_EQ(v, 2.5);
  auto f = phi4_test_distribution(Z, 1.1, r0, r1);
  auto h = combine(1.0, symbol_lift(Z, "I(Xi)", 1.1, r0, r1, 0.3), 1.0, symbol_lift(Z, "Xi", 1.1, r0, r1, -0.7));
  auto lin = reconstruct(combine(1.5, f, -2.0, h));
  auto Rf = reconstruct(f), Rh = reconstruct(h);
  double err = 0.0;
  for (std::size_t i = 0; i < lin.size(); ++i)
    err = std::max(err, std::abs(lin.values()[i] - 1.5 * Rf.values()[i] + 2.0 * Rh.values()[i]));
  EXPECT_LE(err, 1e-13);
}

TEST(Reconstruction, IntegratedNoiseMatchesDirectFormula) {
  auto Z = phi4(std::ldexp(1.0, -4), -0.3, 0.5);
  const Grid& g = Z.grid();
  const auto& S = Z.structure();
  long r0 = row(g, 0.0), r1 = row(g, 0.2);
  // f = I(Xi) + xi-weighted 1: R f(z) = (K xi)(z) - (K xi)(z) + c(z), Xi part gives xi(z)
  auto f = combine(1.0, symbol_lift(Z, "I(Xi)", 1.2, r0, r1), 1.0, symbol_lift(Z, "Xi", 1.2, r0, r1, 0.5));
  auto R = reconstruct(f);
  Realisation V = Z.realise(std::size_t(S.index("I(Xi)")), {r0, 0});
  double err = 0.0;
  for (long m = r0; m <= r1; m += 3)
    for (long j = 0; j < g.cols(); ++j) {
      Point z{m, j};
      double kxi = Z.eval(V, {r0, 0}, z);
      double direct = kxi - kxi + 0.5 * (*Z.noise())(m, j);
      err = std::max(err, std::abs(R(m, j) - direct));
    }
  EXPECT_LE(err, 1e-12);
}

TEST(Reconstruction, TruncatedSquareExponent) {
  auto Z = poly_model(std::ldexp(1.0, -6), -0.3, 0.6);
  const Grid& g = Z.grid();
  auto f = x2_lift(Z, 2.0, row(g, -0.28), row(g, 0.55));
  auto R = reconstruct(f);
  auto rep = reconstruction_scaling_test(f, R, std::ldexp(1.0, -5), 0.5, centred_options());
  ASSERT_FALSE(rep.skipped);
  EXPECT_GE(rep.fitted_exponent, 2.0 - 0.15);
  EXPECT_EQ(rep.delta_grid.size(), 5u);
  EXPECT_GT(rep.crosschecked, 0u);
  EXPECT_LE(rep.crosscheck, 1e-8);
  // rescaling keeps the slope and scales the constant
  auto f3 = combine(-3.0, f, 0.0, f);
  auto rep3 = reconstruction_scaling_test(f3, reconstruct(f3), std::ldexp(1.0, -5), 0.5, centred_options());
  EXPECT_NEAR(rep3.fitted_exponent, rep.fitted_exponent, 1e-9);
  EXPECT_NEAR(rep3.constant / rep.constant, 3.0, 1e-9);
}

TEST(Reconstruction, RejectsShortScaleRange) {
  auto Z = poly_model(std::ldexp(1.0, -4), -0.3, 0.6);
  const Grid& g = Z.grid();
  auto f = x2_lift(Z, 2.0, row(g, -0.28), row(g, 0.55));
  EXPECT_THROW(reconstruction_scaling_test(f, 0.25, 0.5, small_options()), ReconstructionError);
}

TEST(Reconstruction, DecompositionIdentity) {
  auto Z = phi4(std::ldexp(1.0, -5), -0.3, 0.6);
  const Grid& g = Z.grid();
  auto f = phi4_test_distribution(Z, 1.1, row(g, -0.28), row(g, 0.55));
  auto R = reconstruct(f);
  auto dict = testfn_dictionary(2, 3);
  double worst = 0.0;
  for (double delta : {0.5, 0.25, 0.125, 0.0625})
    for (const Point& z : {Point{row(g, 0.1), 3}, Point{row(g, 0.2), 17}}) {
      auto D = decompose_pairing(f, R, z, test_function_at(g, dict[std::size_t(z.j % 3)], z, delta));
      EXPECT_EQ(D.N, 5);
      EXPECT_GT(std::abs(D.II), 0.0);
      worst = std::max(worst, D.discrepancy());
    }
  EXPECT_LE(worst, 1e-8);
  EXPECT_THROW(decompose_pairing(f, R, {row(g, 0.1), 0}, test_function_at(g, dict[0], {row(g, 0.1), 0}, g.eps())),
               ReconstructionError);
}

TEST(Reconstruction, Phi4CubeExponent) {
  auto Z = phi4(std::ldexp(1.0, -6), -0.3, 0.6);
  const Grid& g = Z.grid();
  auto f = phi4_test_distribution(Z, 1.1, row(g, -0.28), row(g, 0.55));
  auto opt = small_options();
  opt.crosscheck_ratio = 8.0;
  auto rep = reconstruction_scaling_test(f, reconstruct(f), std::ldexp(1.0, -5), 0.5, opt);
  ASSERT_FALSE(rep.skipped);
  EXPECT_GE(rep.fitted_exponent, 1.1 - 0.2);
  EXPECT_LE(rep.crosscheck, 1e-8);
}

TEST(Reconstruction, LocalBound) {
  // polynomial lift: left side vanishes
  auto P = poly_model(std::ldexp(1.0, -4), -0.1, 0.4);
  const Grid& gp = P.grid();
  auto q = x2_lift(P, 2.5, 0, row(gp, 0.3));
  auto Rq = reconstruct(q);
  Point z{8, 3};
  Box K{gp.time(8), gp.time(9), gp.space(3), gp.space(4)};
  EXPECT_EQ(local_bound_check(q, Rq, z, K).ratio, 0.0);
  EXPECT_THROW(local_bound_check(q, Rq, z, Box{0.0, 0.1, 0.0, 0.5}), ReconstructionError);
  // single point: eps^{-gamma} |R(y) - (Pi_z f(z))(y)| by hand for the truncated square
  auto f = x2_lift(P, 2.0, 0, row(gp, 0.3));
  auto Rf = reconstruct(f);
  double h = gp.space(4) - gp.space(3);
  double hand = std::pow(gp.eps(), -2.0) * h * h;
  EXPECT_NEAR(local_difference(f, Rf, z, {gp.time(9), gp.time(9), gp.space(4), gp.space(4)}), hand, 1e-12);

  // Phi4 cube: ratio finite with no growth above 2x between levels
  std::vector<double> ratios;
  for (int n : {4, 5, 6}) {
    auto Z = phi4(std::ldexp(1.0, -n), -0.3, 0.4);
    const Grid& g = Z.grid();
    auto F = phi4_test_distribution(Z, 1.1, 0, row(g, 0.3));
    auto R = reconstruct(F);
    double worst = 0.0;
    for (long m : {row(g, 0.1), row(g, 0.2)})
      for (long j = 0; j < g.cols(); j += std::max(1L, g.cols() / 8)) {
        Box B{g.time(m), g.time(m + 1), g.space(j), g.space(j + 1)};
        auto b = local_bound_check(F, R, {m, j}, B);
        ASSERT_TRUE(std::isfinite(b.ratio));
        worst = std::max(worst, b.ratio);
      }
    ratios.push_back(worst);
  }
  for (std::size_t i = 1; i < ratios.size(); ++i) EXPECT_LE(ratios[i], 2.0 * ratios[i - 1]);
}

TEST(Reconstruction, WeightedHeatLift) {
  auto Z = poly_model(std::ldexp(1.0, -7), -0.27, 0.28);
  const Grid& g = Z.grid();
  auto heat = polynomial_lift(Z, 1.5, g.first_row(), g.last_row(), [](double t, double x, const MultiIndex& k) {
    // 1 + e^{-4 pi^2 t} cos(2 pi x)
    double a = std::exp(-4 * M_PI * M_PI * t);
    return k.x == 0 ? 1.0 + a * std::cos(2 * M_PI * x) : -2 * M_PI * a * std::sin(2 * M_PI * x);
  });
  auto f = positive_part(heat);
  auto R = reconstruct(f);
  auto rep = weighted_reconstruction_test(f, R, WeightSpec{0.0});
  EXPECT_EQ(rep.alpha_eta, 0.0);
  EXPECT_GE(rep.across_exponent, -0.15);
  EXPECT_GE(rep.away_exponent, 1.5 - 0.2);
  EXPECT_TRUE(rep.ok());
  EXPECT_GE(rep.away_deltas.size(), 3u);

  auto zero = combine(0.0, f, 0.0, f);
  auto rz = weighted_reconstruction_test(zero, reconstruct(zero), WeightSpec{0.0});
  for (double v : rz.away_sup) EXPECT_EQ(v, 0.0);
  for (double v : rz.across_sup) EXPECT_EQ(v, 0.0);

  WeightedReconstructionOptions tight;
  tight.band_lo = tight.band_hi = 0.02;
  EXPECT_THROW(weighted_reconstruction_test(f, R, WeightSpec{0.0}, tight), ReconstructionError);
}
