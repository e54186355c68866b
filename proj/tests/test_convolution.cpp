#include <gtest/gtest.h>

#include <random>

#include "regstruct/convolution.hpp"

using namespace regstruct;

namespace {

long row(const Grid& g, double t) { return std::lround(t / g.dt()); }

DiscreteModel phi4(double eps, double t0, double t1, std::uint64_t seed = 5, ModelOptions opt = {}) {
  Grid g(eps, t0, t1);
  auto K = std::make_shared<const KernelDecomposition>(KernelDecomposition::build(g));
  return DiscreteModel::canonical(white_noise(g, seed), K, phi4_structure(), opt);
}

// Phi4 lift with I(I(Xi)), I(I(Xi)^2), I(I(Xi)^3) and polynomials up to degree 3
const DiscreteModel& extended() {
  static DiscreteModel Z = phi4(std::ldexp(1.0, -5), 0.0, 0.6).extend("I(Xi)^3");
  return Z;
}

const DiscreteModel& fine_extended() {
  static DiscreteModel Z = phi4(std::ldexp(1.0, -6), 0.0, 0.7, 9).extend("I(Xi)^3");
  return Z;
}

ModelledDistribution smooth_lift(const DiscreteModel& Z, double gamma, long r0, long r1) {
  const double w = 2.0 * M_PI;
  return polynomial_lift(Z, gamma, r0, r1, [w](double t, double x, const MultiIndex& k) {
    double a = k.t == 0 ? 1.0 + t : (k.t == 1 ? 1.0 : 0.0);
    double b = std::pow(w, k.x) * (k.x % 4 == 0 ? std::sin(w * x)
                                   : k.x % 4 == 1 ? std::cos(w * x)
                                   : k.x % 4 == 2 ? -std::sin(w * x)
                                                  : -std::cos(w * x));
    return a * b;
  });
}

bool integrated_or_polynomial(const RegularityStructure& S, int i) {
  const Symbol& s = S.symbol(std::size_t(i));
  return s.kind == SymbolKind::integrated || s.mono.is_polynomial();
}

}  // namespace

TEST(Convolution, ZeroInputGivesZero) {
  const auto& Z = extended();
  const Grid& g = Z.grid();
  auto f = symbol_lift(Z, "Xi", -1.2, row(g, 0.3), row(g, 0.4), 0.0);
  auto K = convolve_Kgamma(f);
  for (int i : K.sector())
    for (long m = K.first_row(); m <= K.last_row(); ++m)
      for (long j = 0; j < g.cols(); ++j) EXPECT_EQ(K.coefficient(i, {m, j}), 0.0);
}

TEST(Convolution, XiLiftMatchesDirectSummation) {
  const auto& Z = extended();
  const Grid& g = Z.grid();
  const auto& S = Z.structure();
  auto f = symbol_lift(Z, "Xi", -1.2, g.first_row(), g.last_row());
  auto K = convolve_Kgamma(f);
  EXPECT_NEAR(K.gamma(), 0.8, 1e-12);
  ASSERT_EQ(K.sector().size(), 2u);
  int I = S.index("I(Xi)"), one = S.unit();
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<long> pm(g.first_row(), g.last_row()), pj(0, g.cols() - 1);
  double err = 0.0;
  for (int n = 0; n < 40; ++n) {
    Point z{pm(rng), pj(rng)};
    EXPECT_EQ(K.coefficient(I, z), 1.0);
    err = std::max(err, std::abs(K.coefficient(one, z) - convolve_at(Z.kernel()->total(), *Z.noise(), z.m, z.j)));
  }
  EXPECT_LE(err, 1e-10);
}

TEST(Convolution, ConstantInputIsKilled) {
  const auto& Z = extended();
  const Grid& g = Z.grid();
  long r0 = row(g, 0.0), r1 = row(g, 0.5);
  auto f = symbol_lift(Z, "1", 1.5, r0, r1, 2.0);
  auto K = convolve_Kgamma(f);
  for (int i : K.sector()) EXPECT_TRUE(Z.structure().symbol(std::size_t(i)).mono.is_polynomial());
  double worst = 0.0;
  // kernel rows reach back 1/4; before that the cut at the first row of f is visible
  for (long m = row(g, 0.26); m <= r1; ++m)
    for (long j = 0; j < g.cols(); ++j)
      for (int i : K.sector()) worst = std::max(worst, std::abs(K.coefficient(i, {m, j})));
  EXPECT_LE(worst, 1e-10);
}

TEST(Convolution, IdentityOnTestBattery) {
  const auto& Z = extended();
  const Grid& g = Z.grid();
  long r0 = row(g, 0.0), r1 = row(g, 0.5);
  SchauderOptions opt;
  opt.plan.box = {0.3, 0.45, 0.0, 1.0};
  opt.plan.max_pairs = 2000;
  opt.increments.plan = opt.plan;
  opt.increments.dmax = 0.25;
  auto x2 = polynomial_lift(Z, 1.5, r0, r1, [](double, double x, const MultiIndex& k) {
    if (k.t) return 0.0;
    return k.x == 0 ? x * x : (k.x == 1 ? 2.0 * x : 0.0);
  });
  std::vector<ModelledDistribution> battery{x2, symbol_lift(Z, "Xi", -1.2, r0, r1),
                                            phi4_test_distribution(Z, 1.1, r0, r1)};
  for (const auto& f : battery) {
    auto rep = verify_schauder(f, opt);
    EXPECT_TRUE(rep.a_vanishes);
    EXPECT_LE(rep.identity_residual, 1e-9);
    EXPECT_TRUE(rep.identity_ok);
    EXPECT_TRUE(std::isfinite(rep.seminorm));
  }
}

TEST(Convolution, OffsetModelBreaksIdentity) {
  ModelOptions o;
  o.offset_x = 0.05;
  auto Z = phi4(std::ldexp(1.0, -4), 0.0, 0.5, 5, o);
  const Grid& g = Z.grid();
  auto f = polynomial_lift(Z, 1.5, row(g, 0.0), row(g, 0.4), [](double, double x, const MultiIndex& k) {
    if (k.t) return 0.0;
    return k.x == 0 ? std::sin(2 * M_PI * x) : (k.x == 1 ? 2 * M_PI * std::cos(2 * M_PI * x) : 0.0);
  });
  SchauderOptions opt;
  opt.conv.level = 1.9;  // the preset has no X1^2
  opt.plan.box = {0.3, 0.4, 0.0, 1.0};
  opt.increments.plan = opt.plan;
  opt.increments.dmax = 0.25;
  auto rep = verify_schauder(f, opt);
  EXPECT_FALSE(rep.a_vanishes);
  EXPECT_GT(rep.identity_residual, 1e-6);
  EXPECT_FALSE(rep.identity_ok);
}

TEST(Convolution, SchauderGainOnTruncatedLifts) {
  const auto& Z = fine_extended();
  const Grid& g = Z.grid();
  SchauderOptions opt;
  opt.plan.box = {0.3, 0.55, 0.0, 1.0};
  opt.plan.max_pairs = 4000;
  opt.increments.plan = {{0.3, 0.55, 0.0, 1.0}, 20000, 7};
  opt.increments.dmax = 0.125;
  for (double gamma : {0.5, 1.5}) {
    auto f = smooth_lift(Z, gamma, row(g, 0.0), row(g, 0.6));
    auto rep = verify_schauder(f, opt);
    EXPECT_LE(rep.identity_residual, 1e-9);
    EXPECT_GE(rep.output.exponent, std::min(rep.level, 4.0) - 0.2) << "gamma " << gamma;
    EXPECT_GE(rep.gain, 2.0 - 0.3) << "gamma " << gamma;
    EXPECT_TRUE(rep.gain_ok);
  }
}

TEST(Convolution, CommutationLemma) {
  const auto& Z = extended();
  const auto& S = Z.structure();
  const Grid& g = Z.grid();
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<long> pm(row(g, 0.3), row(g, 0.55)), pj(-g.cols(), 2 * g.cols());
  for (const char* a : {"Xi", "I(Xi)", "I(Xi)^2", "I(Xi)^3", "1", "X1", "X0"}) {
    double worst = 0.0;
    for (int n = 0; n < 10; ++n) {
      Point y{pm(rng), pj(rng)}, z{pm(rng), pj(rng)};
      worst = std::max(worst, commutation_check(Z, S.index(a), y, z));
    }
    EXPECT_LE(worst, 1e-9) << a;
    Point z{row(g, 0.4), 3};
    EXPECT_LE(commutation_check(Z, S.index(a), z, z), 1e-12) << a;
  }
  EXPECT_EQ(commutation_check(Z, S.index("X1"), {row(g, 0.3), 1}, {row(g, 0.5), 9}), 0.0);
}

TEST(Convolution, MissingRealisationThrows) {
  auto Z = phi4(std::ldexp(1.0, -4), 0.0, 0.5);
  const Grid& g = Z.grid();
  auto f = symbol_lift(Z, "I(Xi)", 0.6, row(g, 0.1), row(g, 0.3));
  EXPECT_THROW(convolve_Kgamma(f), ConvolutionError);
  EXPECT_THROW(commutation_check(Z, Z.structure().index("I(Xi)"), {row(g, 0.2), 0}, {row(g, 0.3), 2}),
               ConvolutionError);
}

TEST(Convolution, RejectsIntegerLevel) {
  const auto& Z = extended();
  const Grid& g = Z.grid();
  auto f = symbol_lift(Z, "1", 1.0, row(g, 0.1), row(g, 0.2));
  EXPECT_THROW(convolve_Kgamma(f), ConvolutionError);
  auto h = symbol_lift(Z, "1", 1.2, row(g, 0.1), row(g, 0.2));
  ConvolutionOptions o;
  o.level = 3.5;
  EXPECT_THROW(convolve_Kgamma(h, o), ConvolutionError);
}

TEST(Convolution, SectorAndJetConsistency) {
  const auto& Z = extended();
  const auto& S = Z.structure();
  const Grid& g = Z.grid();
  auto f = phi4_test_distribution(Z, 1.1, row(g, 0.0), row(g, 0.4));
  auto Rf = reconstruct(f);
  auto full = convolve_Kgamma(f, Rf);
  EXPECT_NEAR(full.gamma(), 3.1, 1e-12);
  for (int i : full.sector()) EXPECT_TRUE(integrated_or_polynomial(S, i)) << S.symbol(std::size_t(i)).id;
  for (int i : f.sector()) {
    if (S.symbol(std::size_t(i)).mono.is_polynomial()) continue;
    EXPECT_GE(S.integrated(std::size_t(i)), 0);
  }
  ConvolutionOptions o;
  o.level = 2.5;
  auto low = convolve_Kgamma(f, Rf, o);
  for (int i : low.sector()) {
    EXPECT_LT(S.symbol(std::size_t(i)).homogeneity, 2.5);
    for (long m = low.first_row(); m <= low.last_row(); m += 5)
      for (long j = 0; j < g.cols(); ++j) EXPECT_EQ(low.coefficient(i, {m, j}), full.coefficient(i, {m, j}));
  }
}

TEST(Convolution, NonAnticipative) {
  const auto& Z = extended();
  const Grid& g = Z.grid();
  long r0 = row(g, 0.0), r1 = row(g, 0.4), cut = row(g, 0.25);
  auto f = phi4_test_distribution(Z, 1.1, r0, r1);
  auto h = f;
  for (int i : h.sector())
    for (long m = cut + 1; m <= r1; ++m)
      for (long j = 0; j < g.cols(); ++j) h.set_coefficient(i, {m, j}, 3.0 * h.coefficient(i, {m, j}) + 1.0);
  ConvolutionOptions o;
  o.causal = true;
  auto Kf = convolve_Kgamma(f, o), Kh = convolve_Kgamma(h, o);
  std::size_t changed = 0;
  for (int i : Kf.sector())
    for (long m = r0; m <= r1; ++m)
      for (long j = 0; j < g.cols(); ++j) {
        double a = Kf.coefficient(i, {m, j}), b = Kh.coefficient(i, {m, j});
        if (m <= cut)
          ASSERT_EQ(a, b);
        else
          changed += a != b;
      }
  EXPECT_GT(changed, 0u);
}

TEST(Convolution, WeightedSchauder) {
  auto Z = phi4(std::ldexp(1.0, -5), -0.1, 0.6);
  const Grid& g = Z.grid();
  long r0 = row(g, -0.1), r1 = row(g, 0.55);
  auto f = positive_part(symbol_lift(Z, "Xi", -1.2, r0, r1));
  WeightSpec w{-1.3};
  auto rep = weighted_schauder_test(f, w);
  EXPECT_NEAR(rep.level, 0.8, 1e-12);
  EXPECT_NEAR(rep.eta, -1.51 + 2.0, 1e-9);
  EXPECT_TRUE(std::isfinite(rep.seminorm));
  EXPECT_GT(rep.seminorm, 0.0);
  ASSERT_EQ(rep.sweep.size(), 3u);
  EXPECT_TRUE(rep.slope_positive) << rep.slope;
  auto zero = positive_part(symbol_lift(Z, "Xi", -1.2, r0, r1, 0.0));
  EXPECT_EQ(weighted_schauder_test(zero, w).seminorm, 0.0);
  EXPECT_THROW(weighted_schauder_test(f, WeightSpec{-2.5}), ConvolutionError);
}
