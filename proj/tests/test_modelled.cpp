#include <gtest/gtest.h>

#include <filesystem>

#include "regstruct/modelled.hpp"

using namespace regstruct;

namespace {

const double e4 = std::ldexp(1.0, -4);

DiscreteModel poly_model(double eps = e4, int degree = 3) {
  return DiscreteModel::polynomial(Grid(eps, -0.1, 0.5), polynomial_structure(degree));
}

DiscreteModel phi4(double eps = e4, std::uint64_t seed = 5) {
  Grid g(eps, -0.3, 0.6);
  auto K = std::make_shared<const KernelDecomposition>(KernelDecomposition::build(g));
  return DiscreteModel::canonical(white_noise(g, seed), K, phi4_structure());
}

long row(const Grid& g, double t) { return std::lround(t / g.dt()); }

// lift of x^p truncated below gamma
ModelledDistribution power_lift(const DiscreteModel& Z, int p, double gamma) {
  const Grid& g = Z.grid();
  return polynomial_lift(Z, gamma, row(g, 0.0), row(g, 0.3), [p](double, double x, const MultiIndex& k) {
    if (k.t) return 0.0;
    return power_function(p)(x, k.x);
  });
}

PairPlan small_plan() {
  PairPlan p;
  p.box = {0.0, 0.125, 0.0, 1.0};
  return p;
}

}  // namespace

TEST(Modelled, ConstantHasZeroSeminorm) {
  auto Z = phi4();
  const Grid& g = Z.grid();
  auto f = symbol_lift(Z, "1", 1.5, row(g, 0.0), row(g, 0.3), 3.0);
  EXPECT_EQ(dgamma_seminorm(f, 1.5, small_plan()), 0.0);
}

TEST(Modelled, ExactLinearLiftHasZeroSeminorm) {
  auto Z = poly_model();
  auto f = power_lift(Z, 1, 2.0);
  EXPECT_NEAR(dgamma_seminorm(f, 2.0, small_plan()), 0.0, 1e-14);
  auto c = power_lift(Z, 2, 3.5);  // x^2 with X1^2 kept
  EXPECT_NEAR(dgamma_seminorm(c, 3.5, small_plan()), 0.0, 1e-12);
}

TEST(Modelled, TruncatedSquareMatchesBruteForce) {
  auto Z = poly_model();
  const Grid& g = Z.grid();
  auto f = power_lift(Z, 2, 2.0);
  PairPlan plan = small_plan();
  double brute = 0.0;
  for (const auto& [z, y] : sample_pairs(g, plan, g.eps(), 1.0)) {
    double d = g.distance(z, y), h = (z.j - y.j) * g.dx();
    brute = std::max({brute, h * h / (d * d), 2.0 * std::abs(h) / d});
  }
  EXPECT_NEAR(dgamma_seminorm(f, 2.0, plan), brute, 1e-12);
  EXPECT_NEAR(brute, 2.0, 1e-12);
}

TEST(Modelled, SmallScaleIsEmptyOnUniformLattice) {
  Grid g(e4, 0.0, 0.5);
  EXPECT_TRUE(small_offsets(g, g.eps()).empty());
  EXPECT_EQ(small_offsets(g, 2.0 * g.eps()).size(), 7u * 3u - 1u);  // |dm| <= 3, |dj| <= 1
}

TEST(Modelled, DistanceProperties) {
  auto Z = poly_model();
  const Grid& g = Z.grid();
  auto f = power_lift(Z, 2, 2.0), h = power_lift(Z, 3, 2.0);
  auto one = symbol_lift(Z, "1", 2.0, row(g, 0.0), row(g, 0.3), 0.7);
  PairPlan plan = small_plan();
  EXPECT_EQ(dgamma_distance(f, f, 2.0, plan), 0.0);
  EXPECT_NEAR(dgamma_distance(f, combine(1.0, f, 1.0, one), 2.0, plan), 0.0, 1e-14);
  double ab = dgamma_distance(f, h, 2.0, plan), ba = dgamma_distance(h, f, 2.0, plan);
  EXPECT_NEAR(ab, ba, 1e-14);
  auto mid = combine(0.5, f, 0.5, h);
  EXPECT_LE(ab, dgamma_distance(f, mid, 2.0, plan) + dgamma_distance(mid, h, 2.0, plan) + 1e-14);
  auto other = power_lift(Z, 2, 3.0);
  EXPECT_THROW(dgamma_distance(f, other, 2.0, plan), ModelledError);
}

TEST(Modelled, DistanceAcrossPerturbedModels) {
  // Gamma perturbed by a defect on integrated symbols; f, g are x^2 lifts plus I(Xi)
  auto Z = phi4();
  DiscreteModel::Options opt;
  opt.gamma_defect = 0.05;
  auto Zb = DiscreteModel::canonical(*Z.noise(), Z.kernel_ptr(), Z.structure(), opt);
  const Grid& g = Z.grid();
  long r0 = row(g, 0.0), r1 = row(g, 0.2);
  auto mk = [&](const DiscreteModel& M) {
    auto a = polynomial_lift(M, 1.5, r0, r1, [](double, double x, const MultiIndex& k) {
      return k.t ? 0.0 : power_function(2)(x, k.x);
    });
    return combine(1.0, a, 1.0, symbol_lift(M, "I(Xi)", 1.5, r0, r1));
  };
  auto f = mk(Z), h = mk(Zb);
  PairPlan plan;
  plan.box = {0.0, 0.0625, 0.0, 0.5};
  double brute = 0.0;
  const auto& S = Z.structure();
  for (const auto& [z, y] : sample_pairs(g, plan, g.eps(), 1.0)) {
    double d = g.distance(z, y);
    auto v = f.at(z) - f.transported(z, y) - h.at(z) + h.transported(z, y);
    for (double b : S.levels())
      if (b < 1.5 - 1e-9) brute = std::max(brute, S.norm(v, b) / std::pow(d, 1.5 - b));
  }
  EXPECT_NEAR(dgamma_distance(f, h, 1.5, plan), brute, 1e-12);
  EXPECT_GT(brute, 0.0);
}

TEST(Modelled, WeightedConstant) {
  auto Z = poly_model();
  const Grid& g = Z.grid();
  auto f = symbol_lift(Z, "1", 2.0, row(g, 0.0), row(g, 0.3), -1.5);
  WeightSpec w{0.0};
  auto P = weighted_parts(f, nullptr, 2.0, w, small_plan());
  EXPECT_DOUBLE_EQ(P.direct, 1.5);
  EXPECT_EQ(P.large, 0.0);
  EXPECT_THROW(weighted_seminorm(f, 2.0, WeightSpec{2.5}, small_plan()), ModelledError);
}

TEST(Modelled, WeightedAwayFromPMatchesUnweighted) {
  auto Z = poly_model();
  auto f = power_lift(Z, 2, 2.0);
  PairPlan plan;
  plan.box = {0.2, 0.26, 0.0, 1.0};
  // eta = gamma: pair weights are ||y,z||_P^0 = 1; the direct term is reported separately
  auto W = weighted_parts(f, nullptr, 2.0, WeightSpec{2.0}, plan);
  auto U = dgamma_parts(f, nullptr, 2.0, plan);
  // K_P drops pairs farther apart than their distance to P
  double brute = 0.0;
  const Grid& g = f.grid();
  for (const auto& [z, y] : sample_pairs(g, plan, g.eps(), 1.0)) {
    double d = g.distance(z, y);
    if (d > std::min(p_norm(g, z), p_norm(g, y))) continue;
    double h = (z.j - y.j) * g.dx();
    brute = std::max({brute, h * h / (d * d), 2.0 * std::abs(h) / d});
  }
  EXPECT_NEAR(W.large, brute, 1e-12);
  EXPECT_LE(W.large, U.large + 1e-12);
}

TEST(Modelled, WeightedHeatLiftNearZero) {
  // g(t, x) = t^{1/2} cos(2 pi x) lifted to {1, X1}; weighted sup with eta = 0 by brute force
  auto Z = poly_model(std::ldexp(1.0, -3));
  const Grid& g = Z.grid();
  auto f = polynomial_lift(Z, 1.5, row(g, 0.0), row(g, 0.3), [](double t, double x, const MultiIndex& k) {
    double a = std::sqrt(std::max(t, 0.0));
    return k.x == 0 ? a * std::cos(2 * M_PI * x) : -2 * M_PI * a * std::sin(2 * M_PI * x);
  });
  PairPlan plan;
  plan.box = {0.0, 0.1, 0.0, 1.0};
  WeightSpec w{0.0};
  const auto& S = f.structure();
  double direct = 0.0, large = 0.0;
  auto pts = box_points(g, plan.box);
  for (const auto& z : pts) {
    if (z.m == 0) continue;
    double nz = p_norm(g, z);
    auto v = f.at(z);
    for (double b : S.levels())
      if (b < 1.5 - 1e-9) direct = std::max(direct, S.norm(v, b) / std::pow(nz, std::min(w.eta - b, 0.0)));
    for (const auto& y : pts) {
      if (y.m == 0 || y == z) continue;
      double d = g.distance(z, y), nyz = std::min(nz, p_norm(g, y));
      if (d < g.eps() || d > 1.0 || d > nyz) continue;
      auto u = f.at(z) - f.transported(z, y);
      for (double b : S.levels())
        if (b < 1.5 - 1e-9) large = std::max(large, S.norm(u, b) / (std::pow(d, 1.5 - b) * std::pow(nyz, w.eta - 1.5)));
    }
  }
  auto P = weighted_parts(f, nullptr, 1.5, w, plan);
  EXPECT_NEAR(P.direct, direct, 1e-12);
  EXPECT_NEAR(P.large, large, 1e-12);
}

TEST(Modelled, MultiplyNoiseLifts) {
  auto Z = phi4();
  const Grid& g = Z.grid();
  long r0 = row(g, 0.0), r1 = row(g, 0.1);
  auto u = symbol_lift(Z, "I(Xi)", 1.5, r0, r1, 2.0);
  auto uu = multiply(u, u, 1.5);
  int sq = Z.structure().index("I(Xi)^2");
  EXPECT_DOUBLE_EQ(uu.coefficient(sq, {r0 + 3, 5}), 4.0);
  auto one = symbol_lift(Z, "1", 1.5, r0, r1);
  auto w = multiply(u, one, 1.5);
  EXPECT_EQ(w.sector(), u.sector());
  EXPECT_DOUBLE_EQ(w.coefficient(Z.structure().index("I(Xi)"), {r1, 2}), 2.0);
  auto xi = symbol_lift(Z, "Xi", 1.5, r0, r1);
  EXPECT_THROW(multiply(xi, u, 1.5), ModelledError);
}

TEST(Modelled, MultiplyBoundSweep) {
  auto Z = poly_model(e4, 4);
  const Grid& g = Z.grid();
  PairPlan plan = small_plan();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double C = 0.0;
  for (int t = 0; t < 10; ++t) {
    double a = U(rng), b = U(rng), c = U(rng), d = U(rng);
    auto lift = [&](double p, double q) {
      return polynomial_lift(Z, 2.5, row(g, 0.0), row(g, 0.3), [p, q](double, double x, const MultiIndex& k) {
        if (k.t) return 0.0;
        double s = std::sin(2 * M_PI * x + p), co = std::cos(2 * M_PI * x + p);
        double w = 2 * M_PI;
        double v[] = {q * s, q * w * co, -q * w * w * s};
        return k.x <= 2 ? v[k.x] : 0.0;
      });
    };
    auto f = lift(a, b), h = lift(c, d);
    auto fh = multiply(f, h, 2.5);
    double nf = dgamma_seminorm(f, 2.5, plan) + 1e-300, nh = dgamma_seminorm(h, 2.5, plan) + 1e-300;
    double bound = nf * (1.0 + std::abs(b)) + nh * (1.0 + std::abs(d)) + nf * nh;
    C = std::max(C, dgamma_seminorm(fh, 2.5, plan) / bound);
  }
  EXPECT_TRUE(std::isfinite(C));
  EXPECT_LT(C, 10.0);
}

TEST(Modelled, PolynomialProductAssociative) {
  auto Z = poly_model(e4, 4);
  const Grid& g = Z.grid();
  auto a = power_lift(Z, 1, 4.5), b = power_lift(Z, 2, 4.5);
  auto c = polynomial_lift(Z, 4.5, row(g, 0.0), row(g, 0.3), [](double t, double, const MultiIndex& k) {
    return k.x ? 0.0 : (k.t == 0 ? 1.0 + t : (k.t == 1 ? 1.0 : 0.0));
  });
  auto l = multiply(multiply(a, b, 4.5), c, 4.5), r = multiply(a, multiply(b, c, 4.5), 4.5);
  for (long m = l.first_row(); m <= l.last_row(); m += 5)
    for (long j = 0; j < g.cols(); ++j) {
      auto u = l.at({m, j}), v = r.at({m, j});
      for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(u[i], v[i], 1e-13);
    }
}

TEST(Modelled, ComposeIdentityAndCube) {
  auto Z = phi4();
  const Grid& g = Z.grid();
  long r0 = row(g, 0.0), r1 = row(g, 0.05);
  const auto& S = Z.structure();
  int one = S.unit(), iX = S.index("I(Xi)");
  auto f = combine(1.0, symbol_lift(Z, "1", 0.9, r0, r1, 0.7), 1.0, symbol_lift(Z, "I(Xi)", 0.9, r0, r1, -1.3));
  auto id = compose_smooth([](double u, int k) { return k == 0 ? u : (k == 1 ? 1.0 : 0.0); }, f, 0.9);
  for (long m = r0; m <= r1; m += 3) {
    EXPECT_DOUBLE_EQ(id.coefficient(one, {m, 1}), 0.7);
    EXPECT_DOUBLE_EQ(id.coefficient(iX, {m, 1}), -1.3);
  }
  auto cube = compose_smooth(power_function(3), f, 0.9);  // below |I(Xi)^2|
  EXPECT_NEAR(cube.coefficient(one, {r0, 0}), 0.343, 1e-15);
  EXPECT_NEAR(cube.coefficient(iX, {r0, 0}), 3 * 0.49 * -1.3, 1e-15);
  EXPECT_EQ(cube.sector().size(), 2u);
}

TEST(Modelled, ComposeCubeMatchesExpansion) {
  auto Z = phi4();
  const Grid& g = Z.grid();
  long r0 = row(g, 0.0), r1 = row(g, 0.05);
  const auto& S = Z.structure();
  double gamma = 1.6;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double a = U(rng), c = U(rng);
  auto f = ModelledDistribution::from(Z, gamma, {S.unit(), S.index("I(Xi)")}, r0, r1, [&](const Point& z) {
    StructureVector v = S.zero(gamma);
    v[std::size_t(S.unit())] = a + 0.01 * z.j;
    v[std::size_t(S.index("I(Xi)"))] = c;
    return v;
  });
  auto F = compose_smooth(power_function(3), f, gamma);
  // (A + c I)^3 = A^3 + 3A^2 c I + 3A c^2 I^2 + c^3 I^3
  Point z{r0 + 2, 7};
  double A = a + 0.01 * 7;
  auto v = F.at(z);
  EXPECT_NEAR(v[std::size_t(S.unit())], A * A * A, 1e-13);
  EXPECT_NEAR(v[std::size_t(S.index("I(Xi)"))], 3 * A * A * c, 1e-13);
  EXPECT_NEAR(v[std::size_t(S.index("I(Xi)^2"))], 3 * A * c * c, 1e-13);
  EXPECT_NEAR(v[std::size_t(S.index("I(Xi)^3"))], c * c * c, 1e-13);
  // affine F is linear in the coefficients
  auto L = compose_smooth([](double u, int k) { return k == 0 ? 2.0 * u - 1.0 : (k == 1 ? 2.0 : 0.0); }, f, gamma);
  EXPECT_NEAR(L.coefficient(S.index("I(Xi)"), z), 2.0 * c, 1e-15);
  EXPECT_NEAR(L.coefficient(S.unit(), z), 2.0 * A - 1.0, 1e-15);
  auto xi = symbol_lift(Z, "Xi", gamma, r0, r1);
  EXPECT_THROW(compose_smooth(power_function(3), xi, gamma), ModelledError);
}

TEST(Modelled, GradientRules) {
  auto S = polynomial_e_structure(3);
  auto d1 = abstract_gradient(S.symbol(std::size_t(S.index("X1"))).mono);
  ASSERT_EQ(d1.size(), 1u);
  EXPECT_EQ(S.id_of(d1[0].first), "1");
  auto d2 = abstract_gradient(S.symbol(std::size_t(S.index("X1^2"))).mono);
  ASSERT_EQ(d2.size(), 2u);
  EXPECT_EQ(S.id_of(d2[0].first), "E");
  EXPECT_EQ(d2[0].second, 1.0);
  EXPECT_EQ(S.id_of(d2[1].first), "X1");
  EXPECT_EQ(d2[1].second, 2.0);
}

TEST(Modelled, GradientCompatibility) {
  Grid g(e4, -0.1, 0.5);
  auto Z = DiscreteModel::polynomial(g, polynomial_e_structure(3));
  const auto& S = Z.structure();
  std::vector<int> sec;
  for (std::size_t i = 0; i < S.size(); ++i)
    if (S.symbol(i).homogeneity < 3.0) sec.push_back(int(i));
  std::vector<Point> zs, ys;
  for (long m = 0; m < 40; m += 7)
    for (long j = -3; j < 20; j += 4) {
      zs.push_back({m, j});
      ys.push_back({m + 3, j + 1});
    }
  EXPECT_LE(gradient_compatibility(Z, sec, zs, ys), 1e-13);
  auto f = polynomial_lift(Z, 3.0, 0, 40, [](double, double x, const MultiIndex& k) {
    return k.t ? 0.0 : power_function(2)(x, k.x);
  });
  auto Df = differentiate(f);
  EXPECT_DOUBLE_EQ(Df.gamma(), 2.0);
  Point z{5, 6};
  double x = g.space(6);
  EXPECT_NEAR(Df.coefficient(S.unit(), z), 2.0 * x, 1e-15);
  EXPECT_NEAR(Df.coefficient(S.index("X1"), z), 2.0, 1e-15);
  EXPECT_NEAR(Df.coefficient(S.index("E"), z), 1.0, 1e-15);
}

TEST(Modelled, PositivePartAndSaveLoad) {
  auto Z = phi4();
  const Grid& g = Z.grid();
  auto f = combine(1.0, symbol_lift(Z, "1", 1.5, -8, 20, 2.0), 1.0, symbol_lift(Z, "I(Xi)", 1.5, -8, 20, 0.5));
  auto p = positive_part(f);
  EXPECT_EQ(p.coefficient(Z.structure().unit(), {0, 3}), 0.0);
  EXPECT_EQ(p.coefficient(Z.structure().unit(), {1, 3}), 2.0);
  auto path = (std::filesystem::temp_directory_path() / "regstruct_md.bin").string();
  f.save(path);
  auto h = ModelledDistribution::load(path, Z);
  EXPECT_EQ(h.sector(), f.sector());
  for (long m = -8; m <= 20; ++m)
    for (long j = 0; j < g.cols(); ++j) {
      auto u = f.at({m, j}), v = h.at({m, j});
      for (std::size_t i = 0; i < u.size(); ++i) EXPECT_EQ(u[i], v[i]);
    }
  std::filesystem::remove(path);
  EXPECT_THROW(f.at({21, 0}), ModelledError);
}

TEST(Modelled, SampledPairsDeterministicAndBounded) {
  Grid g(std::ldexp(1.0, -6), 0.0, 0.3);
  PairPlan plan;
  plan.max_pairs = 5000;
  auto a = sample_pairs(g, plan, g.eps(), 1.0), b = sample_pairs(g, plan, g.eps(), 1.0);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_LE(a.size(), plan.max_pairs);
  EXPECT_GT(a.size(), plan.max_pairs / 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(a[i].second, b[i].second);
    double d = g.distance(a[i].first, a[i].second);
    EXPECT_GE(d, g.eps() * (1 - 1e-12));
    EXPECT_LE(d, 1.0);
  }
  // nearest-neighbour shell is represented
  bool near = false;
  for (const auto& [z, y] : a) near |= g.distance(z, y) <= 2.0 * g.eps();
  EXPECT_TRUE(near);
}
