#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "regstruct/kernel.hpp"

using namespace regstruct;

namespace {

const KernelDecomposition& decomposition(int k) {
  static std::map<int, KernelDecomposition> cache;
  auto it = cache.find(k);
  if (it == cache.end()) {
    Grid g(std::ldexp(1.0, -k), -0.5, 0.5);
    it = cache.emplace(k, KernelDecomposition::build(g)).first;
  }
  return it->second;
}

// K(z, y) by offset lookup, zero outside the stored rows
double entry(const KernelRows& K, long zm, long zj, long ym, long yj) { return K.at(zm - ym, zj - yj); }

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= double(x.size());
  my /= double(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
  return sxy / sxx;
}

}  // namespace

TEST(HeatKernel, MassAndCosineOracle) {
  Grid g(std::ldexp(1.0, -4), 0.0, 1.0);
  auto G = heat_green(g, 40);
  long M = g.cols();
  for (long m = 1; m < 40; ++m) {
    double mass = 0.0;
    for (long j = 0; j < M; ++j) mass += G(m, j) * g.dx();
    EXPECT_NEAR(mass, 1.0, 1e-13);
  }
  for (long m : {1L, 7L, 39L})
    for (long j : {0L, 3L, 8L, 15L}) {
      double ref = 0.0;
      for (long k = 0; k < M; ++k) {
        double s = std::sin(M_PI * double(k) / double(M));
        ref += std::exp(-4.0 / (g.dx() * g.dx()) * s * s * m * g.dt()) * std::cos(2.0 * M_PI * double(k * j) / double(M));
      }
      EXPECT_NEAR(G(m, j), ref, 1e-12);
    }
  for (long j = 0; j < M; ++j) EXPECT_EQ(G(0, j), 0.0);
}

TEST(HeatKernel, Semigroup) {
  // G(a + b) = dx sum_y G(a, . - y) G(b, y)
  Grid g(std::ldexp(1.0, -4), 0.0, 1.0);
  auto G = heat_green(g, 30);
  long M = g.cols();
  for (long j = 0; j < M; ++j) {
    double s = 0.0;
    for (long y = 0; y < M; ++y) s += G(10, j - y) * G(17, y) * g.dx();
    EXPECT_NEAR(s, G(27, j), 1e-12);
  }
}

TEST(Decomposition, MomentsKilledAtRandomBasePoints) {
  for (int k : {5, 6}) {
    const auto& D = decomposition(k);
    const Grid& g = D.grid();
    std::mt19937_64 rng(10 + k);
    std::uniform_int_distribution<long> col(0, g.cols() - 1), row(0, 40);
    for (int trial = 0; trial < 10; ++trial) {
      long zm = row(rng), zj = col(rng);
      for (int n = 0; n <= D.finest(); ++n)
        for (const auto& kk : D.killed()) {
          // direct summation over y on the torus and the causal rows
          double acc = 0.0;
          for (long ym = zm - D.slice(n).L; ym <= zm; ++ym)
            for (long yj = zj - g.cols() / 2 + 1; yj <= zj + g.cols() / 2; ++yj)
              acc += entry(D.slice(n), zm, zj, ym, yj) * monomial((ym - zm) * g.dt(), (yj - zj) * g.dx(), kk);
          EXPECT_LE(std::abs(acc * g.cell()), 1e-10) << "n=" << n << " k=(" << kk.t << "," << kk.x << ")";
        }
    }
  }
}

TEST(Decomposition, KilledSetForSigmaTwo) {
  const auto& D = decomposition(5);
  ASSERT_EQ(D.killed().size(), 4u);
  EXPECT_LE(D.killing_residual(), 1e-10);
  EXPECT_EQ(D.finest(), 5);
}

TEST(Decomposition, SupportContainment) {
  for (int k : {5, 7}) {
    const auto& D = decomposition(k);
    const Grid& g = D.grid();
    for (int n = 0; n <= D.finest(); ++n) {
      const auto& K = D.slice(n);
      for (long m = 0; m < K.L; ++m)
        for (long j = 0; j < K.M; ++j)
          if (parabolic_norm(m * g.dt(), signed_col(j, K.M) * g.dx()) > std::ldexp(1.0, -n)) {
            EXPECT_EQ(K(m, j), 0.0);
          }
      EXPECT_LE(D.support_radius(n), std::ldexp(1.0, -n));
    }
  }
}

TEST(Decomposition, NonAnticipative) {
  const auto& D = decomposition(5);
  EXPECT_TRUE(D.non_anticipative());
  for (int n = 0; n <= D.finest(); ++n)
    for (long j = 0; j < D.slice(n).M; ++j) EXPECT_EQ(D.slice(n)(0, j), 0.0);
}

TEST(Decomposition, Resummation) {
  const auto& D = decomposition(6);
  long rows = D.total().L + 20;
  auto R = D.remainder(rows);
  auto G = heat_green(D.grid(), rows);
  KernelRows sum = R;
  for (int n = 0; n <= D.finest(); ++n) sum += D.slice(n);
  double err = 0.0;
  for (std::size_t i = 0; i < G.v.size(); ++i) err = std::max(err, std::abs(sum.v[i] - G.v[i]));
  EXPECT_LE(err, 1e-10);
}

TEST(Decomposition, RemainderSmoothNearOrigin) {
  // the remainder carries no singular part: bounded, and only the corrector near the origin
  const auto& D = decomposition(7);
  auto R = D.remainder(D.total().L);
  const Grid& g = D.grid();
  double mx = 0.0;
  for (long m = 0; m < R.L; ++m)
    for (long j = 0; j < R.M; ++j)
      if (parabolic_norm(m * g.dt(), signed_col(j, R.M) * g.dx()) < 0.1) mx = std::max(mx, std::abs(R(m, j)));
  const auto& G = D.green();
  EXPECT_LT(mx, 0.05 * std::abs(G(1, 0)));
  EXPECT_LT(mx, 50.0);
}

TEST(Decomposition, NegativeControlUncorrected) {
  Grid g(std::ldexp(1.0, -5), -0.5, 0.5);
  KernelOptions opt;
  opt.correct = false;
  auto U = KernelDecomposition::build(g, opt);
  EXPECT_GE(U.killing_residual(), 1e-3);
  EXPECT_GE(std::abs(U.moment(0, {0, 0})), 1e-3);
}

TEST(Decomposition, RejectsOtherBeta) {
  Grid g(std::ldexp(1.0, -4), 0.0, 0.5);
  KernelOptions opt;
  opt.beta = 1.5;
  EXPECT_THROW(KernelDecomposition::build(g, opt), KernelError);
}

TEST(Decomposition, CacheRoundTrip) {
  Grid g(std::ldexp(1.0, -5), -0.5, 0.5);
  auto dir = std::filesystem::temp_directory_path() / "regstruct_kernel_cache_test";
  std::filesystem::remove_all(dir);
  setenv("REGSTRUCT_CACHE", dir.c_str(), 1);
  auto A = KernelDecomposition::cached(g);
  auto B = KernelDecomposition::cached(g);
  unsetenv("REGSTRUCT_CACHE");
  EXPECT_TRUE(std::filesystem::exists(dir / ("kernel_" + A.cache_key() + ".bin")));
  for (int n = 0; n <= A.finest(); ++n) EXPECT_EQ(A.slice(n).v, B.slice(n).v);
  EXPECT_EQ(A.total().v, B.total().v);
  std::filesystem::remove_all(dir);
}

TEST(FiniteDifferenceKernels, ExactOnPolynomials) {
  // stencils reproduce derivatives of cubic polynomials exactly
  double h = 0.1;
  auto f = [](double x) { return 1.0 + 2.0 * x - 3.0 * x * x + 0.5 * x * x * x; };
  double x0 = 0.3;
  double d[4] = {f(x0), 2.0 - 6.0 * x0 + 1.5 * x0 * x0, -6.0 + 3.0 * x0, 3.0};
  for (int k = 0; k <= 3; ++k) {
    double acc = 0.0;
    for (auto [o, c] : FiniteDifference::space(k, h)) acc += c * f(x0 + o * h);
    EXPECT_NEAR(acc, d[k], 1e-9);
  }
  for (int k = 0; k <= 2; ++k) {
    double acc = 0.0;
    auto q = [](double t) { return 2.0 - t + 4.0 * t * t; };
    for (auto [o, c] : FiniteDifference::time(k, h)) acc += c * q(x0 + o * h);
    double ref[3] = {q(x0), -1.0 + 8.0 * x0, 8.0};
    EXPECT_NEAR(acc, ref[k], 1e-9);
  }
}

TEST(TaylorLift, ConstantFieldKilled) {
  const auto& D = decomposition(5);
  GridFunction F(D.grid(), 3.0);
  for (int n = 0; n <= D.finest(); ++n) {
    auto J = taylor_lift(D, F, n, 0.5, {20, 3});
    double q0 = J[{0, 0}];
    EXPECT_LE(std::abs(q0), 1e-10);
  }
}

TEST(TaylorLift, DeltaColumn) {
  const auto& D = decomposition(5);
  const Grid& g = D.grid();
  GridFunction F(g);
  Point y{3, 7};
  F(y.m, y.j) = 1.0;
  Point z{9, 5};
  for (int n = 0; n <= D.finest(); ++n) {
    auto J = taylor_lift(D, F, n, 0.0, z);
    double q0 = J[{0, 0}];
    EXPECT_NEAR(q0, D.slice(n).at(z.m - y.m, z.j - y.j) * g.cell(), 1e-15);
  }
}

TEST(TaylorLift, ConsistentAcrossZeta) {
  const auto& D = decomposition(5);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N(0.0, 1.0);
  GridFunction F(D.grid());
  for (auto& v : F.values()) v = N(rng);
  auto a = taylor_lift(D, F, 1, 0.5, {12, 4});
  auto b = taylor_lift(D, F, 1, 1.5, {12, 4});
  ASSERT_LT(a.index.size(), b.index.size());
  for (std::size_t i = 0; i < a.index.size(); ++i) EXPECT_EQ(a.coeff[i], b[a.index[i]]);
  EXPECT_THROW(taylor_lift(D, F, 1, 0.5, {100000, 0}), KernelError);
}

TEST(TaylorLift, NoiseJetScaling) {
  // RMS of Q_k over base points for white noise follows 2^{n(|k|_s - beta - |Xi|)}, |Xi| = -3/2;
  // slices whose inner radius 2^{-n-3} is below 2 eps sit at the lattice scale and are left out
  int k = 7;
  const auto& D = decomposition(k);
  const Grid& g = D.grid();
  std::mt19937_64 rng(17);
  std::normal_distribution<double> N(0.0, 1.0);
  GridFunction xi(g);
  for (auto& v : xi.values()) v = std::pow(g.eps(), -1.5) * N(rng);
  for (MultiIndex kk : {MultiIndex{0, 0}, MultiIndex{0, 1}, MultiIndex{1, 0}}) {
    std::vector<double> xs, ys;
    for (int n = 0; n <= D.finest() - 4; ++n) {
      double s2 = 0.0;
      int cnt = 0;
      for (long zm = 8000; zm < 8192; zm += 24)
        for (long zj = 0; zj < g.cols(); zj += 8) {
          auto J = taylor_lift(D, xi, n, 1.0, {zm, zj});
          s2 += J[kk] * J[kk];
          ++cnt;
        }
      xs.push_back(n);
      ys.push_back(0.5 * std::log2(s2 / cnt));
    }
    double expect = kk.degree(g.scaling()) - 2.0 + 1.5;
    EXPECT_NEAR(ols_slope(xs, ys), expect, 0.3) << "k=(" << kk.t << "," << kk.x << ")";
  }
}
