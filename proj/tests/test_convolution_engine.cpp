#include <gtest/gtest.h>

#include <random>

#include "regstruct/kernel.hpp"

using namespace regstruct;

namespace {

GridFunction noise(const Grid& g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  GridFunction f(g);
  for (auto& v : f.values()) v = N(rng);
  return f;
}

}  // namespace

TEST(Engine, FftDirectAndPointwiseAgree) {
  Grid g(std::ldexp(1.0, -5), -0.3, 0.3);
  auto D = KernelDecomposition::build(g);
  auto F = noise(g, 1);
  ConvolutionEngine E(g, D.total().L + 2);
  auto a = E.convolve(D.total(), F, ConvolutionEngine::Mode::fft);
  auto b = E.convolve(D.total(), F, ConvolutionEngine::Mode::direct);
  double scale = a.sup();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-12 * scale);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
  for (int t = 0; t < 50; ++t) {
    auto p = g.point(pick(rng));
    EXPECT_NEAR(a(p.m, p.j), convolve_at(D.total(), F, p.m, p.j), 1e-12 * scale);
  }
}

TEST(Engine, SharedForwardTransform) {
  Grid g(std::ldexp(1.0, -4), 0.0, 0.5);
  auto D = KernelDecomposition::build(g);
  auto F = noise(g, 3);
  ConvolutionEngine E(g, D.total().L + 2);
  auto spec = E.forward(F);
  auto a = E.apply(spec, D.derivative({0, 1}));
  auto b = E.convolve(D.derivative({0, 1}), F);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.values()[i], b.values()[i]);
}

TEST(Engine, DirectModeExactlyCausal) {
  Grid g(std::ldexp(1.0, -4), 0.0, 0.6);
  auto D = KernelDecomposition::build(g);
  auto F = noise(g, 4);
  auto H = F;
  long cut = g.first_row() + g.rows() / 2;
  for (long m = cut + 1; m <= g.last_row(); ++m)
    for (long j = 0; j < g.cols(); ++j) H(m, j) += 10.0;
  ConvolutionEngine E(g, D.total().L + 2);
  auto a = E.direct(D.total(), F), b = E.direct(D.total(), H);
  auto c = E.convolve(D.total(), F), d = E.convolve(D.total(), H);
  for (long m = g.first_row(); m <= cut; ++m)
    for (long j = 0; j < g.cols(); ++j) {
      EXPECT_EQ(a(m, j), b(m, j));
      EXPECT_NEAR(c(m, j), d(m, j), 1e-11);
    }
}

TEST(Engine, HeatSemigroupFromInitialRow) {
  // a single forcing row propagates as dt * G
  Grid g(std::ldexp(1.0, -4), 0.0, 0.5);
  auto G = heat_green(g, g.rows());
  GridFunction F(g);
  for (long j = 0; j < g.cols(); ++j) F(0, j) = std::sin(2.0 * M_PI * g.space(j));
  ConvolutionEngine E(g, G.L);
  auto u = E.convolve(G, F);
  double lam = 4.0 / (g.dx() * g.dx()) * std::pow(std::sin(M_PI / double(g.cols())), 2);
  for (long m = 1; m <= g.last_row(); ++m)
    for (long j = 0; j < g.cols(); ++j)
      EXPECT_NEAR(u(m, j), g.dt() * std::exp(-lam * m * g.dt()) * std::sin(2.0 * M_PI * g.space(j)), 1e-13);
}

TEST(Engine, RejectsMismatchedInputs) {
  Grid g(std::ldexp(1.0, -4), 0.0, 0.5), h(std::ldexp(1.0, -3), 0.0, 0.5);
  ConvolutionEngine E(g, 8);
  KernelRows K(4, g.cols()), Long(20, g.cols()), Wrong(4, h.cols());
  EXPECT_THROW(E.convolve(K, GridFunction(h)), GridError);
  EXPECT_THROW(E.convolve(Long, GridFunction(g)), GridError);
  EXPECT_THROW(E.convolve(Wrong, GridFunction(g)), GridError);
}
