#pragma once

// Independent reference solvers for the fixed-point checks (dense Eigen solve, spectral time stepping).

#include <Eigen/Dense>
#include <fftw3.h>

#include <complex>
#include <functional>
#include <vector>

#include "regstruct/kernel.hpp"

namespace regstruct::oracle {

/// Dense solve of U = C (lambda U + phi) + v on rows 0..N, with (C h)(m) = dt dx sum_{m' < m} G(m - m') * h(m').
/// phi and v are row-major (N + 1) x M arrays.
inline std::vector<double> linear_volterra(const Grid& g, long N, double lambda, const std::vector<double>& phi,
                                           const std::vector<double>& v) {
  long M = g.cols();
  long n = (N + 1) * M;
  KernelRows G = heat_green(g, N + 1);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
  double w = g.dt() * g.dx();
  for (long m = 0; m <= N; ++m)
    for (long j = 0; j < M; ++j)
      for (long mp = 0; mp < m; ++mp)
        for (long jp = 0; jp < M; ++jp) C(m * M + j, mp * M + jp) = w * G(m - mp, wrap(j - jp, M));
  Eigen::VectorXd ph = Eigen::Map<const Eigen::VectorXd>(phi.data(), n);
  Eigen::VectorXd b = C * ph + Eigen::Map<const Eigen::VectorXd>(v.data(), n);
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - lambda * C;
  Eigen::VectorXd U = A.partialPivLu().solve(b);
  return {U.data(), U.data() + n};
}

/// u_m = P (u_{m-1} + dt F(u_{m-1})), P = exp(dt Delta_h) applied in Fourier space; rows 0..N, row-major.
inline std::vector<double> exponential_euler(const Grid& g, long N, const std::function<double(double)>& u0,
                                             const std::function<double(double)>& F) {
  long M = g.cols();
  std::size_t Mc = std::size_t(M / 2 + 1);
  std::vector<double> out(std::size_t((N + 1) * M)), buf(static_cast<std::size_t>(M));
  std::vector<std::complex<double>> spec(Mc);
  std::vector<double> decay(Mc);
  for (std::size_t q = 0; q < Mc; ++q) {
    double s = std::sin(M_PI * double(q) / double(M));
    decay[q] = std::exp(-g.dt() * 4.0 / (g.dx() * g.dx()) * s * s) / double(M);
  }
  auto fwd = fftw_plan_dft_r2c_1d(int(M), buf.data(), reinterpret_cast<fftw_complex*>(spec.data()), FFTW_ESTIMATE);
  auto inv = fftw_plan_dft_c2r_1d(int(M), reinterpret_cast<fftw_complex*>(spec.data()), buf.data(), FFTW_ESTIMATE);
  for (long j = 0; j < M; ++j) out[std::size_t(j)] = u0(g.space(j));
  for (long m = 1; m <= N; ++m) {
    const double* prev = out.data() + (m - 1) * M;
    for (long j = 0; j < M; ++j) buf[std::size_t(j)] = prev[j] + g.dt() * F(prev[j]);
    fftw_execute(fwd);
    for (std::size_t q = 0; q < Mc; ++q) spec[q] *= decay[q];
    fftw_execute(inv);
    std::copy(buf.begin(), buf.end(), out.begin() + m * M);
  }
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(inv);
  return out;
}

}  // namespace regstruct::oracle
