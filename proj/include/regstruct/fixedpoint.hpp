#pragma once

#include <fftw3.h>

#include <chrono>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "regstruct/convolution.hpp"

namespace regstruct {

class FixedPointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// R+ f: coefficients zeroed at points with t < 0.
inline ModelledDistribution time_cutoff(const ModelledDistribution& f) {
  ModelledDistribution out = f;
  std::size_t M = std::size_t(f.grid().cols());
  for (int i : f.sector()) {
    double* d = out.plane(i);
    for (long m = f.first_row(); m <= std::min(-1L, f.last_row()); ++m)
      std::fill_n(d + std::size_t(m - f.first_row()) * M, M, 0.0);
  }
  return out;
}

/// The same coefficients on rows [r0, r1].
inline ModelledDistribution restrict_rows(const ModelledDistribution& f, long r0, long r1) {
  if (r0 < f.first_row() || r1 > f.last_row()) throw FixedPointError("row range outside the distribution");
  ModelledDistribution out(f.model(), f.gamma(), f.sector(), r0, r1);
  std::size_t M = std::size_t(f.grid().cols()), n = out.points(), skip = std::size_t(r0 - f.first_row()) * M;
  for (int i : f.sector()) std::copy_n(f.plane(i) + skip, n, out.plane(i));
  return out;
}

namespace detail {

inline std::vector<int> polynomial_sector(const RegularityStructure& S, const std::vector<MultiIndex>& ks) {
  std::vector<int> sec;
  for (const auto& k : ks) {
    int p = S.polynomial(k);
    if (p < 0) throw FixedPointError("structure lacks X^(" + std::to_string(k.t) + "," + std::to_string(k.x) + ")");
    sec.push_back(p);
  }
  return sec;
}

}  // namespace detail

/// R_gamma F = sum_{|k|_s < gamma} X^k (1/k!) (D^k R F)(z) with R = G - K the smooth remainder. The output covers
/// the rows of F.
inline ModelledDistribution remainder_lift(const DiscreteModel& Z, const GridFunction& F, double gamma,
                                           bool causal = false) {
  const KernelDecomposition* D = Z.kernel();
  if (!D) throw FixedPointError("model has no kernel");
  const Grid& g = F.grid();
  if (g.cols() != Z.grid().cols() || !Z.grid().has_row(g.first_row()) || !Z.grid().has_row(g.last_row()))
    throw FixedPointError("field outside the model window");
  auto ks = multi_indices_below(gamma, g.scaling());
  auto sec = detail::polynomial_sector(Z.structure(), ks);
  KernelRows R = D->remainder(g.rows() + 1);
  ConvolutionEngine E(g, R.L + 2);
  auto mode = causal ? ConvolutionEngine::Mode::direct : ConvolutionEngine::Mode::fft;
  ModelledDistribution out(Z, gamma, sec, g.first_row(), g.last_row());
  for (std::size_t q = 0; q < ks.size(); ++q) {
    GridFunction J = E.convolve(ks[q].is_zero() ? R : differentiate_kernel(R, ks[q], g.dt(), g.dx()), F, mode);
    double w = 1.0 / factorial(ks[q]);
    double* d = out.plane(sec[q]);
    for (std::size_t i = 0; i < J.size(); ++i) d[i] = w * J.values()[i];
  }
  return out;
}

/// Polynomial lift of t -> exp(t Delta_h) u0 with jets from the discrete spectrum: D_t -> -lambda, D_x -> 2 pi i q.
inline ModelledDistribution heat_lift(const DiscreteModel& Z, const std::function<double(double)>& u0, double gamma,
                                      long r0, long r1) {
  const Grid& g = Z.grid();
  long M = g.cols();
  std::size_t Mc = std::size_t(M / 2 + 1);
  auto ks = multi_indices_below(gamma, g.scaling());
  auto sec = detail::polynomial_sector(Z.structure(), ks);
  std::vector<double> x(static_cast<std::size_t>(M));
  std::vector<std::complex<double>> hat(Mc), work(Mc);
  for (long j = 0; j < M; ++j) x[std::size_t(j)] = u0(g.space(j));
  auto fwd = fftw_plan_dft_r2c_1d(int(M), x.data(), reinterpret_cast<fftw_complex*>(hat.data()), FFTW_ESTIMATE);
  fftw_execute(fwd);
  fftw_destroy_plan(fwd);
  auto inv = fftw_plan_dft_c2r_1d(int(M), reinterpret_cast<fftw_complex*>(work.data()), x.data(), FFTW_ESTIMATE);
  std::vector<double> lam(Mc);
  for (std::size_t q = 0; q < Mc; ++q) {
    double s = std::sin(M_PI * double(q) / double(M));
    lam[q] = 4.0 / (g.dx() * g.dx()) * s * s;
  }
  ModelledDistribution out(Z, gamma, sec, r0, r1);
  for (std::size_t a = 0; a < ks.size(); ++a) {
    const MultiIndex& k = ks[a];
    double* d = out.plane(sec[a]);
    for (long m = r0; m <= r1; ++m) {
      double t = g.time(m);
      for (std::size_t q = 0; q < Mc; ++q) {
        bool nyquist = M % 2 == 0 && q == Mc - 1;
        std::complex<double> dx(0.0, 2.0 * M_PI * double(q));
        if (nyquist && k.x % 2 == 1) {
          work[q] = 0.0;
          continue;
        }
        work[q] = hat[q] * std::exp(-lam[q] * t) * std::pow(-lam[q], k.t) * std::pow(dx, k.x);
      }
      fftw_execute(inv);
      double w = 1.0 / (double(M) * factorial(k));
      for (long j = 0; j < M; ++j) d[std::size_t(m - r0) * std::size_t(M) + std::size_t(j)] = w * x[std::size_t(j)];
    }
  }
  fftw_destroy_plan(inv);
  return out;
}

/// (A f)(z) = [sum_{0<|k|_s<level} (Pi_z X^k)(z) (1/k!) D^k K (R f - Pi_z f(z))(z)] 1, the correction that restores
/// R K_gamma = K R for models with (Pi_z X^k)(z) != 0. Identically zero otherwise.
inline ModelledDistribution a_correction(const ModelledDistribution& f, const GridFunction& Rf, double level) {
  const DiscreteModel& Z = f.model();
  const KernelDecomposition* D = Z.kernel();
  if (!D) throw FixedPointError("model has no kernel");
  const auto& S = f.structure();
  int one = S.unit();
  ModelledDistribution out(Z, level, {one}, f.first_row(), f.last_row());
  std::vector<MultiIndex> ks;
  std::vector<double> pk;
  Point z0{f.first_row(), 0};
  for (const auto& k : multi_indices_below(level, S.scaling())) {
    if (k.is_zero()) continue;
    int p = S.polynomial(k);
    if (p < 0) throw FixedPointError("structure lacks the polynomials below the output level");
    double v = Z.pi(std::size_t(p), z0, z0);  // translation invariant
    if (v == 0.0) continue;
    ks.push_back(k);
    pk.push_back(v);
  }
  if (ks.empty()) return out;
  auto J = kernel_jets(*D, Rf, ks);
  double* d = out.plane(one);
  std::size_t o = 0;
  for (long m = f.first_row(); m <= f.last_row(); ++m)
    for (long j = 0; j < f.grid().cols(); ++j, ++o) {
      Point z{m, j};
      std::vector<double> c(ks.size());
      for (std::size_t a = 0; a < ks.size(); ++a) c[a] = J[a].values()[o];
      for (int i : f.sector()) {
        double fz = f.plane(i)[o];
        if (fz == 0.0) continue;
        auto Q = Z.jet(std::size_t(i), z, ks);
        for (std::size_t a = 0; a < ks.size(); ++a) c[a] -= fz * Q[a];
      }
      double s = 0.0;
      for (std::size_t a = 0; a < ks.size(); ++a) s += pk[a] * c[a];
      d[o] = s;
    }
  return out;
}

// ---- Picard iteration ------------------------------------------------------------------

struct PicardOptions {
  int max_iterations = 40;
  double tol = 1e-8;
  int max_halvings = 6;
  double halve_at = 0.9;  // contraction factor that triggers halving T
  int burn_in = 2;        // iterations before contraction is judged
  int fixed_iterations = 0;  // > 0: apply the map exactly this often, no stopping rule
  bool causal = false;       // row-by-row kernel sums throughout
  bool subtract_a = false;   // apply the A correction (models with (Pi_z X^k)(z) != 0)
  std::size_t max_pairs = 20000;
  std::uint64_t seed = 1;
};

using Nonlinearity = std::function<ModelledDistribution(const ModelledDistribution&)>;

/// u = (K_gbar - A + R_gamma R) R+ F(u) + v on O_T.
struct FixedPointProblem {
  DiscreteModel model;
  Nonlinearity F;             // maps level gamma to level gamma_bar
  ModelledDistribution v;     // rows from 0 up to at least T
  double gamma = 1.5, gamma_bar = 1.1, eta = 0.0;
  double T = 0.5;
  PicardOptions picard;
};

struct SolveReport {
  int iterations = 0;
  std::vector<double> residuals, contractions;
  double seminorm = 0.0;  // weighted seminorm of u on O_T
  double T = 0.0;
  int halvings = 0;
  bool converged = false;
  double seconds = 0.0;
};

struct FixedPointResult {
  ModelledDistribution u;
  SolveReport report;
};

/// One application of the fixed-point map.
inline ModelledDistribution picard_map(const FixedPointProblem& P, const ModelledDistribution& u,
                                       const ModelledDistribution& v) {
  ModelledDistribution w = time_cutoff(P.F(u));
  if (std::abs(w.gamma() - P.gamma_bar) > 1e-12) throw FixedPointError("nonlinearity returned the wrong level");
  GridFunction Rw = reconstruct(w);
  ConvolutionOptions co;
  co.level = P.gamma;
  co.causal = P.picard.causal;
  ModelledDistribution out = convolve_Kgamma(w, Rw, co);
  if (P.picard.subtract_a) out = combine(1.0, out, -1.0, a_correction(w, Rw, P.gamma));
  out = combine(1.0, out, 1.0, remainder_lift(P.model, Rw, P.gamma, P.picard.causal));
  return combine(1.0, out, 1.0, v);
}

inline void check_problem(const FixedPointProblem& P) {
  double beta = P.model.structure().beta(), st = P.model.structure().scaling().t;
  if (!P.F) throw FixedPointError("no nonlinearity");
  if (!(P.gamma >= P.gamma_bar && P.gamma_bar > 0.0)) throw FixedPointError("need gamma >= gamma_bar > 0");
  if (!(P.gamma < P.gamma_bar + beta)) throw FixedPointError("need gamma < gamma_bar + beta");
  if (!(P.T > 0.0)) throw FixedPointError("time horizon must be positive");
  if (P.eta <= -st) throw FixedPointError("eta must exceed -s_t");
  if (!P.model.kernel() || !P.model.kernel()->non_anticipative()) throw FixedPointError("kernel must be non-anticipative");
  if (P.v.first_row() != 0) throw FixedPointError("initial lift must start at t = 0");
  if (P.v.gamma() < P.gamma - 1e-12) throw FixedPointError("initial lift below level gamma");
}

inline FixedPointResult picard_solve(const FixedPointProblem& problem) {
  check_problem(problem);
  auto start = std::chrono::steady_clock::now();
  const Grid& g = problem.model.grid();
  const PicardOptions& opt = problem.picard;
  FixedPointResult res;
  double T = problem.T;
  for (int halving = 0;; ++halving) {
    long N = std::lround(std::floor(T / g.dt() + 1e-9));
    if (N > problem.v.last_row()) throw FixedPointError("initial lift does not reach T");
    ModelledDistribution v = restrict_rows(problem.v, 0, N);
    PairPlan plan{{0.0, g.time(N), 0.0, g.period()}, opt.max_pairs, opt.seed};
    WeightSpec w{problem.eta};
    SolveReport rep;
    rep.T = g.time(N);
    rep.halvings = halving;
    ModelledDistribution u = v;
    bool stalled = false;
    int limit = opt.fixed_iterations > 0 ? opt.fixed_iterations : opt.max_iterations;
    for (int it = 1; it <= limit; ++it) {
      ModelledDistribution next = picard_map(problem, u, v);
      if (opt.fixed_iterations > 0) {
        u = std::move(next);
        rep.iterations = it;
        continue;
      }
      double r = weighted_distance(next, u, problem.gamma, w, plan);
      if (!std::isfinite(r)) throw FixedPointError("Picard iteration diverged (non-finite residual)");
      if (!rep.residuals.empty())
        rep.contractions.push_back(rep.residuals.back() > 0.0 ? r / rep.residuals.back() : 0.0);
      rep.residuals.push_back(r);
      u = std::move(next);
      if (r <= opt.tol) {
        rep.iterations = it - 1;
        rep.converged = true;
        break;
      }
      if (it > opt.burn_in && rep.contractions.back() >= opt.halve_at) {
        stalled = true;
        break;
      }
    }
    if (opt.fixed_iterations > 0) rep.converged = true;
    if (!rep.converged && !stalled) stalled = true;
    if (!stalled) {
      rep.seminorm = weighted_seminorm(u, problem.gamma, w, plan);
      rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      res.u = std::move(u);
      res.report = std::move(rep);
      return res;
    }
    if (halving >= opt.max_halvings) {
      std::string f;
      for (double c : rep.contractions) f += " " + std::to_string(c);
      throw FixedPointError("no contraction after " + std::to_string(halving) + " halvings of T; factors:" + f);
    }
    T *= 0.5;
  }
}

// ---- presets ------------------------------------------------------------------------------

/// F(u) = Xi - u^3 at level gamma_bar.
inline Nonlinearity phi4_nonlinearity(double gamma_bar) {
  return [gamma_bar](const ModelledDistribution& u) {
    auto xi = symbol_lift(u.model(), "Xi", gamma_bar, u.first_row(), u.last_row());
    return combine(1.0, xi, -1.0, compose_smooth(power_function(3), u, gamma_bar));
  };
}

/// F(u) = lambda u + forcing, forcing at level gamma_bar on the rows of u.
inline Nonlinearity linear_nonlinearity(double lambda, ModelledDistribution forcing) {
  return [lambda, forcing](const ModelledDistribution& u) {
    return combine(lambda, u, 1.0, restrict_rows(forcing, u.first_row(), u.last_row()));
  };
}

struct Phi4Config {
  double eps = 1.0 / 32.0;
  std::uint64_t seed = 7;
  double T = 0.5;
  double kappa = 0.01;
  double gamma = 1.5, gamma_bar = 1.1, eta = 0.0;
  double amplitude = 1.0;  // noise scale; 0 gives the deterministic equation
  int coupling_level = -1;  // finest dyadic level the noise is aggregated from (-1: this grid)
  std::function<double(double)> u0 = [](double x) { return std::sin(2.0 * M_PI * x); };
  PicardOptions picard;
};

struct Phi4Result {
  DiscreteModel model;
  ModelledDistribution u;
  GridFunction Ru;
  SolveReport report;
};

inline DiscreteModel phi4_model(const Phi4Config& c) {
  Grid g(c.eps, 0.0, c.T);
  auto K = std::make_shared<const KernelDecomposition>(KernelDecomposition::cached(g));
  GridFunction xi = white_noise(g, c.seed, c.coupling_level);
  xi *= c.amplitude;
  ModelOptions mo;
  mo.causal = c.picard.causal;
  return DiscreteModel::canonical(xi, K, phi4_structure(c.kappa), mo);
}

/// du = (Delta_h u - u^3) dt + xi on the torus, u(0) = u0, through the abstract fixed point.
inline Phi4Result phi4_run(const Phi4Config& c) {
  Phi4Result out;
  out.model = phi4_model(c);
  const Grid& g = out.model.grid();
  FixedPointProblem P;
  P.model = out.model;
  P.F = phi4_nonlinearity(c.gamma_bar);
  P.v = heat_lift(out.model, c.u0, c.gamma, 0, g.last_row());
  P.gamma = c.gamma;
  P.gamma_bar = c.gamma_bar;
  P.eta = c.eta;
  P.T = c.T;
  P.picard = c.picard;
  auto r = picard_solve(P);
  out.u = std::move(r.u);
  out.report = std::move(r.report);
  out.Ru = reconstruct(out.u);
  return out;
}

}  // namespace regstruct
