#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "regstruct/fit.hpp"
#include "regstruct/reconstruction.hpp"

namespace regstruct {

class ConvolutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConvolutionOptions {
  double level = std::numeric_limits<double>::quiet_NaN();  // output level; default gamma + beta
  bool causal = false;  // row-by-row sums: later rows of f never touch earlier outputs, even in roundoff
};

/// (1/k!) (D^k K F) on the grid of F for each k.
inline std::vector<GridFunction> kernel_jets(const KernelDecomposition& D, const GridFunction& F,
                                             const std::vector<MultiIndex>& ks, bool causal = false) {
  if (F.grid().cols() != D.grid().cols() || std::abs(F.grid().eps() - D.grid().eps()) > 1e-15)
    throw ConvolutionError("field and kernel live on different lattices");
  ConvolutionEngine E(F.grid(), D.total().L + 2);
  auto mode = causal ? ConvolutionEngine::Mode::direct : ConvolutionEngine::Mode::fft;
  std::vector<GridFunction> out;
  for (const auto& k : ks) {
    GridFunction J = E.convolve(k.is_zero() ? D.total() : D.derivative(k), F, mode);
    J *= 1.0 / factorial(k);
    out.push_back(std::move(J));
  }
  return out;
}

namespace detail {

inline bool near_integer(double v) { return std::abs(v - std::round(v)) < 1e-9; }

}  // namespace detail

/// K_gamma f(z) = I f(z) + sum_zeta (T_zeta Pi_z Q_zeta f(z))(z) + (T_gamma(R f - Pi_z f(z)))(z), evaluated as
/// I f(z) + jet of K R f at z minus, for each zeta, the jets of K Pi_z Q_zeta f(z) of order in [zeta+beta, gamma+beta).
/// f is taken to vanish outside its rows; R f is supplied or computed pointwise.
inline ModelledDistribution convolve_Kgamma(const ModelledDistribution& f, const GridFunction& Rf,
                                            const ConvolutionOptions& opt = {}) {
  const DiscreteModel& Z = f.model();
  const KernelDecomposition* D = Z.kernel();
  if (!D) throw ConvolutionError("model does not realise a kernel");
  const auto& S = f.structure();
  const Scaling& s = S.scaling();
  double beta = D->options().beta;
  double top = f.gamma() + beta;
  if (detail::near_integer(top)) throw ConvolutionError("gamma + beta is an integer");
  double level = std::isnan(opt.level) ? top : opt.level;
  if (level > top + 1e-12) throw ConvolutionError("output level above gamma + beta");
  if (detail::near_integer(level)) throw ConvolutionError("output level is an integer");
  if (Rf.grid().rows() != f.last_row() - f.first_row() + 1 || Rf.grid().cols() != f.grid().cols())
    throw ConvolutionError("reconstruction does not cover the rows of f");

  std::vector<int> sec;
  std::vector<std::pair<int, int>> lifted;  // (sigma, I(sigma))
  for (int i : f.sector()) {
    const Symbol& sym = S.symbol(std::size_t(i));
    if (sym.mono.factors.empty() && sym.mono.e == 0) continue;
    if (sym.homogeneity + beta >= level - RegularityStructure::tol) continue;
    int ii = S.integrated(std::size_t(i));
    if (ii < 0) throw ConvolutionError("model does not realise I(" + sym.id + ")");
    lifted.push_back({i, ii});
    sec.push_back(ii);
  }
  auto ks = multi_indices_below(level, s);
  std::vector<int> kidx;
  for (const auto& k : ks) {
    int p = S.polynomial(k);
    if (p < 0) throw ConvolutionError("structure lacks X^(" + std::to_string(k.t) + "," + std::to_string(k.x) + ")");
    kidx.push_back(p);
    sec.push_back(p);
  }
  // per sector symbol of f: multi-indices whose jets T_zeta leaves out
  std::vector<std::pair<int, std::vector<std::size_t>>> high;
  for (int i : f.sector()) {
    double zeta = S.symbol(std::size_t(i)).homogeneity;
    std::vector<std::size_t> q;
    for (std::size_t a = 0; a < ks.size(); ++a)
      if (ks[a].degree(s) >= zeta + beta - RegularityStructure::tol) q.push_back(a);
    if (!q.empty()) high.push_back({i, std::move(q)});
  }

  auto J = kernel_jets(*D, Rf, ks, opt.causal);
  ModelledDistribution out(Z, level, sec, f.first_row(), f.last_row());
  const long M = f.grid().cols();
  std::size_t o = 0;
  for (long m = f.first_row(); m <= f.last_row(); ++m)
    for (long j = 0; j < M; ++j, ++o) {
      Point z{m, j};
      for (auto [i, ii] : lifted) out.plane(ii)[o] = f.plane(i)[o];
      std::vector<double> c(ks.size());
      for (std::size_t a = 0; a < ks.size(); ++a) c[a] = J[a].values()[o];
      for (const auto& [i, q] : high) {
        double fz = f.plane(i)[o];
        if (fz == 0.0) continue;
        std::vector<MultiIndex> sub;
        for (std::size_t a : q) sub.push_back(ks[a]);
        auto Q = Z.jet(std::size_t(i), z, sub);
        for (std::size_t b = 0; b < q.size(); ++b) c[q[b]] -= fz * Q[b];
      }
      for (std::size_t a = 0; a < ks.size(); ++a) out.plane(kidx[a])[o] = c[a];
    }
  return out;
}

inline ModelledDistribution convolve_Kgamma(const ModelledDistribution& f, const ConvolutionOptions& opt = {}) {
  return convolve_Kgamma(f, reconstruct(f), opt);
}

// ---- commutation -----------------------------------------------------------------

/// Max coefficient difference of Gamma_zy(I a + (T_zeta Pi_y a)(y)) and I Gamma_zy a + sum (T Pi_z Q Gamma_zy a)(z).
inline double commutation_check(const DiscreteModel& Z, int a, const Point& y, const Point& z) {
  const auto& S = Z.structure();
  const KernelDecomposition* D = Z.kernel();
  if (!D) throw ConvolutionError("model does not realise a kernel");
  const Scaling& s = S.scaling();
  double beta = D->options().beta;
  auto jet_of = [&](int sigma, const Point& w, StructureVector& v, double c) {
    const Symbol& sym = S.symbol(std::size_t(sigma));
    bool poly = sym.mono.factors.empty() && sym.mono.e == 0;
    if (!poly) {
      int ii = S.integrated(std::size_t(sigma));
      if (ii < 0) throw ConvolutionError("model does not realise I(" + sym.id + ")");
      v[std::size_t(ii)] += c;
    }
    auto ks = multi_indices_below(sym.homogeneity + beta, s);
    auto Q = Z.jet(std::size_t(sigma), w, ks);
    for (std::size_t q = 0; q < ks.size(); ++q) {
      if (Q[q] == 0.0) continue;
      int p = S.polynomial(ks[q]);
      if (p < 0) throw ConvolutionError("structure lacks the polynomial jets of I(" + sym.id + ")");
      v[std::size_t(p)] += c * Q[q];
    }
  };
  GroupElement G = Z.gamma(z, y);
  StructureVector lhs_in = S.zero();
  jet_of(a, y, lhs_in, 1.0);
  StructureVector lhs = S.apply(G, lhs_in);
  StructureVector rhs = S.zero();
  for (std::size_t sg = 0; sg < S.size(); ++sg) {
    double c = G(sg, std::size_t(a));
    if (c != 0.0) jet_of(int(sg), z, rhs, c);
  }
  double r = 0.0;
  for (std::size_t i = 0; i < S.size(); ++i) r = std::max(r, std::abs(lhs[i] - rhs[i]));
  return r;
}

// ---- increment exponents ------------------------------------------------------------

struct IncrementOptions {
  PairPlan plan{{0.0, 0.25, 0.0, 1.0}, 20000, 1};
  double dmin = 0.0;  // default 2 eps
  double dmax = 0.125;
  double floor = 1e-12;
};

struct LevelFit {
  double level = 0.0;
  std::vector<double> scales, sups;
  bool fitted = false;
  double slope = 0.0;
  double exponent() const { return level + slope; }
};

struct IncrementReport {
  std::vector<LevelFit> levels;
  /// min over fitted levels of level + slope; +inf when every increment vanishes
  double exponent = std::numeric_limits<double>::infinity();
};

/// Fits sup |f(z) - Gamma_zy f(y)|_l against ||z - y||_s over dyadic shells, per level l of f's sector.
inline IncrementReport increment_exponent(const ModelledDistribution& f, const IncrementOptions& opt = {}) {
  const Grid& g = f.grid();
  const auto& S = f.structure();
  double dmin = opt.dmin > 0.0 ? opt.dmin : 2.0 * g.eps();
  std::vector<double> shells;
  for (double r = opt.dmax; r >= dmin * (1.0 - 1e-12); r *= 0.5) shells.push_back(r);
  std::vector<double> levels;
  for (int i : f.sector()) levels.push_back(S.symbol(std::size_t(i)).homogeneity);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end(),
                           [](double a, double b) { return std::abs(a - b) < RegularityStructure::tol; }),
               levels.end());
  std::vector<std::vector<double>> sup(levels.size(), std::vector<double>(shells.size(), 0.0));
  require_rows(f, opt.plan.box);
  for (const auto& [z, y] : sample_pairs(g, opt.plan, 0.5 * shells.back(), shells.front(), true)) {
    double d = g.distance(z, y);
    std::size_t sh = 0;
    while (sh + 1 < shells.size() && d <= shells[sh + 1] * (1.0 + 1e-12)) ++sh;
    StructureVector v = f.at(z), w = f.transported(z, y);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= w[i];
    for (std::size_t l = 0; l < levels.size(); ++l) sup[l][sh] = std::max(sup[l][sh], S.norm(v, levels[l]));
  }
  IncrementReport rep;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    LevelFit L;
    L.level = levels[l];
    L.scales = shells;
    L.sups = sup[l];
    try {
      L.slope = fit_exponent(shells, sup[l], opt.floor).slope;
      L.fitted = true;
      rep.exponent = std::min(rep.exponent, L.exponent());
    } catch (const FitError&) {
    }
    rep.levels.push_back(std::move(L));
  }
  return rep;
}

// ---- Schauder verification ------------------------------------------------------------

struct SchauderOptions {
  ConvolutionOptions conv;
  PairPlan plan{{0.0, 0.25, 0.0, 1.0}, 20000, 1};  // seminorm sampling
  IncrementOptions increments;
  double identity_tol = 1e-9;
  double gain_tol = 0.3;
};

struct SchauderReport {
  double level = 0.0;
  double seminorm = 0.0;
  double identity_residual = 0.0;  // max |R K_gamma f - K R f| over the rows of f
  bool a_vanishes = true;          // (Pi_z X^k)(z) = 0, so the correction A vanishes
  IncrementReport input, output;
  double gain = 0.0;
  bool identity_ok = false, gain_ok = false;
};

/// Schauder estimate diagnostics for K_gamma f. K R f is summed causally row by row, a route
/// independent of the FFT jets inside convolve_Kgamma.
inline SchauderReport verify_schauder(const ModelledDistribution& f, const SchauderOptions& opt = {}) {
  SchauderReport rep;
  const KernelDecomposition* D = f.model().kernel();
  if (!D) throw ConvolutionError("model does not realise a kernel");
  GridFunction Rf = reconstruct(f);
  ModelledDistribution Kf = convolve_Kgamma(f, Rf, opt.conv);
  rep.level = Kf.gamma();
  rep.a_vanishes = f.model().zero_at_base();
  rep.seminorm = dgamma_seminorm(Kf, Kf.gamma(), opt.plan);
  ConvolutionEngine E(Rf.grid(), D->total().L + 2);
  GridFunction KRf = E.direct(D->total(), Rf);
  GridFunction RKf = reconstruct(Kf);
  for (std::size_t i = 0; i < KRf.size(); ++i)
    rep.identity_residual = std::max(rep.identity_residual, std::abs(RKf.values()[i] - KRf.values()[i]));
  rep.identity_ok = rep.identity_residual <= opt.identity_tol;
  rep.input = increment_exponent(f, opt.increments);
  rep.output = increment_exponent(Kf, opt.increments);
  rep.gain = rep.output.exponent - rep.input.exponent;
  double beta = D->options().beta;
  rep.gain_ok = std::isfinite(rep.gain) ? rep.gain >= beta - opt.gain_tol : std::isinf(rep.output.exponent);
  return rep;
}

// ---- weighted Schauder ---------------------------------------------------------------------

struct WeightedSchauderOptions {
  ConvolutionOptions conv;
  std::vector<double> horizons{0.125, 0.25, 0.5};
  double kappa = 0.05;
  double step_tol = 0.1;
  double x0 = 0.0, x1 = 1.0;
  std::size_t max_pairs = 20000;
  std::uint64_t seed = 1;
};

struct WeightedSchauderReport {
  double level = 0.0, eta = 0.0;  // (gamma + beta, (alpha ^ eta) + beta)
  double seminorm = 0.0;          // at (level, eta) over the largest horizon
  std::vector<double> horizons, sweep;  // seminorm at (level, eta - kappa) over O_T
  double slope = 0.0;
  bool slope_positive = false, slope_ok = false;
};

/// Weighted bounds for K_gamma f on O_T = (0, T] x torus and the small-time gain T^(kappa/s_t).
inline WeightedSchauderReport weighted_schauder_test(const ModelledDistribution& f, const WeightSpec& w,
                                                     const WeightedSchauderOptions& opt = {}) {
  const KernelDecomposition* D = f.model().kernel();
  if (!D) throw ConvolutionError("model does not realise a kernel");
  if (!D->non_anticipative()) throw ConvolutionError("weighted Schauder bounds need a non-anticipative kernel");
  if (opt.horizons.size() < 3) throw ConvolutionError("time-horizon sweep needs at least 3 horizons");
  const auto& S = f.structure();
  double beta = D->options().beta, st = S.scaling().t;
  double alpha = std::min(f.regularity(), w.eta);
  if (alpha <= -st + 1e-12) throw ConvolutionError("alpha ^ eta must exceed -s_t");
  ModelledDistribution Kf = convolve_Kgamma(f, opt.conv);
  WeightedSchauderReport rep;
  rep.level = Kf.gamma();
  rep.eta = std::min(alpha + beta, rep.level);
  WeightSpec wo{rep.eta, w.codim}, wk{rep.eta - opt.kappa, w.codim};
  auto plan_for = [&](double T) { return PairPlan{{0.0, T, opt.x0, opt.x1}, opt.max_pairs, opt.seed}; };
  double Tmax = *std::max_element(opt.horizons.begin(), opt.horizons.end());
  rep.seminorm = weighted_seminorm(Kf, rep.level, wo, plan_for(Tmax));
  // one nested sample on O_Tmax; each horizon keeps the terms whose points all lie in O_T
  rep.horizons = opt.horizons;
  std::vector<std::array<double, 3>> parts(opt.horizons.size(), {0.0, 0.0, 0.0});
  weighted_terms(Kf, nullptr, rep.level, wk, plan_for(Tmax), [&](WeightedPart part, double v, double t) {
    for (std::size_t h = 0; h < opt.horizons.size(); ++h)
      if (t <= opt.horizons[h] + 1e-12) {
        double& slot = parts[h][std::size_t(part)];
        slot = std::max(slot, v);
      }
  });
  for (const auto& p : parts) rep.sweep.push_back(p[0] + p[1] + p[2]);
  try {
    rep.slope = fit_exponent(rep.horizons, rep.sweep, 0.0).slope;
  } catch (const FitError&) {
    rep.slope = 0.0;
  }
  rep.slope_positive = rep.slope > 0.0;
  rep.slope_ok = rep.slope >= opt.kappa / st - opt.step_tol;
  return rep;
}

}  // namespace regstruct
