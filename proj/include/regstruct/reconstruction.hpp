#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "regstruct/fit.hpp"
#include "regstruct/modelled.hpp"

namespace regstruct {

class ReconstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// y -> (Pi_w f(w))(y) for one base point w.
class LocalExpansion {
 public:
  LocalExpansion(const ModelledDistribution& f, const Point& w) : Z_(&f.model()), w_(w) {
    StructureVector v = f.at(w);
    for (int i : f.sector()) {
      double c = v[std::size_t(i)];
      if (c != 0.0) terms_.push_back({Z_->realise(std::size_t(i), w), c});
    }
  }

  const Point& base() const { return w_; }

  double operator()(const Point& y) const {
    double s = 0.0;
    for (const auto& [R, c] : terms_) s += c * Z_->eval(R, w_, y);
    return s;
  }

  double pair(const TestFunction& phi) const {
    double s = 0.0;
    for (const auto& [R, c] : terms_) s += c * Z_->pair(R, w_, phi);
    return s;
  }

 private:
  const DiscreteModel* Z_;
  Point w_;
  std::vector<std::pair<Realisation, double>> terms_;
};

/// (R f)(y) = (Pi_y f(y))(y).
inline double reconstruct_at(const ModelledDistribution& f, const Point& y) { return LocalExpansion(f, y)(y); }

/// Pointwise reconstruction over the rows of f.
inline GridFunction reconstruct(const ModelledDistribution& f) {
  const Grid& g = f.grid();
  Grid out_grid(g.eps(), g.time(f.first_row()), g.time(f.last_row()), g.scaling(), g.period());
  GridFunction out(out_grid);
  const auto& Z = f.model();
  std::vector<std::pair<int, const double*>> planes;
  for (int i : f.sector()) planes.push_back({i, f.plane(i)});
  std::size_t o = 0;
  for (long m = f.first_row(); m <= f.last_row(); ++m)
    for (long j = 0; j < g.cols(); ++j, ++o) {
      double s = 0.0;
      for (auto [i, p] : planes)
        if (p[o] != 0.0) s += p[o] * Z.pi(std::size_t(i), {m, j}, {m, j});
      out(m, j) = s;
    }
  return out;
}

inline void require_support(const GridFunction& R, const ModelledDistribution& f, const TestFunction& phi) {
  const Grid& g = f.grid();
  auto st = pairing_stencil(g, phi);
  if (!f.has_row(st.rows.lo) || !f.has_row(st.rows.hi) || !R.grid().has_row(st.rows.lo) ||
      !R.grid().has_row(st.rows.hi))
    throw ReconstructionError("test function support leaves the rows of f");
}

inline TestFunction test_function_at(const Grid& g, const Profile& p, const Point& z, double delta) {
  return TestFunction{&p, g.time(z.m), g.space(z.j), delta};
}

/// iota_eps(R - Pi_z f(z))(phi) for a candidate reconstruction R.
inline double reconstruction_pairing(const ModelledDistribution& f, const GridFunction& R, const Point& z,
                                     const TestFunction& phi) {
  require_support(R, f, phi);
  return iota_pair(R, phi) - LocalExpansion(f, z).pair(phi);
}

/// u = I(Xi) + (v + h) 1 + h' X1 with v = K xi (up to a constant) and h(x) = amp sin(2 pi x); u is exact under
/// Gamma up to the Taylor remainder of h. Returns u^3 truncated at gamma.
inline ModelledDistribution phi4_test_distribution(const DiscreteModel& Z, double gamma, long r0, long r1,
                                                   double amp = 0.5) {
  const auto& S = Z.structure();
  int one = S.unit(), x1 = S.index("X1"), iI = S.index("I(Xi)");
  const Grid& g = Z.grid();
  Point y0{r0, 0};
  Realisation V = Z.realise(std::size_t(iI), y0);
  double ug = std::max(gamma, S.symbol(std::size_t(x1)).homogeneity + 0.1);
  ModelledDistribution u(Z, ug, {one, x1, iI}, r0, r1);
  double* p1 = u.plane(one);
  double* px = u.plane(x1);
  double* pi = u.plane(iI);
  std::size_t o = 0;
  for (long m = r0; m <= r1; ++m)
    for (long j = 0; j < g.cols(); ++j, ++o) {
      double x = g.space(j);
      p1[o] = Z.eval(V, y0, {m, j}) + amp * std::sin(2.0 * M_PI * x);
      px[o] = 2.0 * M_PI * amp * std::cos(2.0 * M_PI * x);
      pi[o] = 1.0;
    }
  return compose_smooth(power_function(3), u, gamma);
}

// ---- the three-sum decomposition ---------------------------------------------------

struct PairingDecomposition {
  double direct = 0.0;
  double I = 0.0, II = 0.0, III = 0.0;
  int n0 = 0, N = 0;
  double sum() const { return I + II + III; }
  double discrepancy() const { return std::abs(sum() - direct); }
};

namespace detail {

/// Nodes of Lambda_k whose Psi covers y, with weights; at most two per axis.
struct LevelNodes {
  long a[2], b[2];
  double wa[2], wb[2];
  int na = 0, nb = 0;
};

inline LevelNodes level_nodes(int k, double t, double x, const Scaling& s) {
  LevelNodes L;
  double ut = std::ldexp(t, k * s.t), ux = std::ldexp(x, k * s.x);
  long a = long(std::floor(ut)), b = long(std::floor(ux));
  for (long q = a; q <= a + 1; ++q) {
    double w = psi(ut - double(q));
    if (w != 0.0) L.a[L.na] = q, L.wa[L.na++] = w;
  }
  for (long q = b; q <= b + 1; ++q) {
    double w = psi(ux - double(q));
    if (w != 0.0) L.b[L.nb] = q, L.wb[L.nb++] = w;
  }
  return L;
}

/// Lexicographically smallest lattice point of the support box within d_s < 2^{-k} of node (a, b).
inline Point node_anchor(const Grid& g, int k, long a, long b, const IndexRange& rows, const IndexRange& cols) {
  const Scaling& s = g.scaling();
  double ht = std::ldexp(1.0, -k * s.t), hx = std::ldexp(1.0, -k * s.x);
  double tk = double(a) * ht, xk = double(b) * hx;
  long m = std::max(rows.lo, long(std::floor((tk - ht) / g.dt())) + 1);
  long j = std::max(cols.lo, long(std::floor((xk - hx) / g.dx())) + 1);
  if (m > rows.hi || j > cols.hi) throw ReconstructionError("partition node without a support point");
  return {m, j};
}

class ExpansionCache {
 public:
  ExpansionCache(const ModelledDistribution& f, int k, const IndexRange& rows, const IndexRange& cols)
      : f_(&f), k_(k), rows_(rows), cols_(cols) {}

  const LocalExpansion& at(long a, long b) {
    auto key = std::make_pair(a, b);
    auto it = cache_.find(key);
    if (it == cache_.end())
      it = cache_.emplace(key, LocalExpansion(*f_, node_anchor(f_->grid(), k_, a, b, rows_, cols_))).first;
    return it->second;
  }

 private:
  const ModelledDistribution* f_;
  int k_;
  IndexRange rows_, cols_;
  std::map<std::pair<long, long>, LocalExpansion> cache_;
};

}  // namespace detail

/// The pairing iota_eps(R f - Pi_z f(z))(eta^delta_z) written as the three telescoping sums over the dyadic
/// partitions Psi_[z_k], k = n0..N, with anchors z_|k chosen lexicographically in the support.
inline PairingDecomposition decompose_pairing(const ModelledDistribution& f, const GridFunction& R, const Point& z,
                                              const TestFunction& phi) {
  require_support(R, f, phi);
  const Grid& g = f.grid();
  const Scaling& s = g.scaling();
  PairingDecomposition D;
  D.direct = reconstruction_pairing(f, R, z, phi);
  D.n0 = int(std::ceil(-std::log2(phi.lambda) - 1e-12));
  D.N = int(std::ceil(-std::log2(g.eps()) - 1e-12));
  if (D.N <= D.n0) throw ReconstructionError("decomposition needs delta > eps");
  auto st = pairing_stencil(g, phi);
  LocalExpansion base(f, z);

  struct Site {
    Point y;
    double w, t, x;
  };
  std::vector<Site> sites;
  for (long m = st.rows.lo; m <= st.rows.hi; ++m) {
    double am = st.a[std::size_t(m - st.rows.lo)];
    if (am == 0.0) continue;
    for (long j = st.cols.lo; j <= st.cols.hi; ++j) {
      double w = st.scale * am * st.c[std::size_t(j - st.cols.lo)];
      if (w != 0.0) sites.push_back({{m, j}, w, g.time(m), g.space(j)});
    }
  }

  auto level_sum = [&](int k, auto&& term) {
    detail::ExpansionCache cache(f, k, st.rows, st.cols);
    double acc = 0.0;
    for (const auto& y : sites) {
      auto L = detail::level_nodes(k, y.t, y.x, s);
      double v = 0.0;
      for (int p = 0; p < L.na; ++p)
        for (int q = 0; q < L.nb; ++q) v += L.wa[p] * L.wb[q] * term(cache.at(L.a[p], L.b[q]), y.y);
      acc += y.w * v;
    }
    return acc;
  };

  D.I = level_sum(D.N, [&](const LocalExpansion& A, const Point& y) { return R(y.m, y.j) - A(y); });
  D.III = level_sum(D.n0, [&](const LocalExpansion& A, const Point& y) { return A(y) - base(y); });
  for (int k = D.n0; k < D.N; ++k) {
    detail::ExpansionCache ck(f, k, st.rows, st.cols), ck1(f, k + 1, st.rows, st.cols);
    double acc = 0.0;
    for (const auto& y : sites) {
      auto L = detail::level_nodes(k, y.t, y.x, s), L1 = detail::level_nodes(k + 1, y.t, y.x, s);
      // sum over pairs factorises: (sum_k1 Psi A_k1)(sum_k Psi) - (sum_k Psi A_k)(sum_k1 Psi)
      double sk = 0.0, sak = 0.0, sk1 = 0.0, sak1 = 0.0;
      for (int p = 0; p < L.na; ++p)
        for (int q = 0; q < L.nb; ++q) {
          double w = L.wa[p] * L.wb[q];
          sk += w;
          sak += w * ck.at(L.a[p], L.b[q])(y.y);
        }
      for (int p = 0; p < L1.na; ++p)
        for (int q = 0; q < L1.nb; ++q) {
          double w = L1.wa[p] * L1.wb[q];
          sk1 += w;
          sak1 += w * ck1.at(L1.a[p], L1.b[q])(y.y);
        }
      acc += y.w * (sak1 * sk - sak * sk1);
    }
    D.II += acc;
  }
  return D;
}

// ---- the local assumption ----------------------------------------------------------

struct LocalBound {
  double lhs = 0.0;       // ||R f - Pi_z f(z)||_{gamma; K; z; eps}
  double f_small = 0.0;   // small-scale D^gamma seminorm over the lattice points of K and z
  double pi_small = 0.0;  // sup eps^{-|tau|} |Pi_w tau (y)| over the same points
  double ratio = 0.0;
};

/// eps^{-gamma} sup_{y in K} |R(y) - (Pi_z f(z))(y)|.
inline double local_difference(const ModelledDistribution& f, const GridFunction& R, const Point& z, const Box& K) {
  const Grid& g = f.grid();
  if (K.diameter(g.scaling()) > 2.0 * g.eps() * (1.0 + 1e-12)) throw ReconstructionError("box diameter above 2 eps");
  LocalExpansion A(f, z);
  double m = 0.0;
  for (const auto& y : box_points(g, {K.t0, K.t1, K.x0, K.x1 + 0.5 * g.dx()}))
    m = std::max(m, std::abs(R(y.m, y.j) - A(y)));
  return std::pow(g.eps(), -f.gamma()) * m;
}

/// Ratio of the two sides of the local reconstruction assumption on a box of diameter at most 2 eps. The
/// small-scale seminorm runs over all pairs of lattice points of K and z (the closed ball, since the open
/// eps-ball holds no neighbour on this lattice).
inline LocalBound local_bound_check(const ModelledDistribution& f, const GridFunction& R, const Point& z, const Box& K) {
  const Grid& g = f.grid();
  const auto& S = f.structure();
  const auto& Z = f.model();
  double eps = g.eps(), gamma = f.gamma();
  LocalBound b;
  b.lhs = local_difference(f, R, z, K);
  auto pts = box_points(g, {K.t0, K.t1, K.x0, K.x1 + 0.5 * g.dx()});
  bool has_z = false;
  for (const auto& p : pts) has_z |= p == z;
  if (!has_z) pts.push_back(z);
  for (const auto& w : pts) {
    for (int i : f.sector()) {
      Realisation Ri = Z.realise(std::size_t(i), w);
      double h = S.symbol(std::size_t(i)).homogeneity;
      for (const auto& y : pts) b.pi_small = std::max(b.pi_small, std::pow(eps, -h) * std::abs(Z.eval(Ri, w, y)));
    }
    for (const auto& y : pts) {
      if (y == w) continue;
      StructureVector v = f.at(w) - f.transported(w, y);
      b.f_small = std::max(b.f_small, level_ratio(S, v, gamma, [&](double be) { return std::pow(eps, gamma - be); }));
    }
  }
  double rhs = b.pi_small * b.f_small;
  if (b.lhs == 0.0) b.ratio = 0.0;
  else b.ratio = rhs > 0.0 ? b.lhs / rhs : std::numeric_limits<double>::infinity();
  return b;
}

// ---- scaling tests -----------------------------------------------------------------

struct ReconstructionOptions {
  SamplingPlan plan{{0.0, 0.25, 0.0, 1.0}, 1.0 / 16.0, 1.0 / 4.0, 4, 1.0, 7};
  double floor = 1e-12;             // exactness plateau
  double crosscheck_ratio = 32.0;   // decomposition cross-check for delta <= ratio * eps
  int crosscheck_points = 1;        // base points per scale used for the cross-check
};

struct ReconstructionReport {
  std::vector<double> delta_grid;
  std::vector<double> max_pairing;
  ExponentFit fit;
  double fitted_exponent = std::numeric_limits<double>::quiet_NaN();
  double constant = std::numeric_limits<double>::quiet_NaN();
  bool skipped = false;           // every pairing below the floor
  double crosscheck = 0.0;        // max |I + II + III - direct|
  std::size_t crosschecked = 0;
};

inline std::vector<double> dyadic_range(double eps, double dmin, double dmax) {
  std::vector<double> out;
  for (double d : dyadic_scales(eps, dmax))
    if (d >= dmin * (1.0 - 1e-12)) out.push_back(d);
  return out;
}

/// sup over base points and profiles of |iota(R f - Pi_z f(z))(eta^delta_z)| at dyadic delta in
/// [delta_min, delta_max] above eps, with a log-log fit.
inline ReconstructionReport reconstruction_scaling_test(const ModelledDistribution& f, const GridFunction& R,
                                                        double delta_min, double delta_max,
                                                        const ReconstructionOptions& opt = {}) {
  const Grid& g = f.grid();
  ReconstructionReport rep;
  rep.delta_grid = dyadic_range(g.eps(), delta_min, delta_max);
  if (rep.delta_grid.size() < 3) throw ReconstructionError("fewer than 3 dyadic scales in range");
  auto pts = base_points(g, opt.plan);
  if (pts.empty()) throw ReconstructionError("no base points in the sampling box");
  auto dict = testfn_dictionary(2, opt.plan.profiles);
  for (double delta : rep.delta_grid) {
    std::vector<double> psup(pts.size(), 0.0);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t q = 0; q < pts.size(); ++q)
      for (const auto& p : dict)
        psup[q] = std::max(psup[q], std::abs(reconstruction_pairing(f, R, pts[q], test_function_at(g, p, pts[q], delta))));
    rep.max_pairing.push_back(*std::max_element(psup.begin(), psup.end()));
    if (delta <= opt.crosscheck_ratio * g.eps() * (1.0 + 1e-12))
      for (int q = 0; q < std::min<int>(opt.crosscheck_points, int(pts.size())); ++q) {
        auto D = decompose_pairing(f, R, pts[std::size_t(q)], test_function_at(g, dict[0], pts[std::size_t(q)], delta));
        rep.crosscheck = std::max(rep.crosscheck, D.discrepancy());
        ++rep.crosschecked;
      }
  }
  int usable = 0;
  for (double v : rep.max_pairing) usable += v > opt.floor;
  if (usable < 3) {
    rep.skipped = true;
    return rep;
  }
  rep.fit = fit_exponent(rep.delta_grid, rep.max_pairing, opt.floor);
  rep.fitted_exponent = rep.fit.slope;
  rep.constant = rep.fit.constant();
  return rep;
}

inline ReconstructionReport reconstruction_scaling_test(const ModelledDistribution& f, double delta_min, double delta_max,
                                                        const ReconstructionOptions& opt = {}) {
  return reconstruction_scaling_test(f, reconstruct(f), delta_min, delta_max, opt);
}

// ---- weighted reconstruction ---------------------------------------------------------

struct WeightedReconstructionOptions {
  double band_lo = 0.25, band_hi = 0.5;   // d_s(z, P) band for the away class
  double away_delta_max = 0.1;
  double across_delta_max = 0.5;
  double step_x = 1.0 / 4.0;
  int band_rows = 3;                       // base times sampled in the band
  int profiles = 4;
  double c = 1.0;                          // support constraint d_s(z, P) >= c eps + 2 delta
  double away_tol = 0.2, across_tol = 0.15;
  double floor = 1e-12;
};

struct WeightedReconstructionReport {
  std::vector<double> away_deltas, away_sup;
  std::vector<double> across_deltas, across_sup;
  ExponentFit away_fit, across_fit;
  double away_exponent = std::numeric_limits<double>::quiet_NaN();
  double across_exponent = std::numeric_limits<double>::quiet_NaN();
  double alpha_eta = 0.0;
  bool away_flag = false, across_flag = false;
  bool ok() const { return !away_flag && !across_flag; }
};

/// Away from P: sup |iota(R f - Pi_z f(z))(eta^delta_z)| over a d_s(z, P) band; across P: sup |iota(R f)(eta^delta_z)|
/// over base points on P.
inline WeightedReconstructionReport weighted_reconstruction_test(const ModelledDistribution& f, const GridFunction& R,
                                                                 const WeightSpec& w,
                                                                 const WeightedReconstructionOptions& opt = {}) {
  const Grid& g = f.grid();
  double alpha = f.regularity();
  WeightedReconstructionReport rep;
  rep.alpha_eta = std::min(alpha, w.eta);
  if (rep.alpha_eta <= -g.scaling().t) throw ReconstructionError("weighted reconstruction needs alpha ^ eta > -codim");
  auto dict = testfn_dictionary(2, opt.profiles);
  std::vector<long> cols;
  for (double x = 0.0; x < 1.0 - 1e-12; x += opt.step_x) cols.push_back(std::lround(x / g.dx()));

  std::vector<Point> band;
  for (int q = 0; q < opt.band_rows; ++q) {
    double d = opt.band_lo + (opt.band_hi - opt.band_lo) * q / std::max(1, opt.band_rows - 1);
    long m = std::lround(std::pow(d, g.scaling().t) / g.dt());
    for (long j : cols) band.push_back({m, j});
  }
  for (double delta : dyadic_scales(g.eps(), opt.away_delta_max)) {
    double sup = 0.0;
    bool any = false;
    for (const auto& z : band) {
      double dz = std::pow(std::abs(g.time(z.m)), 1.0 / g.scaling().t);
      if (dz < opt.c * g.eps() + 2.0 * delta) continue;
      any = true;
      for (const auto& p : dict) sup = std::max(sup, std::abs(reconstruction_pairing(f, R, z, test_function_at(g, p, z, delta))));
    }
    if (!any) continue;
    rep.away_deltas.push_back(delta);
    rep.away_sup.push_back(sup);
  }
  if (rep.away_deltas.empty()) throw ReconstructionError("away class empty after the support constraint");
  for (double delta : dyadic_scales(g.eps(), opt.across_delta_max)) {
    double sup = 0.0;
    for (long j : cols) {
      Point z{0, j};
      for (const auto& p : dict) {
        auto phi = test_function_at(g, p, z, delta);
        require_support(R, f, phi);
        sup = std::max(sup, std::abs(iota_pair(R, phi)));
      }
    }
    rep.across_deltas.push_back(delta);
    rep.across_sup.push_back(sup);
  }
  auto fit = [&](const std::vector<double>& d, const std::vector<double>& v, ExponentFit& F, double& e) {
    int usable = 0;
    for (double x : v) usable += x > opt.floor;
    if (usable < 3) return false;
    F = fit_exponent(d, v, opt.floor);
    e = F.slope;
    return true;
  };
  if (fit(rep.away_deltas, rep.away_sup, rep.away_fit, rep.away_exponent))
    rep.away_flag = rep.away_exponent < f.gamma() - opt.away_tol;
  if (fit(rep.across_deltas, rep.across_sup, rep.across_fit, rep.across_exponent))
    rep.across_flag = rep.across_exponent < rep.alpha_eta - opt.across_tol;
  return rep;
}

}  // namespace regstruct
