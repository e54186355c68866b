#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "multi_index.hpp"

namespace regstruct {

class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lattice point in integer coordinates: time row m (t = m dt), space column j (x = j dx).
/// j is not reduced modulo the period; fields are read at j mod M.
struct Point {
  long m = 0;
  long j = 0;
  bool operator==(const Point&) const = default;
};

inline long wrap(long j, long M) {
  long r = j % M;
  return r < 0 ? r + M : r;
}

/// Parabolic size max(|t|^{1/s_t}, |x|^{1/s_x}).
inline double parabolic_norm(double t, double x, const Scaling& s = {}) {
  return std::max(std::pow(std::abs(t), 1.0 / s.t), std::pow(std::abs(x), 1.0 / s.x));
}

/// Periodic space-time lattice with spacings (eps^{s_t}, eps^{s_x}) on [t0, t1] x (R / period).
class Grid {
 public:
  static constexpr long max_space = 1L << 10;
  static constexpr long max_time = 1L << 17;
  static constexpr long max_total = 1L << 25;

  Grid() = default;
  Grid(double eps, double t0, double t1, Scaling s = {}, double period = 1.0)
      : eps_(eps), s_(s), period_(period) {
    if (!(eps > 0.0 && eps <= 1.0)) throw GridError("eps must lie in (0,1]");
    if (!(t1 > t0)) throw GridError("empty time window");
    dt_ = std::pow(eps, s.t);
    dx_ = std::pow(eps, s.x);
    double cols = period / dx_;
    M_ = std::lround(cols);
    if (std::abs(cols - double(M_)) > 1e-9 * cols) throw GridError("period must be a multiple of eps^{s_x}");
    m0_ = long(std::ceil(t0 / dt_ - 1e-9));
    m1_ = long(std::floor(t1 / dt_ + 1e-9));
    if (m1_ < m0_) throw GridError("time window holds no lattice row");
    if (M_ > max_space) throw GridError("grid exceeds 2^10 spatial points");
    if (rows() > max_time) throw GridError("grid exceeds 2^17 time rows");
    if (rows() * M_ > max_total) throw GridError("grid exceeds 2^25 points");
  }

  double eps() const { return eps_; }
  const Scaling& scaling() const { return s_; }
  double period() const { return period_; }
  double dt() const { return dt_; }
  double dx() const { return dx_; }
  double cell() const { return dt_ * dx_; }
  long cols() const { return M_; }
  long rows() const { return m1_ - m0_ + 1; }
  long first_row() const { return m0_; }
  long last_row() const { return m1_; }
  std::size_t size() const { return std::size_t(rows() * M_); }
  double t0() const { return m0_ * dt_; }
  double t1() const { return m1_ * dt_; }

  double time(long m) const { return m * dt_; }
  double space(long j) const { return j * dx_; }
  bool has_row(long m) const { return m >= m0_ && m <= m1_; }

  std::size_t index(long m, long j) const { return std::size_t((m - m0_) * M_ + wrap(j, M_)); }
  Point point(std::size_t idx) const { return {m0_ + long(idx) / M_, long(idx) % M_}; }

  /// Nearest lattice point to (t, x), not wrapped.
  Point nearest(double t, double x) const { return {std::lround(t / dt_), std::lround(x / dx_)}; }

  double distance(const Point& a, const Point& b) const {
    return parabolic_norm((a.m - b.m) * dt_, (a.j - b.j) * dx_, s_);
  }

  bool same_layout(const Grid& o) const {
    return eps_ == o.eps_ && s_ == o.s_ && period_ == o.period_ && m0_ == o.m0_ && m1_ == o.m1_;
  }

 private:
  double eps_ = 1.0;
  Scaling s_;
  double period_ = 1.0;
  double dt_ = 1.0, dx_ = 1.0;
  long M_ = 1, m0_ = 0, m1_ = 0;
};

/// Element of X_eps: one real per lattice point of the window.
class GridFunction {
 public:
  GridFunction() = default;
  explicit GridFunction(const Grid& g, double value = 0.0) : g_(g), v_(g.size(), value) {}

  template <class F>
  static GridFunction from(const Grid& g, F&& f) {
    GridFunction out(g);
    for (long m = g.first_row(); m <= g.last_row(); ++m)
      for (long j = 0; j < g.cols(); ++j) out.v_[g.index(m, j)] = f(g.time(m), g.space(j));
    return out;
  }

  const Grid& grid() const { return g_; }
  std::size_t size() const { return v_.size(); }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }
  double* row(long m) { return v_.data() + (m - g_.first_row()) * g_.cols(); }
  const double* row(long m) const { return v_.data() + (m - g_.first_row()) * g_.cols(); }

  double& operator()(long m, long j) { return v_[g_.index(m, j)]; }
  double operator()(long m, long j) const { return v_[g_.index(m, j)]; }
  double at(const Point& p) const { return g_.has_row(p.m) ? v_[g_.index(p.m, p.j)] : 0.0; }

  GridFunction& operator+=(const GridFunction& o) {
    check(o);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
    return *this;
  }
  GridFunction& operator-=(const GridFunction& o) {
    check(o);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
    return *this;
  }
  GridFunction& operator*=(double a) {
    for (auto& x : v_) x *= a;
    return *this;
  }
  friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
  friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
  friend GridFunction operator*(double a, GridFunction f) { return f *= a; }

  GridFunction& multiply(const GridFunction& o) {
    check(o);
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] *= o.v_[i];
    return *this;
  }

  double sup() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::abs(x));
    return m;
  }

 private:
  void check(const GridFunction& o) const {
    if (!g_.same_layout(o.g_)) throw GridError("grid functions live on different grids");
  }
  Grid g_;
  std::vector<double> v_;
};

/// Closed box [t0,t1] x [x0,x1] in physical coordinates (x not wrapped).
struct Box {
  double t0 = 0, t1 = 0, x0 = 0, x1 = 0;

  double diameter(const Scaling& s = {}) const { return parabolic_norm(t1 - t0, x1 - x0, s); }
  bool contains(double t, double x) const { return t >= t0 && t <= t1 && x >= x0 && x <= x1; }

  static Box around(double t, double x, double radius, const Scaling& s = {}) {
    double rt = std::pow(radius, s.t), rx = std::pow(radius, s.x);
    return {t - rt, t + rt, x - rx, x + rx};
  }
};

struct IndexRange {
  long lo = 0, hi = -1;  // inclusive
  long count() const { return std::max(0L, hi - lo + 1); }
};

inline IndexRange row_range(const Grid& g, double t0, double t1) {
  IndexRange r{long(std::ceil(t0 / g.dt() - 1e-9)), long(std::floor(t1 / g.dt() + 1e-9))};
  r.lo = std::max(r.lo, g.first_row());
  r.hi = std::min(r.hi, g.last_row());
  return r;
}

inline IndexRange col_range(const Grid& g, double x0, double x1) {
  return {long(std::ceil(x0 / g.dx() - 1e-9)), long(std::floor(x1 / g.dx() + 1e-9))};
}

/// eps^{-alpha} sup |f| over lattice points of the box; the box may have diameter at most 2 eps.
inline double local_seminorm(const GridFunction& f, double alpha, const Box& box) {
  const Grid& g = f.grid();
  if (box.diameter(g.scaling()) > 2.0 * g.eps() * (1.0 + 1e-12))
    throw GridError("local seminorm box has diameter above 2 eps");
  auto rr = row_range(g, box.t0, box.t1);
  auto cr = col_range(g, box.x0, box.x1);
  double m = 0.0;
  for (long i = rr.lo; i <= rr.hi; ++i)
    for (long j = cr.lo; j <= cr.hi; ++j) m = std::max(m, std::abs(f(i, j)));
  return std::pow(g.eps(), -alpha) * m;
}

// ---- test functions -----------------------------------------------------------

/// Truncated Taylor series c_0 + c_1 h + ... + c_3 h^3 (c_k = f^{(k)}/k!).
struct Jet {
  static constexpr int order = 3;
  std::array<double, order + 1> c{};

  static Jet constant(double v) {
    Jet j;
    j.c[0] = v;
    return j;
  }
  static Jet variable(double v) {
    Jet j;
    j.c[0] = v;
    j.c[1] = 1.0;
    return j;
  }
  double derivative(int k) const { return c[k] * factorial(k); }

  friend Jet operator+(Jet a, const Jet& b) {
    for (int i = 0; i <= order; ++i) a.c[i] += b.c[i];
    return a;
  }
  friend Jet operator-(Jet a, const Jet& b) {
    for (int i = 0; i <= order; ++i) a.c[i] -= b.c[i];
    return a;
  }
  friend Jet operator*(double s, Jet a) {
    for (auto& x : a.c) x *= s;
    return a;
  }
  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r;
    for (int i = 0; i <= order; ++i)
      for (int k = 0; k <= i; ++k) r.c[i] += a.c[k] * b.c[i - k];
    return r;
  }
  friend Jet reciprocal(const Jet& a) {
    Jet r;
    r.c[0] = 1.0 / a.c[0];
    for (int i = 1; i <= order; ++i) {
      double s = 0.0;
      for (int k = 1; k <= i; ++k) s += a.c[k] * r.c[i - k];
      r.c[i] = -s / a.c[0];
    }
    return r;
  }
  friend Jet exp(const Jet& a) {
    // r' = a' r
    Jet r;
    r.c[0] = std::exp(a.c[0]);
    for (int i = 1; i <= order; ++i) {
      double s = 0.0;
      for (int k = 1; k <= i; ++k) s += k * a.c[k] * r.c[i - k];
      r.c[i] = s / i;
    }
    return r;
  }
  friend Jet cos(const Jet& a) {
    // joint recursion for (cos a, sin a)
    Jet co, si;
    co.c[0] = std::cos(a.c[0]);
    si.c[0] = std::sin(a.c[0]);
    for (int i = 1; i <= order; ++i) {
      double sc = 0.0, ss = 0.0;
      for (int k = 1; k <= i; ++k) {
        sc += k * a.c[k] * si.c[i - k];
        ss += k * a.c[k] * co.c[i - k];
      }
      co.c[i] = -sc / i;
      si.c[i] = ss / i;
    }
    return co;
  }
};

/// One-dimensional templates supported in [-1, 1].
enum class Template1D { bump, odd, even2, cosine, shifted, narrow };

inline Jet eval_template(Template1D kind, double s) {
  auto bump = [](const Jet& u) {
    if (std::abs(u.c[0]) >= 1.0) return Jet{};
    Jet q = Jet::constant(1.0) - u * u;
    return exp(-1.0 * reciprocal(q));
  };
  Jet u = Jet::variable(s);
  switch (kind) {
    case Template1D::bump: return bump(u);
    case Template1D::odd: return u * bump(u);
    case Template1D::even2: return u * u * bump(u);
    case Template1D::cosine: return cos(M_PI * u) * bump(u);
    case Template1D::shifted: return bump(2.0 * u - Jet::constant(0.5));
    case Template1D::narrow: return bump(2.0 * u);
  }
  return Jet{};
}

/// Separable profile a(t) c(x) supported in the unit parabolic ball, scaled so ||.||_{C^r} = 1.
class Profile {
 public:
  Profile(Template1D time, Template1D space, int r = 2) : a_(time), c_(space), r_(r) {
    if (r < 0 || r > Jet::order) throw GridError("profile smoothness must be in [0,3]");
    std::array<double, Jet::order + 1> sa{}, sc{};
    const int n = 20000;
    for (int i = 0; i <= n; ++i) {
      double s = -1.0 + 2.0 * i / n;
      Jet ja = eval_template(a_, s), jc = eval_template(c_, s);
      for (int k = 0; k <= Jet::order; ++k) {
        sa[k] = std::max(sa[k], std::abs(ja.derivative(k)));
        sc[k] = std::max(sc[k], std::abs(jc.derivative(k)));
      }
    }
    double nrm = 0.0;
    for (int i = 0; i <= r; ++i)
      for (int j = 0; i + j <= r; ++j) nrm = std::max(nrm, sa[i] * sc[j]);
    scale_ = 1.0 / nrm;
  }

  double time_factor(double t) const { return scale_ * eval_template(a_, t).c[0]; }
  double space_factor(double x) const { return eval_template(c_, x).c[0]; }
  double operator()(double t, double x) const { return time_factor(t) * space_factor(x); }

  /// Derivative d_t^i d_x^j of the normalised profile.
  double derivative(double t, double x, int i, int j) const {
    return scale_ * eval_template(a_, t).derivative(i) * eval_template(c_, x).derivative(j);
  }

  int smoothness() const { return r_; }
  Template1D time_template() const { return a_; }
  Template1D space_template() const { return c_; }

 private:
  Template1D a_, c_;
  int r_;
  double scale_ = 1.0;
};

/// Bump plus shifted and modulated variants, each with C^r norm 1.
inline std::vector<Profile> testfn_dictionary(int r = 2, int count = 8) {
  if (r < 1) throw GridError("dictionary smoothness must be at least 1");
  using T = Template1D;
  std::vector<std::pair<T, T>> base = {{T::bump, T::bump},    {T::bump, T::odd},    {T::odd, T::bump},
                                       {T::shifted, T::bump}, {T::bump, T::cosine}, {T::bump, T::even2},
                                       {T::bump, T::narrow},  {T::narrow, T::bump}, {T::odd, T::odd},
                                       {T::cosine, T::bump},  {T::even2, T::bump},  {T::shifted, T::odd},
                                       {T::odd, T::cosine},   {T::narrow, T::odd},  {T::shifted, T::cosine},
                                       {T::even2, T::even2}};
  if (count > int(base.size())) throw GridError("dictionary supports at most 16 profiles");
  std::vector<Profile> out;
  for (int i = 0; i < count; ++i) out.emplace_back(base[i].first, base[i].second, r);
  return out;
}

/// phi^lambda_z(y) = lambda^{-|s|} phi(S^lambda (y - z)).
struct TestFunction {
  const Profile* profile = nullptr;
  double t = 0.0, x = 0.0;  // centre
  double lambda = 1.0;

  Box support(const Scaling& s = {}) const { return Box::around(t, x, lambda, s); }
};

/// Separable weights of a test function on the lattice: rows, columns and the two factor arrays.
struct PairingStencil {
  IndexRange rows, cols;
  std::vector<double> a, c;
  double scale = 1.0;  // eps^{|s|} lambda^{-|s|}
};

inline PairingStencil pairing_stencil(const Grid& g, const TestFunction& phi) {
  const Scaling& s = g.scaling();
  double lt = std::pow(phi.lambda, s.t), lx = std::pow(phi.lambda, s.x);
  PairingStencil st;
  st.rows = row_range(g, phi.t - lt, phi.t + lt);
  st.cols = col_range(g, phi.x - lx, phi.x + lx);
  st.a.resize(std::size_t(st.rows.count()));
  st.c.resize(std::size_t(st.cols.count()));
  for (long m = st.rows.lo; m <= st.rows.hi; ++m)
    st.a[std::size_t(m - st.rows.lo)] = phi.profile->time_factor((g.time(m) - phi.t) / lt);
  for (long j = st.cols.lo; j <= st.cols.hi; ++j)
    st.c[std::size_t(j - st.cols.lo)] = phi.profile->space_factor((g.space(j) - phi.x) / lx);
  st.scale = g.cell() / (lt * lx);
  return st;
}

/// eps^{|s|} sum_y f(y) phi(y) for an arbitrary field f(m, j).
template <class F>
double pair_field(const Grid& g, const TestFunction& phi, F&& f) {
  auto st = pairing_stencil(g, phi);
  double total = 0.0;
  for (long m = st.rows.lo; m <= st.rows.hi; ++m) {
    double am = st.a[std::size_t(m - st.rows.lo)];
    if (am == 0.0) continue;
    double rs = 0.0;
    for (long j = st.cols.lo; j <= st.cols.hi; ++j) rs += st.c[std::size_t(j - st.cols.lo)] * f(m, j);
    total += am * rs;
  }
  return st.scale * total;
}

/// Purely discrete pairing eps^{|s|} sum_i f_i phi_i for values listed point by point.
inline double iota_sum(double eps, int s_total, const std::vector<double>& f, const std::vector<double>& phi) {
  if (f.size() != phi.size()) throw GridError("pairing needs matching value lists");
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += f[i] * phi[i];
  return std::pow(eps, s_total) * acc;
}

/// The pairing iota_eps f (phi).
inline double iota_pair(const GridFunction& f, const TestFunction& phi) {
  return pair_field(f.grid(), phi, [&](long m, long j) { return f(m, j); });
}

// ---- dyadic lattices and the partition of unity ---------------------------------

struct DyadicLattice {
  int level = 0;
  double ht = 1.0, hx = 1.0;
  std::vector<std::array<double, 2>> points;
};

inline DyadicLattice dyadic_lattice(int n, const Box& window, const Scaling& s = {}) {
  if (n < 0) throw GridError("dyadic level must be non-negative");
  DyadicLattice L;
  L.level = n;
  L.ht = std::ldexp(1.0, -n * s.t);
  L.hx = std::ldexp(1.0, -n * s.x);
  long a0 = long(std::ceil(window.t0 / L.ht - 1e-12)), a1 = long(std::floor(window.t1 / L.ht + 1e-12));
  long b0 = long(std::ceil(window.x0 / L.hx - 1e-12)), b1 = long(std::floor(window.x1 / L.hx + 1e-12));
  for (long a = a0; a <= a1; ++a)
    for (long b = b0; b <= b1; ++b) L.points.push_back({a * L.ht, b * L.hx});
  return L;
}

/// Smooth step: 0 for u <= 0, 1 for u >= 1, step(u) + step(1-u) = 1.
inline double smooth_step(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  double a = std::exp(-1.0 / u), b = std::exp(-1.0 / (1.0 - u));
  return a / (a + b);
}

/// Template Psi supported in [-1,1] with Psi(0)=1 and sum_k Psi(x + k) = 1.
inline double psi(double x) { return smooth_step(1.0 - std::abs(x)); }

/// Psi_{[z_n]}(t, x) = Psi(2^{n s_t}(t - t_n)) Psi(2^{n s_x}(x - x_n)).
inline double partition_psi(int n, double tn, double xn, double t, double x, const Scaling& s = {}) {
  return psi(std::ldexp(t - tn, n * s.t)) * psi(std::ldexp(x - xn, n * s.x));
}

}  // namespace regstruct
