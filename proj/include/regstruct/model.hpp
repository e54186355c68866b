#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "fft.hpp"
#include "fit.hpp"
#include "io.hpp"
#include "kernel.hpp"
#include "structure.hpp"

namespace regstruct {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline int dyadic_level(double eps) {
  int k = int(std::lround(-std::log2(eps)));
  if (std::abs(std::ldexp(1.0, -k) - eps) > 1e-14 * eps) throw ModelError("eps must be a power of two");
  return k;
}

/// White noise eps^{-|s|/2} N(0,1) on g. Values are block means of a level-`finest` field whose
/// rows are seeded independently, so every level drawn with one seed sees the same Gaussians.
inline GridFunction white_noise(const Grid& g, std::uint64_t seed, int finest = -1) {
  const Scaling& s = g.scaling();
  int k = dyadic_level(g.eps());
  if (finest < 0) finest = k;
  if (finest < k) throw ModelError("coupling level coarser than the grid");
  long r = 1L << (finest - k);
  long rt = long(ipow(double(r), s.t)), rx = long(ipow(double(r), s.x));
  long Mf = g.cols() * rx;
  double amp = std::pow(std::ldexp(1.0, -finest), -0.5 * s.total()) / double(rt * rx);
  GridFunction out(g);
  std::vector<double> fine(static_cast<std::size_t>(Mf));
  for (long m = g.first_row(); m <= g.last_row(); ++m) {
    double* o = out.row(m);
    for (long q = 0; q < rt; ++q) {
      auto mf = std::uint64_t(m * rt + q);
      std::seed_seq sq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(mf), std::uint32_t(mf >> 32)};
      std::mt19937_64 eng(sq);
      std::normal_distribution<double> N(0.0, 1.0);
      for (auto& v : fine) v = N(eng);
      for (long j = 0; j < g.cols(); ++j)
        for (long p = 0; p < rx; ++p) o[j] += fine[std::size_t(j * rx + p)];
    }
    for (long j = 0; j < g.cols(); ++j) o[j] *= amp;
  }
  return out;
}

namespace detail {

/// Periodic fields shared by the models built from one noise: base fields, lazily evaluated
/// pointwise products, and kernel images (1/k!) D^k K a.
struct AtomTable {
  Grid grid;
  std::shared_ptr<const KernelDecomposition> kernel;
  std::vector<std::shared_ptr<const GridFunction>> fields;
  std::vector<std::vector<int>> factors;
  std::vector<std::string> labels;
  std::map<std::vector<int>, int> products;
  std::map<std::pair<int, MultiIndex>, int> jets;
  std::unique_ptr<ConvolutionEngine> engine;
  ConvolutionEngine::Mode mode = ConvolutionEngine::Mode::fft;

  int add_field(GridFunction f, std::string label) {
    fields.push_back(std::make_shared<const GridFunction>(std::move(f)));
    factors.push_back({});
    labels.push_back(std::move(label));
    return int(fields.size()) - 1;
  }

  const std::vector<int>& base_factors(int a, std::vector<int>& tmp) const {
    if (fields[std::size_t(a)]) {
      tmp = {a};
      return tmp;
    }
    return factors[std::size_t(a)];
  }

  int product(int a, int b) {
    std::vector<int> ta, tb;
    std::vector<int> f = base_factors(a, ta);
    const auto& fb = base_factors(b, tb);
    f.insert(f.end(), fb.begin(), fb.end());
    std::sort(f.begin(), f.end());
    auto it = products.find(f);
    if (it != products.end()) return it->second;
    fields.push_back(nullptr);
    factors.push_back(f);
    std::string l;
    for (int x : f) l += (l.empty() ? "" : "*") + labels[std::size_t(x)];
    labels.push_back(l);
    int id = int(fields.size()) - 1;
    products.emplace(f, id);
    return id;
  }

  double value(int a, long m, long j) const {
    if (!grid.has_row(m)) return 0.0;
    std::size_t idx = grid.index(m, j);
    if (const auto& f = fields[std::size_t(a)]) return f->values()[idx];
    double p = 1.0;
    for (int x : factors[std::size_t(a)]) p *= fields[std::size_t(x)]->values()[idx];
    return p;
  }

  /// sum_j c_j a(m, j) over the unwrapped column range.
  double row_sum(int a, long m, long j0, const std::vector<double>& c) const {
    if (!grid.has_row(m)) return 0.0;
    long M = grid.cols();
    std::size_t base = grid.index(m, 0);
    double acc = 0.0;
    if (const auto& f = fields[std::size_t(a)]) {
      const double* r = f->values().data() + base;
      for (std::size_t i = 0; i < c.size(); ++i) acc += c[i] * r[wrap(j0 + long(i), M)];
      return acc;
    }
    const auto& fs = factors[std::size_t(a)];
    for (std::size_t i = 0; i < c.size(); ++i) {
      long w = wrap(j0 + long(i), M);
      double p = c[i];
      for (int x : fs) p *= fields[std::size_t(x)]->values()[base + std::size_t(w)];
      acc += p;
    }
    return acc;
  }

  GridFunction materialise(int a) const {
    if (const auto& f = fields[std::size_t(a)]) return *f;
    GridFunction out(grid, 1.0);
    for (int x : factors[std::size_t(a)]) out.multiply(*fields[std::size_t(x)]);
    return out;
  }

  int jet(int a, const MultiIndex& k) {
    auto key = std::make_pair(a, k);
    auto it = jets.find(key);
    if (it != jets.end()) return it->second;
    if (!kernel) throw ModelError("model has no kernel to integrate against");
    if (!engine) engine = std::make_unique<ConvolutionEngine>(grid, kernel->total().L + 2);
    const KernelRows& K = k.is_zero() ? kernel->total() : kernel->derivative(k);
    GridFunction out = engine->convolve(K, materialise(a), mode);
    out *= 1.0 / factorial(k);
    std::string l = k.is_zero() ? "K[" + labels[std::size_t(a)] + "]"
                                : "D" + std::to_string(k.t) + "," + std::to_string(k.x) + "K[" +
                                      labels[std::size_t(a)] + "]";
    int id = add_field(std::move(out), l);
    jets.emplace(key, id);
    return id;
  }
};

}  // namespace detail

/// Pi_z tau as sum_a B_a phi_a(y) + sum_k C_k (y - z)^k with periodic atoms phi_a.
struct Realisation {
  std::vector<std::pair<int, double>> atoms;
  std::vector<std::pair<MultiIndex, double>> poly;
};

struct ModelOptions {
  double offset_t = 0.0;  // Pi_z X^k(y) = (y - z + h)^k; h != 0 breaks (Pi_z X^k)(z) = 0
  double offset_x = 0.0;
  double gamma_defect = 0.0;  // added to Gamma I(tau) on 1 (negative control)
  bool causal = false;        // kernel images by row-by-row sums, so no row reads later rows even in roundoff
};


/// Discrete model (Pi, Gamma). Pi_z tau is evaluated on demand from shared periodic fields; Gamma_{yz}
/// is assembled symbol by symbol from the realisation identity.
class DiscreteModel {
 public:
  using Options = ModelOptions;

  DiscreteModel() = default;

  static DiscreteModel polynomial(const Grid& g, const RegularityStructure& S, Options opt = {}) {
    for (const auto& sym : S.symbols())
      if (!sym.mono.factors.empty()) throw ModelError("polynomial model needs a polynomial structure");
    DiscreteModel Z;
    Z.S_ = std::make_shared<const RegularityStructure>(S);
    Z.base_ = Z.S_;
    Z.table_ = std::make_shared<detail::AtomTable>();
    Z.table_->grid = g;
    Z.opt_ = opt;
    return Z;
  }

  /// Canonical lift of grid noise: Pi_z Xi = noise, Pi_z I(tau) = K Pi_z tau - jet at z, products pointwise.
  static DiscreteModel canonical(const GridFunction& noise, std::shared_ptr<const KernelDecomposition> K,
                                 const RegularityStructure& S, Options opt = {}) {
    if (!K) throw ModelError("canonical lift needs a kernel");
    const Grid& g = noise.grid();
    if (K->grid().eps() != g.eps() || K->grid().cols() != g.cols())
      throw ModelError("kernel built for a different lattice");
    if (K->killing_residual() > 1e-10) throw ModelError("kernel does not kill polynomials (moment check failed)");
    DiscreteModel Z;
    Z.S_ = std::make_shared<const RegularityStructure>(S);
    Z.base_ = Z.S_;
    Z.table_ = std::make_shared<detail::AtomTable>();
    Z.table_->grid = g;
    Z.table_->kernel = std::move(K);
    if (opt.causal) Z.table_->mode = ConvolutionEngine::Mode::direct;
    Z.opt_ = opt;
    int noises = 0;
    for (std::size_t p = 0; p < S.primitives().size(); ++p)
      if (S.primitives()[p].type == Primitive::Type::noise) {
        if (noises++) throw ModelError("canonical lift supports a single noise");
        Z.noise_atom_[int(p)] = Z.table_->add_field(noise, S.primitives()[p].name);
      }
    if (!noises) throw ModelError("structure lacks a noise symbol");
    Z.prepare();
    return Z;
  }

  const RegularityStructure& structure() const { return *S_; }
  std::shared_ptr<const RegularityStructure> structure_ptr() const { return S_; }
  const Grid& grid() const { return table_->grid; }
  const KernelDecomposition* kernel() const { return table_->kernel.get(); }
  std::shared_ptr<const KernelDecomposition> kernel_ptr() const { return table_->kernel; }
  const Options& options() const { return opt_; }
  const std::vector<std::string>& extensions() const { return extensions_; }
  std::size_t atom_count() const { return table_->fields.size(); }
  const std::string& atom_label(int a) const { return table_->labels.at(std::size_t(a)); }
  double atom_value(int a, long m, long j) const { return table_->value(a, m, j); }

  const GridFunction* noise() const {
    return noise_atom_.empty() ? nullptr : table_->fields[std::size_t(noise_atom_.begin()->second)].get();
  }

  /// Polynomials of degree <= kill_degree() are annihilated by the kernel.
  double kill_degree() const { return kernel() ? kernel()->options().sigma : -1.0; }

  bool zero_at_base() const { return opt_.offset_t == 0.0 && opt_.offset_x == 0.0; }

  // ---- Pi -----------------------------------------------------------------------

  Realisation realise(std::size_t i, const Point& z) const { return realise_mono(S_->symbol(i).mono, z); }

  double eval(const Realisation& R, const Point& z, const Point& y) const {
    double v = 0.0;
    for (auto [a, c] : R.atoms) v += c * table_->value(a, y.m, y.j);
    double ht = (y.m - z.m) * grid().dt(), hx = (y.j - z.j) * grid().dx();
    for (auto [k, c] : R.poly) v += c * monomial(ht, hx, k);
    return v;
  }

  /// (Pi_z tau)(y) with y unwrapped.
  double pi(std::size_t i, const Point& z, const Point& y) const { return eval(realise(i, z), z, y); }

  /// iota_eps Pi_z tau (phi); polynomial parts are summed over the full support, fields vanish off the window.
  double pair(const Realisation& R, const Point& z, const TestFunction& phi) const {
    const Grid& g = grid();
    const Scaling& s = g.scaling();
    double lt = std::pow(phi.lambda, s.t), lx = std::pow(phi.lambda, s.x);
    long m0 = long(std::ceil((phi.t - lt) / g.dt() - 1e-9)), m1 = long(std::floor((phi.t + lt) / g.dt() + 1e-9));
    long j0 = long(std::ceil((phi.x - lx) / g.dx() - 1e-9)), j1 = long(std::floor((phi.x + lx) / g.dx() + 1e-9));
    std::vector<double> a(static_cast<std::size_t>(m1 - m0 + 1)), c(static_cast<std::size_t>(j1 - j0 + 1));
    for (long m = m0; m <= m1; ++m) a[std::size_t(m - m0)] = phi.profile->time_factor((g.time(m) - phi.t) / lt);
    for (long j = j0; j <= j1; ++j) c[std::size_t(j - j0)] = phi.profile->space_factor((g.space(j) - phi.x) / lx);
    double total = 0.0;
    for (auto [atom, coef] : R.atoms) {
      if (coef == 0.0) continue;
      double acc = 0.0;
      for (long m = std::max(m0, g.first_row()); m <= std::min(m1, g.last_row()); ++m) {
        double am = a[std::size_t(m - m0)];
        if (am != 0.0) acc += am * table_->row_sum(atom, m, j0, c);
      }
      total += coef * acc;
    }
    for (auto [k, coef] : R.poly) {
      if (coef == 0.0) continue;
      double ts = 0.0, xs = 0.0;
      for (long m = m0; m <= m1; ++m) ts += a[std::size_t(m - m0)] * ipow((m - z.m) * g.dt(), k.t);
      for (long j = j0; j <= j1; ++j) xs += c[std::size_t(j - j0)] * ipow((j - z.j) * g.dx(), k.x);
      total += coef * ts * xs;
    }
    return total * g.cell() / (lt * lx);
  }

  double pair(std::size_t i, const Point& z, const TestFunction& phi) const { return pair(realise(i, z), z, phi); }

  /// Q_k = (1/k!) (D^k K Pi_z tau)(z) for the listed k; polynomial parts are killed.
  std::vector<double> jet(std::size_t i, const Point& z, const std::vector<MultiIndex>& ks) const {
    Realisation R = realise(i, z);
    for (auto [k, c] : R.poly)
      if (c != 0.0 && k.degree(grid().scaling()) > kill_degree() + 1e-12)
        throw ModelError("kernel does not kill the polynomial part of " + S_->symbol(i).id);
    std::vector<double> out(ks.size(), 0.0);
    for (std::size_t q = 0; q < ks.size(); ++q)
      for (auto [a, c] : R.atoms) out[q] += c * table_->value(table_->jet(a, ks[q]), z.m, z.j);
    return out;
  }

  /// (1/k!) D^k K applied to a realisation atom, as a field.
  const GridFunction& jet_field(int atom, const MultiIndex& k) const {
    return *table_->fields[std::size_t(table_->jet(atom, k))];
  }

  // ---- Gamma ----------------------------------------------------------------------

  /// Gamma_{yz}, characterised by Pi_y Gamma_{yz} = Pi_z.
  GroupElement gamma(const Point& y, const Point& z) const {
    std::size_t n = S_->size();
    GroupElement G(n);
    std::map<int, std::vector<double>> cache;
    for (std::size_t j = 0; j < n; ++j) G.set_column(j, gamma_mono(S_->symbol(j).mono, y, z, cache));
    if (opt_.gamma_defect != 0.0) {
      int u = S_->unit();
      for (std::size_t j = 0; j < n; ++j)
        if (S_->symbol(j).kind == SymbolKind::integrated && !(y == z)) G(std::size_t(u), j) += opt_.gamma_defect;
    }
    return G;
  }

  /// Enlarge by I(tau) (and the symbols Gamma-closure requires), realised by the same kernel.
  DiscreteModel extend(const std::string& tau) const;

  // ---- persistence ------------------------------------------------------------------

  void save(const std::string& dir) const;
  static DiscreteModel load(const std::string& dir);

 private:
  Realisation realise_mono(const Monomial& mono, const Point& z) const {
    const Scaling& s = grid().scaling();
    Realisation R;
    double ew = ipow(std::pow(grid().eps(), s.x), mono.e);
    for (int a = 0; a <= mono.x.t; ++a)
      for (int b = 0; b <= mono.x.x; ++b) {
        double c = ew * binomial(mono.x.t, a) * binomial(mono.x.x, b) * ipow(opt_.offset_t, mono.x.t - a) *
                   ipow(opt_.offset_x, mono.x.x - b);
        if (c != 0.0) R.poly.push_back({{a, b}, c});
      }
    for (auto [p, n] : mono.factors) {
      Realisation P = realise_primitive(p, z);
      for (int q = 0; q < n; ++q) R = multiply(R, P);
    }
    return R;
  }

  Realisation realise_primitive(int p, const Point& z) const {
    const Primitive& prim = S_->primitives().at(std::size_t(p));
    if (prim.type == Primitive::Type::noise) {
      auto it = noise_atom_.find(p);
      if (it == noise_atom_.end()) throw ModelError("noise " + prim.name + " has no realisation");
      return {{{it->second, 1.0}}, {}};
    }
    int ti = S_->find(prim.integrand);
    if (ti < 0) throw ModelError("integrand " + prim.integrand + " missing from the structure");
    const Symbol& tau = S_->symbol(std::size_t(ti));
    Realisation inner = realise_mono(tau.mono, z);
    const Scaling& s = grid().scaling();
    for (auto [k, c] : inner.poly)
      if (c != 0.0 && k.degree(s) > kill_degree() + 1e-12)
        throw ModelError("kernel does not kill the polynomial part of " + tau.id);
    Realisation R;
    for (auto [a, c] : inner.atoms) R.atoms.push_back({table_->jet(a, {0, 0}), c});
    for (const auto& k : multi_indices_below(tau.homogeneity + S_->beta(), s)) {
      double q = 0.0;
      for (auto [a, c] : inner.atoms) q += c * table_->value(table_->jet(a, k), z.m, z.j);
      R.poly.push_back({k, -q});
    }
    return R;
  }

  Realisation multiply(const Realisation& A, const Realisation& B) const {
    std::map<int, double> at;
    std::map<MultiIndex, double> po;
    auto field_poly = [&](int a, double ca, const MultiIndex& k, double cb) {
      if (cb == 0.0 || ca == 0.0) return;
      if (!k.is_zero()) throw ModelError("product of a field and a non-constant polynomial is not realised");
      at[a] += ca * cb;
    };
    for (auto [a, ca] : A.atoms) {
      for (auto [b, cb] : B.atoms) at[table_->product(a, b)] += ca * cb;
      for (auto [k, cb] : B.poly) field_poly(a, ca, k, cb);
    }
    for (auto [k, ca] : A.poly) {
      for (auto [b, cb] : B.atoms) field_poly(b, cb, k, ca);
      for (auto [l, cb] : B.poly) po[k + l] += ca * cb;
    }
    Realisation R;
    R.atoms.assign(at.begin(), at.end());
    R.poly.assign(po.begin(), po.end());
    return R;
  }

  std::vector<double> mul_full(const std::vector<double>& a, const std::vector<double>& b) const {
    std::vector<double> out(a.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] == 0.0) continue;
      for (std::size_t j = 0; j < b.size(); ++j) {
        if (b[j] == 0.0) continue;
        int k = S_->product(i, j);
        if (k < 0) throw ModelError("structure not closed under Gamma: " + S_->symbol(i).id + " * " + S_->symbol(j).id);
        out[std::size_t(k)] += a[i] * b[j];
      }
    }
    return out;
  }

  std::vector<double> gamma_mono(const Monomial& mono, const Point& y, const Point& z,
                                 std::map<int, std::vector<double>>& cache) const {
    double ht = (y.m - z.m) * grid().dt(), hx = (y.j - z.j) * grid().dx();
    std::vector<double> v(S_->size(), 0.0);
    for (int a = 0; a <= mono.x.t; ++a)
      for (int b = 0; b <= mono.x.x; ++b) {
        double c = binomial(mono.x.t, a) * binomial(mono.x.x, b) * ipow(ht, mono.x.t - a) * ipow(hx, mono.x.x - b);
        int idx = S_->find(Monomial{{a, b}, mono.e, {}});
        if (idx < 0) {
          if (c != 0.0) throw ModelError("structure not closed under polynomial shifts");
          continue;
        }
        v[std::size_t(idx)] += c;
      }
    for (auto [p, n] : mono.factors) {
      auto it = cache.find(p);
      if (it == cache.end()) it = cache.emplace(p, gamma_primitive(p, y, z, cache)).first;
      for (int q = 0; q < n; ++q) v = mul_full(v, it->second);
    }
    return v;
  }

  std::vector<double> gamma_primitive(int p, const Point& y, const Point& z,
                                      std::map<int, std::vector<double>>& cache) const {
    const Primitive& prim = S_->primitives().at(std::size_t(p));
    std::vector<double> out(S_->size(), 0.0);
    int self = S_->find(Monomial{{}, 0, {{p, 1}}});
    if (prim.type == Primitive::Type::noise) {
      out[std::size_t(self)] = 1.0;
      return out;
    }
    const Scaling& s = grid().scaling();
    int ti = S_->index(prim.integrand);
    const Symbol& tau = S_->symbol(std::size_t(ti));
    std::vector<double> gt = gamma_mono(tau.mono, y, z, cache);
    std::map<MultiIndex, double> c;
    for (std::size_t sg = 0; sg < gt.size(); ++sg) {
      if (gt[sg] == 0.0) continue;
      const Symbol& sig = S_->symbol(sg);
      if (sig.mono.factors.empty()) {
        if (sig.mono.x.degree(s) > kill_degree() + 1e-12) throw ModelError("kernel does not kill " + sig.id);
        continue;
      }
      int ii = S_->integrated(sg);
      if (ii < 0) throw ModelError("structure lacks I(" + sig.id + ")");
      out[std::size_t(ii)] += gt[sg];
      auto ks = multi_indices_below(sig.homogeneity + S_->beta(), s);
      auto Q = jet(sg, y, ks);
      for (std::size_t q = 0; q < ks.size(); ++q) c[ks[q]] += gt[sg] * Q[q];
    }
    double ht = (y.m - z.m) * grid().dt(), hx = (y.j - z.j) * grid().dx();
    auto ks = multi_indices_below(tau.homogeneity + S_->beta(), s);
    auto Q = jet(std::size_t(ti), z, ks);
    for (std::size_t q = 0; q < ks.size(); ++q) {
      const MultiIndex& l = ks[q];
      for (int a = 0; a <= l.t; ++a)
        for (int b = 0; b <= l.x; ++b)
          c[{a, b}] -= Q[q] * binomial(l.t, a) * binomial(l.x, b) * ipow(ht, l.t - a) * ipow(hx, l.x - b);
    }
    for (auto [k, v] : c) {
      if (v == 0.0) continue;
      int idx = S_->polynomial(k);
      if (idx < 0)
        throw ModelError("structure lacks X^(" + std::to_string(k.t) + "," + std::to_string(k.x) + ") for I(" +
                         tau.id + ")");
      out[std::size_t(idx)] += v;
    }
    return out;
  }

  void prepare() {
    Point z{grid().first_row(), 0};
    for (std::size_t i = 0; i < S_->size(); ++i) realise(i, z);
  }

  std::shared_ptr<const RegularityStructure> S_, base_;
  std::shared_ptr<detail::AtomTable> table_;
  std::map<int, int> noise_atom_;
  Options opt_;
  std::vector<std::string> extensions_;
};

// ---- extension -------------------------------------------------------------------

inline DiscreteModel DiscreteModel::extend(const std::string& tau) const {
  if (!kernel()) throw ModelError("extension needs a kernel");
  const RegularityStructure& S = *S_;
  int ti = S.find(tau);
  if (ti < 0) throw ModelError("unknown symbol " + tau);
  const Symbol& t = S.symbol(std::size_t(ti));
  if (t.mono.factors.empty()) return *this;  // I(X^k) = 0
  if (S.integrated(std::size_t(ti)) >= 0) throw ModelError("I(" + tau + ") already present");
  const Scaling& s = grid().scaling();
  // components Gamma can produce from a monomial: X^k -> X^{k'<=k}, noise fixed,
  // I(rho) -> I(rho) or X^a with |a|_s < |rho| + beta
  std::function<std::set<Monomial>(const Monomial&)> support = [&](const Monomial& m) {
    std::set<Monomial> out;
    for (int a = 0; a <= m.x.t; ++a)
      for (int b = 0; b <= m.x.x; ++b) out.insert(Monomial{{a, b}, m.e, {}});
    for (auto [p, n] : m.factors) {
      const Primitive& prim = S.primitives()[std::size_t(p)];
      std::set<Monomial> f{Monomial{{}, 0, {{p, 1}}}};
      if (prim.type == Primitive::Type::integrated)
        for (const auto& k : multi_indices_below(S.homogeneity(S.symbol(std::size_t(S.index(prim.integrand))).mono) + S.beta(), s))
          f.insert(Monomial{k, 0, {}});
      for (int q = 0; q < n; ++q) {
        std::set<Monomial> next;
        for (const auto& x : out)
          for (const auto& y : f) next.insert(x * y);
        out = std::move(next);
      }
    }
    return out;
  };
  std::vector<std::string> add;
  std::set<std::string> have;
  auto want = [&](const std::string& id) {
    if (S.find(id) < 0 && have.insert(id).second) add.push_back(id);
  };
  for (const auto& sig : support(t.mono)) {
    int si = S.find(sig);
    if (si < 0 || sig.factors.empty()) continue;
    if (S.integrated(std::size_t(si)) < 0) want("I(" + S.symbol(std::size_t(si)).id + ")");
    for (const auto& k : multi_indices_below(S.symbol(std::size_t(si)).homogeneity + S.beta(), s))
      if (!k.is_zero()) want(S.id_of(Monomial{k, 0, {}}));
  }
  // polynomials first, then integrated symbols by increasing homogeneity of the integrand
  std::stable_sort(add.begin(), add.end(), [&](const std::string& a, const std::string& b) {
    bool ia = a.rfind("I(", 0) == 0, ib = b.rfind("I(", 0) == 0;
    if (ia != ib) return ia < ib;
    if (!ia) return false;
    return S.symbol(std::size_t(S.index(a.substr(2, a.size() - 3)))).homogeneity <
           S.symbol(std::size_t(S.index(b.substr(2, b.size() - 3)))).homogeneity;
  });
  DiscreteModel Z = *this;
  Z.S_ = std::make_shared<const RegularityStructure>(S.with_symbols(add));
  std::map<int, int> atoms;
  for (auto [p, a] : noise_atom_) atoms[Z.S_->primitive_index(S.primitives()[std::size_t(p)].name)] = a;
  Z.noise_atom_ = atoms;
  Z.extensions_.push_back(tau);
  Z.prepare();
  return Z;
}

/// max over z, y of |Pi_z I(tau)(y) - [K Pi_z tau](y) + sum_k (y-z)^k Q_k(z)|, with the right side from
/// direct lattice sums of the materialised field Pi_z tau.
inline double realisation_residual(const DiscreteModel& Z, const std::string& tau, const std::vector<Point>& base,
                                   const std::vector<Point>& targets) {
  const RegularityStructure& S = Z.structure();
  int ti = S.index(tau), ii = S.integrated(std::size_t(ti));
  if (ii < 0) throw ModelError("I(" + tau + ") is not in the structure");
  const Grid& g = Z.grid();
  const KernelDecomposition& D = *Z.kernel();
  auto ks = multi_indices_below(S.symbol(std::size_t(ti)).homogeneity + S.beta(), g.scaling());
  double worst = 0.0;
  for (const auto& z : base) {
    Realisation R = Z.realise(std::size_t(ti), z);
    GridFunction F(g);
    for (long m = g.first_row(); m <= g.last_row(); ++m)
      for (long j = 0; j < g.cols(); ++j) {
        double v = 0.0;
        for (auto [a, c] : R.atoms) v += c * Z.atom_value(a, m, j);
        for (auto [k, c] : R.poly)
          if (k.is_zero()) v += c;
        F(m, j) = v;
      }
    std::vector<double> Q;
    for (const auto& k : ks) Q.push_back(convolve_at(k.is_zero() ? D.total() : D.derivative(k), F, z.m, z.j) / factorial(k));
    Realisation I = Z.realise(std::size_t(ii), z);
    for (const auto& y : targets) {
      double rhs = convolve_at(D.total(), F, y.m, y.j);
      double ht = (y.m - z.m) * g.dt(), hx = (y.j - z.j) * g.dx();
      for (std::size_t q = 0; q < ks.size(); ++q) rhs -= Q[q] * monomial(ht, hx, ks[q]);
      double lhs = Z.eval(I, z, y);
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
    }
  }
  return worst;
}

// ---- sampling plans, axioms and norms -------------------------------------------------

/// Base points are multiples of (step_t, step_x) inside the half-open box K = [t0,t1) x [x0,x1), so nested
/// boxes give nested samples.
struct SamplingPlan {
  Box box{0.0, 0.25, 0.0, 1.0};
  double step_t = 1.0 / 16.0;
  double step_x = 1.0 / 8.0;
  int profiles = 8;
  double lambda_max = 1.0;
  std::uint64_t seed = 7;
};

inline std::vector<Point> base_points(const Grid& g, const SamplingPlan& p) {
  std::vector<Point> out;
  long a0 = long(std::ceil(p.box.t0 / p.step_t - 1e-9)), a1 = long(std::ceil(p.box.t1 / p.step_t - 1e-9)) - 1;
  long b0 = long(std::ceil(p.box.x0 / p.step_x - 1e-9)), b1 = long(std::ceil(p.box.x1 / p.step_x - 1e-9)) - 1;
  for (long a = a0; a <= a1; ++a)
    for (long b = b0; b <= b1; ++b) out.push_back(g.nearest(a * p.step_t, b * p.step_x));
  return out;
}

/// Dyadic lambda in (eps, lambda_max].
inline std::vector<double> dyadic_scales(double eps, double lambda_max) {
  std::vector<double> out;
  for (int n = 0; n < 60; ++n) {
    double l = std::ldexp(1.0, -n);
    if (l <= eps * (1.0 + 1e-12)) break;
    if (l <= lambda_max * (1.0 + 1e-12)) out.push_back(l);
  }
  return out;
}

/// Nonzero lattice offsets at parabolic distance < radius. Empty for radius <= eps on the uniform lattice,
/// where every neighbour sits at distance exactly eps.
inline std::vector<std::pair<long, long>> small_offsets(const Grid& g, double radius) {
  std::vector<std::pair<long, long>> out;
  long mt = long(std::ceil(std::pow(radius, g.scaling().t) / g.dt())), mx = long(std::ceil(std::pow(radius, g.scaling().x) / g.dx()));
  for (long a = -mt; a <= mt; ++a)
    for (long b = -mx; b <= mx; ++b)
      if ((a || b) && g.distance({0, 0}, {a, b}) < radius * (1.0 - 1e-12)) out.push_back({a, b});
  return out;
}

inline void require_window(const Grid& g, const SamplingPlan& p, double lmax) {
  double r = std::pow(lmax, g.scaling().t);
  if (p.box.t0 - r < g.t0() - 1e-12 || p.box.t1 + r > g.t1() + 1e-12)
    throw ModelError("sampling box plus test-function support leaves the grid window");
}

/// max over levels m < |tau| of ||v||_m / d^{|tau| - m}.
inline double gamma_ratio(const RegularityStructure& S, const std::vector<double>& col, std::size_t tau, double d) {
  double h = S.symbol(tau).homogeneity, r = 0.0;
  for (std::size_t i = 0; i < col.size(); ++i) {
    double m = S.symbol(i).homogeneity;
    if (m < h - RegularityStructure::tol && col[i] != 0.0) r = std::max(r, std::abs(col[i]) / std::pow(d, h - m));
  }
  return r;
}

inline std::vector<double> column(const GroupElement& G, std::size_t j, bool minus_identity = false) {
  std::vector<double> c(G.dim());
  for (std::size_t i = 0; i < G.dim(); ++i) c[i] = G(i, j) - (minus_identity && i == j ? 1.0 : 0.0);
  return c;
}

struct SymbolScaling {
  std::string id;
  double homogeneity = 0.0;
  std::vector<double> lambdas, sup, rms;
  bool fitted = false;
  ExponentFit sup_fit, rms_fit;
  double pi_constant = 0.0;     // sup |pairing| / lambda^{|tau|}
  double gamma_constant = 0.0;  // sup ||Gamma tau||_m / d^{|tau|-m}
  double small_scale = 0.0;     // sup ||Pi_z tau||_{|tau|; K_eps; z; eps}
  double gamma_small = 0.0;     // small-scale seminorm of y -> Gamma_{yz} tau - tau
};

struct AxiomReport {
  double identity_residual = 0.0;
  double composition_residual = 0.0;
  double consistency_residual = 0.0;
  std::vector<SymbolScaling> symbols;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

struct AxiomOptions {
  double tol = 1e-10;
  double slope_tol = 0.2;
  int triples = 20;
  int probe_points = 16;
  bool scaling = true;
};

/// Pairings |iota Pi_z tau(phi^lambda_z)| over dictionary x dyadic lambda x base points.
inline SymbolScaling pairing_scaling(const DiscreteModel& Z, std::size_t tau, const SamplingPlan& plan,
                                     const std::vector<Profile>& dict) {
  const Grid& g = Z.grid();
  SymbolScaling r;
  r.id = Z.structure().symbol(tau).id;
  r.homogeneity = Z.structure().symbol(tau).homogeneity;
  r.lambdas = dyadic_scales(g.eps(), plan.lambda_max);
  auto pts = base_points(g, plan);
  for (double lam : r.lambdas) {
    // per-point slots reduced in order: results do not depend on the thread count
    std::vector<double> psup(pts.size(), 0.0), ps2(pts.size(), 0.0);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t p = 0; p < pts.size(); ++p) {
      const Point& z = pts[p];
      Realisation R = Z.realise(tau, z);
      for (const auto& prof : dict) {
        double v = std::abs(Z.pair(R, z, TestFunction{&prof, g.time(z.m), g.space(z.j), lam}));
        psup[p] = std::max(psup[p], v);
        ps2[p] += v * v;
      }
    }
    double sup = 0.0, s2 = 0.0;
    for (std::size_t p = 0; p < pts.size(); ++p) {
      sup = std::max(sup, psup[p]);
      s2 += ps2[p];
    }
    std::size_t cnt = pts.size() * dict.size();
    r.sup.push_back(sup);
    r.rms.push_back(std::sqrt(s2 / double(std::max<std::size_t>(cnt, 1))));
    r.pi_constant = std::max(r.pi_constant, sup / std::pow(lam, r.homogeneity));
  }
  try {
    r.sup_fit = fit_exponent(r.lambdas, r.sup);
    r.rms_fit = fit_exponent(r.lambdas, r.rms);
    r.fitted = true;
  } catch (const FitError&) {
    r.fitted = false;
  }
  return r;
}

inline AxiomReport check_model_axioms(const DiscreteModel& Z, double gamma, const SamplingPlan& plan,
                                      AxiomOptions opt = {}) {
  const RegularityStructure& S = Z.structure();
  const Grid& g = Z.grid();
  AxiomReport rep;
  auto pts = base_points(g, plan);
  std::size_t n = S.size();
  auto id = GroupElement::identity(n);
  for (const auto& z : pts) {
    auto G = Z.gamma(z, z);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) rep.identity_residual = std::max(rep.identity_residual, std::abs(G(i, j) - id(i, j)));
  }
  std::mt19937_64 rng(plan.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  std::uniform_int_distribution<long> dm(-long(std::pow(g.eps(), -2) / 8), long(std::pow(g.eps(), -2) / 8));
  std::uniform_int_distribution<long> dj(-g.cols() / 2, g.cols() / 2);
  for (int t = 0; t < opt.triples; ++t) {
    Point x = pts[pick(rng)], y = pts[pick(rng)], z = pts[pick(rng)];
    auto Gxy = Z.gamma(x, y), Gyz = Z.gamma(y, z), Gxz = Z.gamma(x, z);
    auto C = S.compose(Gxy, Gyz);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        rep.composition_residual = std::max(rep.composition_residual, std::abs(C(i, j) - Gxz(i, j)));
    for (std::size_t j = 0; j < n; ++j) {
      Realisation Rz = Z.realise(j, z);
      std::vector<Realisation> Ry(n);
      for (std::size_t i = 0; i < n; ++i)
        if (Gyz(i, j) != 0.0) Ry[i] = Z.realise(i, y);
      for (int q = 0; q < opt.probe_points; ++q) {
        Point w{std::clamp(z.m + dm(rng), g.first_row(), g.last_row()), z.j + dj(rng)};
        double lhs = Z.eval(Rz, z, w), rhs = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          if (Gyz(i, j) != 0.0) rhs += Gyz(i, j) * Z.eval(Ry[i], y, w);
        rep.consistency_residual = std::max(rep.consistency_residual, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
      }
    }
  }
  if (rep.identity_residual > opt.tol) rep.violations.push_back("Gamma_zz differs from the identity");
  if (rep.composition_residual > opt.tol) rep.violations.push_back("Gamma_xy Gamma_yz differs from Gamma_xz");
  if (rep.consistency_residual > opt.tol) rep.violations.push_back("Pi_z differs from Pi_y Gamma_yz");

  auto dict = testfn_dictionary(std::max(1, S.smoothness()), plan.profiles);
  double eps = g.eps();
  for (std::size_t tau = 0; tau < n; ++tau) {
    const Symbol& sym = S.symbol(tau);
    if (sym.homogeneity >= gamma - RegularityStructure::tol) continue;
    SymbolScaling sc;
    if (opt.scaling) {
      require_window(g, plan, plan.lambda_max);
      sc = pairing_scaling(Z, tau, plan, dict);
      if (sc.fitted && sc.rms_fit.slope < sym.homogeneity - opt.slope_tol)
        rep.violations.push_back("pairing exponent of " + sym.id + " below its homogeneity");
    } else {
      sc.id = sym.id;
      sc.homogeneity = sym.homogeneity;
    }
    for (const auto& z : pts) {
      Realisation R = Z.realise(tau, z);
      for (long a = -1; a <= 1; ++a)
        for (long b = -1; b <= 1; ++b) {
          Point y{z.m + a, z.j + b};
          if (!g.has_row(y.m)) continue;
          sc.small_scale = std::max(sc.small_scale, std::pow(eps, -sym.homogeneity) * std::abs(Z.eval(R, z, y)));
        }
      for (const auto& w : pts) {
        double d = g.distance(z, w);
        if (d > eps && d <= 1.0) sc.gamma_constant = std::max(sc.gamma_constant, gamma_ratio(S, column(Z.gamma(z, w), tau), tau, d));
      }
      // y, y' closer than eps
      Point y{z.m, z.j};
      for (auto [a, b] : small_offsets(g, eps)) {
        Point yp{y.m + a, y.j + b};
        if (!g.has_row(yp.m)) continue;
        auto c = column(Z.gamma(y, yp), tau, true);
        for (std::size_t i = 0; i < n; ++i) {
          double m = S.symbol(i).homogeneity;
          if (m < sym.homogeneity - RegularityStructure::tol)
            sc.gamma_small = std::max(sc.gamma_small, std::pow(eps, m - sym.homogeneity) * std::abs(c[i]));
        }
      }
    }
    rep.symbols.push_back(sc);
  }
  return rep;
}

struct ModelNorms {
  double pi_norm = 0.0;
  double gamma_norm = 0.0;
};

/// Empirical smallest constants in the Pi and Gamma bounds over the sampling plan.
inline ModelNorms model_norms(const DiscreteModel& Z, double gamma, const SamplingPlan& plan) {
  const RegularityStructure& S = Z.structure();
  const Grid& g = Z.grid();
  require_window(g, plan, plan.lambda_max);
  auto dict = testfn_dictionary(std::max(1, S.smoothness()), plan.profiles);
  auto pts = base_points(g, plan);
  auto lams = dyadic_scales(g.eps(), plan.lambda_max);
  ModelNorms N;
  for (std::size_t tau = 0; tau < S.size(); ++tau) {
    double h = S.symbol(tau).homogeneity;
    if (h >= gamma - RegularityStructure::tol) continue;
    for (const auto& z : pts) {
      Realisation R = Z.realise(tau, z);
      for (double lam : lams)
        for (const auto& prof : dict)
          N.pi_norm = std::max(N.pi_norm, std::abs(Z.pair(R, z, TestFunction{&prof, g.time(z.m), g.space(z.j), lam})) /
                                              std::pow(lam, h));
    }
  }
  for (const auto& z : pts)
    for (const auto& w : pts) {
      double d = g.distance(z, w);
      if (!(d > g.eps() && d <= 1.0)) continue;
      auto G = Z.gamma(z, w);
      for (std::size_t tau = 0; tau < S.size(); ++tau)
        if (S.symbol(tau).homogeneity < gamma - RegularityStructure::tol)
          N.gamma_norm = std::max(N.gamma_norm, gamma_ratio(S, column(G, tau), tau, d));
    }
  return N;
}

// ---- distance to a fine-grid reference ------------------------------------------------

struct ModelDistance {
  double pi_large = 0.0;     // ||Pi - Pi^eps||_{>= eps}
  double pi_small = 0.0;     // sup ||Pi^eps_z tau||_{|tau|; K_eps; z; eps}
  double pi_ref_small = 0.0; // reference pairings at lambda in (eps_ref, eps]
  double gamma_large = 0.0;  // ||Gamma - Gamma^eps||_{>= eps}
  double gamma_small = 0.0;  // small-scale seminorm of y -> Gamma^eps_{yz} tau - tau
  double gamma_ref_small = 0.0;
  double large() const { return pi_large + gamma_large; }
  double total() const { return pi_large + pi_small + pi_ref_small + gamma_large + gamma_small + gamma_ref_small; }
};

/// Distance between a reference model on a finer lattice (standing in for the continuum) and a coarse model.
inline ModelDistance model_distance(const DiscreteModel& ref, const DiscreteModel& Z, double gamma,
                                    const SamplingPlan& plan) {
  const RegularityStructure &A = ref.structure(), &B = Z.structure();
  if (A.size() != B.size()) throw ModelError("models live on different structures");
  for (std::size_t i = 0; i < A.size(); ++i)
    if (A.symbol(i).id != B.symbol(i).id) throw ModelError("models live on different structures");
  const Grid &gf = ref.grid(), &gc = Z.grid();
  bool same = gf.eps() == gc.eps();
  if (!same && gf.eps() > gc.eps() / 8.0 * (1.0 + 1e-12))
    throw ModelError("reference lattice must be the same or at least 8x finer");
  require_window(gf, plan, plan.lambda_max);
  require_window(gc, plan, plan.lambda_max);
  auto dict = testfn_dictionary(std::max(1, B.smoothness()), plan.profiles);
  auto pc = base_points(gc, plan);
  double eps = gc.eps();
  auto to_fine = [&](const Point& p) { return gf.nearest(gc.time(p.m), gc.space(p.j)); };
  ModelDistance D;
  auto lams = dyadic_scales(eps, plan.lambda_max);
  auto small_lams = dyadic_scales(gf.eps(), eps);
  std::size_t n = B.size();
  for (std::size_t tau = 0; tau < n; ++tau) {
    double h = B.symbol(tau).homogeneity;
    if (h >= gamma - RegularityStructure::tol) continue;
    for (const auto& z : pc) {
      Point zf = to_fine(z);
      Realisation Rc = Z.realise(tau, z), Rf = ref.realise(tau, zf);
      for (const auto& prof : dict) {
        for (double lam : lams) {
          double a = ref.pair(Rf, zf, TestFunction{&prof, gf.time(zf.m), gf.space(zf.j), lam});
          double b = Z.pair(Rc, z, TestFunction{&prof, gc.time(z.m), gc.space(z.j), lam});
          D.pi_large = std::max(D.pi_large, std::abs(a - b) / std::pow(lam, h));
        }
        for (double lam : small_lams)
          D.pi_ref_small = std::max(D.pi_ref_small, std::abs(ref.pair(Rf, zf, TestFunction{&prof, gf.time(zf.m), gf.space(zf.j), lam})) /
                                                        std::pow(lam, h));
      }
      for (long a = -1; a <= 1; ++a)
        for (long b = -1; b <= 1; ++b) {
          Point y{z.m + a, z.j + b};
          if (gc.has_row(y.m)) D.pi_small = std::max(D.pi_small, std::pow(eps, -h) * std::abs(Z.eval(Rc, z, y)));
        }
    }
  }
  for (const auto& z : pc) {
    for (const auto& w : pc) {
      double d = gc.distance(z, w);
      if (!(d > eps && d <= 1.0)) continue;
      auto Gc = Z.gamma(z, w), Gf = ref.gamma(to_fine(z), to_fine(w));
      for (std::size_t tau = 0; tau < n; ++tau) {
        if (B.symbol(tau).homogeneity >= gamma - RegularityStructure::tol) continue;
        auto c = column(Gc, tau), f = column(Gf, tau);
        for (std::size_t i = 0; i < n; ++i) c[i] -= f[i];
        D.gamma_large = std::max(D.gamma_large, gamma_ratio(B, c, tau, d));
      }
    }
    Point zf = to_fine(z);
    for (auto [a, b] : small_offsets(gc, eps)) {
      Point yc{z.m + a, z.j + b};
      if (gc.has_row(yc.m)) {
        auto G = Z.gamma(z, yc);
        for (std::size_t tau = 0; tau < n; ++tau) {
          double h = B.symbol(tau).homogeneity;
          if (h >= gamma - RegularityStructure::tol) continue;
          for (std::size_t i = 0; i < n; ++i) {
            double m = B.symbol(i).homogeneity;
            if (m < h - RegularityStructure::tol)
              D.gamma_small = std::max(D.gamma_small, std::pow(eps, m - h) * std::abs(G(i, tau)));
          }
        }
      }
    }
    for (auto [a, b] : {std::pair<long, long>{1, 0}, {0, 1}, {1, 1}, {-1, 1}}) {
      // reference pairs closer than eps
      for (long r = 1; !same && (r * gf.eps()) < eps; r *= 2) {
        Point yf{zf.m + a * r * r, zf.j + b * r};
        if (!gf.has_row(yf.m)) continue;
        double d = gf.distance(zf, yf);
        auto G = ref.gamma(zf, yf);
        for (std::size_t tau = 0; tau < n; ++tau)
          if (A.symbol(tau).homogeneity < gamma - RegularityStructure::tol)
            D.gamma_ref_small = std::max(D.gamma_ref_small, gamma_ratio(A, column(G, tau), tau, d));
      }
    }
  }
  return D;
}

// ---- persistence ---------------------------------------------------------------------

inline void DiscreteModel::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json j;
  std::ostringstream st;
  StructureIO::write(st, *base_);
  j["format"] = "regstruct-model-1";
  j["kind"] = noise() ? "canonical" : "polynomial";
  j["structure"] = st.str();
  j["eps"] = grid().eps();
  j["t0"] = grid().t0();
  j["t1"] = grid().t1();
  j["scaling"] = {grid().scaling().t, grid().scaling().x};
  j["period"] = grid().period();
  j["offset"] = {opt_.offset_t, opt_.offset_x};
  j["gamma_defect"] = opt_.gamma_defect;
  j["causal"] = opt_.causal;
  j["extensions"] = extensions_;
  if (kernel()) j["kernel"] = {{"beta", kernel()->options().beta}, {"sigma", kernel()->options().sigma},
                               {"correct", kernel()->options().correct}};
  if (noise()) {
    save_grid_function((fs::path(dir) / "noise.rsgf").string(), *noise());
    j["fields"] = {{"noise", "noise.rsgf"}};
  }
  std::ofstream(fs::path(dir) / "manifest.json") << j.dump(2) << "\n";
}

inline DiscreteModel DiscreteModel::load(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw ModelError("no manifest in " + dir);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", "") != "regstruct-model-1") throw ModelError("unknown model format");
  std::istringstream st(j["structure"].get<std::string>());
  RegularityStructure S = StructureIO::parse(st);
  Options opt;
  opt.offset_t = j["offset"][0];
  opt.offset_x = j["offset"][1];
  opt.gamma_defect = j["gamma_defect"];
  opt.causal = j.value("causal", false);
  if (j["kind"] == "polynomial") {
    Grid g(j["eps"], j["t0"], j["t1"], Scaling{j["scaling"][0], j["scaling"][1]}, j["period"]);
    return polynomial(g, S, opt);
  }
  GridFunction xi = load_grid_function((fs::path(dir) / j["fields"]["noise"].get<std::string>()).string());
  KernelOptions ko;
  ko.beta = j["kernel"]["beta"];
  ko.sigma = j["kernel"]["sigma"];
  ko.correct = j["kernel"]["correct"];
  auto K = std::make_shared<const KernelDecomposition>(KernelDecomposition::cached(xi.grid(), ko));
  DiscreteModel Z = canonical(xi, K, S, opt);
  for (const auto& tau : j["extensions"].get<std::vector<std::string>>()) Z = Z.extend(tau);
  return Z;
}

}  // namespace regstruct
