#pragma once

#include <functional>
#include <random>
#include <set>

#include "model.hpp"

namespace regstruct {

class ModelledError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Jet-valued field z -> f(z) in T_{<gamma}, stored as one coefficient plane per sector symbol over a
/// row range of the model's grid (all columns; spatially periodic).
class ModelledDistribution {
 public:
  ModelledDistribution() = default;

  ModelledDistribution(DiscreteModel model, double gamma, std::vector<int> sector, long r0, long r1)
      : Z_(std::move(model)), gamma_(gamma), sector_(std::move(sector)), r0_(r0), r1_(r1) {
    const Grid& g = Z_.grid();
    if (r0 > r1 || !g.has_row(r0) || !g.has_row(r1)) throw ModelledError("row range outside the model window");
    std::sort(sector_.begin(), sector_.end());
    sector_.erase(std::unique(sector_.begin(), sector_.end()), sector_.end());
    const auto& S = Z_.structure();
    for (int i : sector_) {
      if (i < 0 || std::size_t(i) >= S.size()) throw ModelledError("sector symbol out of range");
      if (S.symbol(std::size_t(i)).homogeneity >= gamma - RegularityStructure::tol)
        throw ModelledError("sector symbol " + S.symbol(std::size_t(i)).id + " not below gamma");
    }
    slot_.assign(S.size(), -1);
    for (std::size_t q = 0; q < sector_.size(); ++q) slot_[std::size_t(sector_[q])] = int(q);
    c_.assign(sector_.size() * points(), 0.0);
  }

  /// Every symbol below gamma in the given rows.
  static ModelledDistribution zero(const DiscreteModel& Z, double gamma, long r0, long r1) {
    std::vector<int> sec;
    for (std::size_t i = 0; i < Z.structure().size(); ++i)
      if (Z.structure().symbol(i).homogeneity < gamma - RegularityStructure::tol) sec.push_back(int(i));
    return ModelledDistribution(Z, gamma, sec, r0, r1);
  }

  static ModelledDistribution from(const DiscreteModel& Z, double gamma, std::vector<int> sector, long r0, long r1,
                                   const std::function<StructureVector(const Point&)>& F) {
    ModelledDistribution f(Z, gamma, std::move(sector), r0, r1);
    for (long m = r0; m <= r1; ++m)
      for (long j = 0; j < Z.grid().cols(); ++j) f.set({m, j}, F({m, j}));
    return f;
  }

  const DiscreteModel& model() const { return Z_; }
  const RegularityStructure& structure() const { return Z_.structure(); }
  const Grid& grid() const { return Z_.grid(); }
  double gamma() const { return gamma_; }
  const std::vector<int>& sector() const { return sector_; }
  long first_row() const { return r0_; }
  long last_row() const { return r1_; }
  bool has_row(long m) const { return m >= r0_ && m <= r1_; }
  std::size_t points() const { return std::size_t((r1_ - r0_ + 1) * grid().cols()); }

  /// Lowest homogeneity present in the sector.
  double regularity() const {
    double a = std::numeric_limits<double>::infinity();
    for (int i : sector_) a = std::min(a, structure().symbol(std::size_t(i)).homogeneity);
    return a;
  }

  double coefficient(int symbol, const Point& z) const {
    int q = slot_.at(std::size_t(symbol));
    return q < 0 ? 0.0 : c_[std::size_t(q) * points() + offset(z)];
  }

  void set_coefficient(int symbol, const Point& z, double v) {
    int q = slot_.at(std::size_t(symbol));
    if (q < 0) {
      if (v != 0.0) throw ModelledError("value outside the sector: " + structure().symbol(std::size_t(symbol)).id);
      return;
    }
    c_[std::size_t(q) * points() + offset(z)] = v;
  }

  StructureVector at(const Point& z) const {
    StructureVector v = structure().zero(gamma_);
    std::size_t o = offset(z);
    for (std::size_t q = 0; q < sector_.size(); ++q) v[std::size_t(sector_[q])] = c_[q * points() + o];
    return v;
  }

  void set(const Point& z, const StructureVector& v) {
    if (v.size() != structure().size()) throw ModelledError("structure vector size mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] == 0.0) continue;
      if (structure().symbol(i).homogeneity >= gamma_ - RegularityStructure::tol) continue;
      set_coefficient(int(i), z, v[i]);
    }
  }

  /// Plane of one sector symbol (row-major over the row range).
  const double* plane(int symbol) const {
    int q = slot_.at(std::size_t(symbol));
    return q < 0 ? nullptr : c_.data() + std::size_t(q) * points();
  }

  double* plane(int symbol) {
    int q = slot_.at(std::size_t(symbol));
    return q < 0 ? nullptr : c_.data() + std::size_t(q) * points();
  }

  /// Gamma_{zy} f(y) restricted to levels below gamma.
  StructureVector transported(const Point& z, const Point& y) const { return transport(Z_.gamma(z, y), y); }

  StructureVector transport(const GroupElement& G, const Point& y) const {
    const auto& S = structure();
    StructureVector out = S.zero(gamma_);
    std::size_t o = offset(y);
    for (std::size_t q = 0; q < sector_.size(); ++q) {
      double v = c_[q * points() + o];
      if (v == 0.0) continue;
      std::size_t j = std::size_t(sector_[q]);
      for (std::size_t i = 0; i < S.size(); ++i)
        if (G(i, j) != 0.0 && S.symbol(i).homogeneity < gamma_ - RegularityStructure::tol) out[i] += G(i, j) * v;
    }
    return out;
  }

  ModelledDistribution with_model(const DiscreteModel& Z) const {
    if (Z.structure().size() != structure().size()) throw ModelledError("model on a different structure");
    ModelledDistribution f = *this;
    f.Z_ = Z;
    return f;
  }

  void save(const std::string& path) const {
    std::ofstream o(path, std::ios::binary);
    if (!o) throw IoError("cannot write " + path);
    o.write("RSMD", 4);
    detail::put<std::uint32_t>(o, 1);
    detail::put<double>(o, gamma_);
    detail::put<std::int64_t>(o, r0_);
    detail::put<std::int64_t>(o, r1_);
    detail::put<std::int64_t>(o, grid().cols());
    detail::put<std::uint32_t>(o, std::uint32_t(sector_.size()));
    for (int i : sector_) {
      const std::string& id = structure().symbol(std::size_t(i)).id;
      detail::put<std::uint32_t>(o, std::uint32_t(id.size()));
      o.write(id.data(), std::streamsize(id.size()));
    }
    o.write(reinterpret_cast<const char*>(c_.data()), std::streamsize(sizeof(double) * c_.size()));
  }

  static ModelledDistribution load(const std::string& path, const DiscreteModel& Z) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RSMD", 4) != 0) throw IoError("not a modelled distribution binary");
    if (detail::get<std::uint32_t>(in) != 1) throw IoError("unsupported modelled distribution version");
    double gamma = detail::get<double>(in);
    long r0 = long(detail::get<std::int64_t>(in)), r1 = long(detail::get<std::int64_t>(in));
    if (detail::get<std::int64_t>(in) != Z.grid().cols()) throw IoError("column count differs from the model grid");
    std::vector<int> sec(detail::get<std::uint32_t>(in));
    for (auto& s : sec) {
      std::string id(detail::get<std::uint32_t>(in), '\0');
      in.read(id.data(), std::streamsize(id.size()));
      s = Z.structure().index(id);
    }
    ModelledDistribution f(Z, gamma, sec, r0, r1);
    // planes are stored in the file's sector order
    std::vector<double> raw(f.c_.size());
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(sizeof(double) * raw.size()));
    if (!in) throw IoError("truncated modelled distribution");
    std::vector<int> order = sec;
    for (std::size_t q = 0; q < order.size(); ++q)
      std::copy_n(raw.data() + q * f.points(), f.points(),
                  f.c_.data() + std::size_t(f.slot_[std::size_t(order[q])]) * f.points());
    return f;
  }

 private:
  std::size_t offset(const Point& z) const {
    if (!has_row(z.m)) throw ModelledError("point outside the modelled distribution's rows");
    return std::size_t((z.m - r0_) * grid().cols() + wrap(z.j, grid().cols()));
  }

  DiscreteModel Z_;
  double gamma_ = 0.0;
  std::vector<int> sector_;
  std::vector<int> slot_;
  long r0_ = 0, r1_ = -1;
  std::vector<double> c_;
};

// ---- pair sampling ---------------------------------------------------------------

/// Lattice points of K: t in [t0, t1], x in [x0, x1).
inline std::vector<Point> box_points(const Grid& g, const Box& K) {
  std::vector<Point> out;
  long m0 = long(std::ceil(K.t0 / g.dt() - 1e-9)), m1 = long(std::floor(K.t1 / g.dt() + 1e-9));
  long j0 = long(std::ceil(K.x0 / g.dx() - 1e-9)), j1 = long(std::ceil(K.x1 / g.dx() - 1e-9)) - 1;
  for (long m = m0; m <= m1; ++m)
    for (long j = j0; j <= j1; ++j) out.push_back({m, j});
  return out;
}

struct PairPlan {
  Box box{0.0, 0.25, 0.0, 1.0};
  std::size_t max_pairs = 100000;
  std::uint64_t seed = 1;
};

using PairFilter = std::function<bool(const Point&, const Point&)>;

/// Ordered pairs (z, y) of K with dmin <= ||y - z||_s <= dmax (dmin excluded when strict). All pairs when few
/// enough, else a seeded sample with equal quotas per dyadic distance shell.
inline std::vector<std::pair<Point, Point>> sample_pairs(const Grid& g, const PairPlan& plan, double dmin, double dmax,
                                                         bool strict = false, const PairFilter& keep = {}) {
  auto pts = box_points(g, plan.box);
  std::vector<std::pair<Point, Point>> out;
  if (pts.empty()) return out;
  auto ok = [&](const Point& z, const Point& y) {
    if (z == y) return false;
    double d = g.distance(z, y);
    if (strict ? d <= dmin * (1.0 + 1e-12) : d < dmin * (1.0 - 1e-12)) return false;
    if (d > dmax * (1.0 + 1e-12)) return false;
    return !keep || keep(z, y);
  };
  double n = double(pts.size());
  if (n * n <= 4.0 * double(plan.max_pairs)) {
    for (const auto& z : pts)
      for (const auto& y : pts)
        if (ok(z, y)) out.push_back({z, y});
    if (out.size() <= plan.max_pairs) return out;
    out.clear();
  }
  const Scaling& s = g.scaling();
  long m0 = pts.front().m, m1 = pts.back().m, j0 = pts.front().j, j1 = pts.back().j;
  std::vector<double> shells;
  for (double r = std::max(dmax, 1e-300); r >= dmin * 0.5 && r > 0.25 * g.eps(); r *= 0.5) shells.push_back(r);
  std::mt19937_64 rng(plan.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  std::size_t quota = std::max<std::size_t>(1, plan.max_pairs / std::max<std::size_t>(1, shells.size()));
  for (double r : shells) {
    long am = std::max(1L, long(std::pow(r, s.t) / g.dt())), aj = std::max(1L, long(std::pow(r, s.x) / g.dx()));
    std::uniform_int_distribution<long> dm(-am, am), dj(-aj, aj);
    std::size_t got = 0;
    for (std::size_t tries = 0; got < quota && tries < 40 * quota; ++tries) {
      Point z = pts[pick(rng)];
      Point y{z.m + dm(rng), z.j + dj(rng)};
      if (y.m < m0 || y.m > m1 || y.j < j0 || y.j > j1) continue;
      double d = g.distance(z, y);
      if (d > r * (1.0 + 1e-12) || d <= 0.5 * r) continue;
      if (!ok(z, y)) continue;
      out.push_back({z, y});
      ++got;
    }
  }
  return out;
}

// ---- seminorms -------------------------------------------------------------------

inline void require_rows(const ModelledDistribution& f, const Box& K) {
  const Grid& g = f.grid();
  if (!f.has_row(long(std::ceil(K.t0 / g.dt() - 1e-9))) || !f.has_row(long(std::floor(K.t1 / g.dt() + 1e-9))))
    throw ModelledError("box outside the modelled distribution's rows");
}

/// sup_beta ||v||_beta / scale(beta) over levels below gamma.
inline double level_ratio(const RegularityStructure& S, const StructureVector& v, double gamma,
                          const std::function<double(double)>& scale) {
  double r = 0.0;
  for (double beta : S.levels()) {
    if (beta >= gamma - RegularityStructure::tol) break;
    double n = S.norm(v, beta);
    if (n > 0.0) r = std::max(r, n / scale(beta));
  }
  return r;
}

struct SeminormParts {
  double large = 0.0;   // eps <= ||y - z|| <= 1
  double small = 0.0;   // ||y - z|| < eps, eps^{beta - gamma} weights
  double direct = 0.0;  // sup ||f(z)||_beta (reported only)
  std::size_t pairs = 0;
  double total() const { return large + small; }
};

/// Large-scale D^gamma ratio plus the purely discrete small-scale seminorm; with `g` the distance to g.
inline SeminormParts dgamma_parts(const ModelledDistribution& f, const ModelledDistribution* h, double gamma,
                                  const PairPlan& plan) {
  require_rows(f, plan.box);
  const Grid& grid = f.grid();
  const auto& S = f.structure();
  double eps = grid.eps();
  if (h) {
    require_rows(*h, plan.box);
    if (std::abs(h->gamma() - f.gamma()) > 1e-12) throw ModelledError("distance needs equal gamma");
    if (h->grid().eps() != grid.eps() || h->grid().cols() != grid.cols()) throw ModelledError("distance needs one lattice");
  }
  auto diff = [&](const Point& z, const Point& y) {
    StructureVector v = f.at(z) - f.transported(z, y);
    if (h) v -= h->at(z) - h->transported(z, y);
    return v;
  };
  SeminormParts P;
  for (const auto& [z, y] : sample_pairs(grid, plan, eps, 1.0)) {
    double d = grid.distance(z, y);
    P.large = std::max(P.large, level_ratio(S, diff(z, y), gamma, [&](double b) { return std::pow(d, gamma - b); }));
    ++P.pairs;
  }
  for (const auto& z : box_points(grid, plan.box)) {
    StructureVector v = f.at(z);
    if (h) v -= h->at(z);
    P.direct = std::max(P.direct, level_ratio(S, v, gamma, [](double) { return 1.0; }));
    for (auto [a, b] : small_offsets(grid, eps)) {
      Point y{z.m + a, z.j + b};
      if (!f.has_row(y.m)) continue;
      P.small = std::max(P.small, level_ratio(S, diff(z, y), gamma, [&](double be) { return std::pow(eps, gamma - be); }));
    }
  }
  return P;
}

inline double dgamma_seminorm(const ModelledDistribution& f, double gamma, const PairPlan& plan = {}) {
  return dgamma_parts(f, nullptr, gamma, plan).total();
}

inline double dgamma_distance(const ModelledDistribution& f, const ModelledDistribution& g, double gamma,
                              const PairPlan& plan = {}) {
  return dgamma_parts(f, &g, gamma, plan).total();
}

/// Weight for singularities on P = {t = 0}.
struct WeightSpec {
  double eta = 0.0;
  double codim = 2.0;  // s_t
};

/// ||z||_P = 1 ^ d_s(z, P) for P = {t = 0}.
inline double p_norm(const Grid& g, const Point& z) {
  return std::min(1.0, std::pow(std::abs(z.m * g.dt()), 1.0 / g.scaling().t));
}

struct WeightedParts {
  double direct = 0.0;  // ||f(z)||_beta / ||z||_P^{(eta - beta) ^ 0} over ||z||_P >= eps
  double large = 0.0;   // K_P pairs, eps <= ||y - z|| <= 1
  double small = 0.0;   // ||z||_P < eps and K_P pairs closer than eps
  std::size_t pairs = 0;
  double total() const { return direct + large + small; }
};

/// Every term of the weighted seminorm, reported as sink(part, value, latest time of the points involved).
enum class WeightedPart { direct, large, small };
using WeightedSink = std::function<void(WeightedPart, double, double)>;

inline std::size_t weighted_terms(const ModelledDistribution& f, const ModelledDistribution* h, double gamma,
                                  const WeightSpec& w, const PairPlan& plan, const WeightedSink& sink) {
  if (w.eta > gamma + 1e-12) throw ModelledError("weight eta exceeds gamma");
  require_rows(f, plan.box);
  if (h) require_rows(*h, plan.box);
  const Grid& grid = f.grid();
  const auto& S = f.structure();
  double eps = grid.eps();
  auto pn = [&](const Point& z) { return p_norm(grid, z); };
  auto in_KP = [&](const Point& z, const Point& y) {
    if (z.m == 0 || y.m == 0) return false;
    return grid.distance(z, y) <= std::min(pn(z), pn(y)) * (1.0 + 1e-12);
  };
  auto val = [&](const Point& z) {
    StructureVector v = f.at(z);
    if (h) v -= h->at(z);
    return v;
  };
  auto diff = [&](const Point& z, const Point& y) {
    StructureVector v = f.at(z) - f.transported(z, y);
    if (h) v -= h->at(z) - h->transported(z, y);
    return v;
  };
  auto later = [&](const Point& z, const Point& y) { return grid.time(std::max(z.m, y.m)); };
  for (const auto& z : box_points(grid, plan.box)) {
    if (z.m == 0) continue;
    double nz = pn(z);
    auto v = val(z);
    if (nz >= eps * (1.0 - 1e-12))
      sink(WeightedPart::direct,
           level_ratio(S, v, gamma, [&](double b) { return std::pow(nz, std::min(w.eta - b, 0.0)); }), grid.time(z.m));
    else
      sink(WeightedPart::small, level_ratio(S, v, gamma, [&](double b) {
             return std::pow(std::max(nz, eps), std::min(w.eta - b, 0.0));
           }), grid.time(z.m));
    for (auto [a, b] : small_offsets(grid, eps)) {
      Point y{z.m + a, z.j + b};
      if (!f.has_row(y.m) || !in_KP(z, y)) continue;
      double nyz = std::max(std::min(nz, pn(y)), eps);
      sink(WeightedPart::small, level_ratio(S, diff(z, y), gamma, [&](double be) {
             return std::pow(eps, gamma - be) * std::pow(nyz, w.eta - gamma);
           }), later(z, y));
    }
  }
  std::size_t pairs = 0;
  for (const auto& [z, y] : sample_pairs(grid, plan, eps, 1.0, false, in_KP)) {
    double d = grid.distance(z, y), nyz = std::min(pn(z), pn(y));
    sink(WeightedPart::large, level_ratio(S, diff(z, y), gamma, [&](double b) {
           return std::pow(d, gamma - b) * std::pow(nyz, w.eta - gamma);
         }), later(z, y));
    ++pairs;
  }
  return pairs;
}

inline WeightedParts weighted_parts(const ModelledDistribution& f, const ModelledDistribution* h, double gamma,
                                    const WeightSpec& w, const PairPlan& plan) {
  WeightedParts P;
  P.pairs = weighted_terms(f, h, gamma, w, plan, [&](WeightedPart part, double v, double) {
    double& slot = part == WeightedPart::direct ? P.direct : (part == WeightedPart::large ? P.large : P.small);
    slot = std::max(slot, v);
  });
  return P;
}

inline double weighted_seminorm(const ModelledDistribution& f, double gamma, const WeightSpec& w,
                                const PairPlan& plan = {}) {
  return weighted_parts(f, nullptr, gamma, w, plan).total();
}

inline double weighted_distance(const ModelledDistribution& f, const ModelledDistribution& g, double gamma,
                                const WeightSpec& w, const PairPlan& plan = {}) {
  return weighted_parts(f, &g, gamma, w, plan).total();
}

// ---- algebraic operations ----------------------------------------------------------

inline void require_compatible(const ModelledDistribution& f, const ModelledDistribution& g) {
  if (f.structure().size() != g.structure().size() || !f.grid().same_layout(g.grid()))
    throw ModelledError("modelled distributions live on different models or grids");
  if (f.first_row() != g.first_row() || f.last_row() != g.last_row())
    throw ModelledError("modelled distributions cover different rows");
}

/// Symbols reachable as products of the two sectors below gamma_out.
inline std::vector<int> product_sector(const RegularityStructure& S, const std::vector<int>& a,
                                       const std::vector<int>& b, double gamma_out) {
  std::set<int> out;
  for (int i : a)
    for (int j : b) {
      double h = S.symbol(std::size_t(i)).homogeneity + S.symbol(std::size_t(j)).homogeneity;
      if (h >= gamma_out - RegularityStructure::tol) continue;
      int k = S.product(std::size_t(i), std::size_t(j));
      if (k < 0)
        throw ModelledError("missing product entry " + S.symbol(std::size_t(i)).id + " * " + S.symbol(std::size_t(j)).id);
      out.insert(k);
    }
  return {out.begin(), out.end()};
}

/// (f * g)(z) = Q_{<gamma_out}(f(z) g(z)).
inline ModelledDistribution multiply(const ModelledDistribution& f, const ModelledDistribution& g, double gamma_out) {
  require_compatible(f, g);
  const auto& S = f.structure();
  ModelledDistribution out(f.model(), gamma_out, product_sector(S, f.sector(), g.sector(), gamma_out), f.first_row(),
                           f.last_row());
  std::vector<std::tuple<int, int, int>> terms;
  for (int i : f.sector())
    for (int j : g.sector())
      if (S.symbol(std::size_t(i)).homogeneity + S.symbol(std::size_t(j)).homogeneity < gamma_out - RegularityStructure::tol)
        terms.emplace_back(i, j, S.product(std::size_t(i), std::size_t(j)));
  std::size_t n = f.points();
  std::vector<double*> dst;
  for (auto [i, j, k] : terms) dst.push_back(out.plane(k));
  for (std::size_t t = 0; t < terms.size(); ++t) {
    auto [i, j, k] = terms[t];
    const double *a = f.plane(i), *b = g.plane(j);
    for (std::size_t p = 0; p < n; ++p) dst[t][p] += a[p] * b[p];
  }
  return out;
}

/// Natural output level (gamma_1 + alpha_2) ^ (gamma_2 + alpha_1).
inline double product_gamma(const ModelledDistribution& f, const ModelledDistribution& g) {
  return std::min(f.gamma() + g.regularity(), g.gamma() + f.regularity());
}

/// a * f + b * g on the union of the sectors.
inline ModelledDistribution combine(double a, const ModelledDistribution& f, double b, const ModelledDistribution& g) {
  require_compatible(f, g);
  std::vector<int> sec = f.sector();
  sec.insert(sec.end(), g.sector().begin(), g.sector().end());
  double gamma = std::min(f.gamma(), g.gamma());
  std::vector<int> keep;
  for (int i : sec)
    if (f.structure().symbol(std::size_t(i)).homogeneity < gamma - RegularityStructure::tol) keep.push_back(i);
  ModelledDistribution out(f.model(), gamma, keep, f.first_row(), f.last_row());
  std::size_t n = f.points();
  for (int i : out.sector()) {
    double* d = out.plane(i);
    if (const double* p = f.plane(i))
      for (std::size_t q = 0; q < n; ++q) d[q] += a * p[q];
    if (const double* p = g.plane(i))
      for (std::size_t q = 0; q < n; ++q) d[q] += b * p[q];
  }
  return out;
}

/// Smooth scalar function with derivatives: F(u, k) = F^{(k)}(u).
using SmoothFunction = std::function<double(double u, int k)>;

inline SmoothFunction power_function(int p) {
  return [p](double u, int k) {
    if (k > p) return 0.0;
    double c = 1.0;
    for (int i = 0; i < k; ++i) c *= double(p - i);
    return c * ipow(u, p - k);
  };
}

/// F_hat(f)(z) = Q_{<gamma} sum_k F^{(k)}(f_1(z)) / k! f~(z)^{*k}, f~ = f - f_1 1.
inline ModelledDistribution compose_smooth(const SmoothFunction& F, const ModelledDistribution& f, double gamma) {
  const auto& S = f.structure();
  int one = S.unit();
  double zeta = std::numeric_limits<double>::infinity();
  bool has_one = false;
  for (int i : f.sector()) {
    if (i == one) {
      has_one = true;
      continue;
    }
    zeta = std::min(zeta, S.symbol(std::size_t(i)).homogeneity);
  }
  if (!has_one || zeta <= RegularityStructure::tol) throw ModelledError("composition needs a function-like sector");
  int kmax = std::isinf(zeta) ? 0 : int(std::floor(gamma / zeta + 1e-12));
  std::vector<int> rest;
  for (int i : f.sector())
    if (i != one) rest.push_back(i);
  // sectors of the powers of f~
  std::vector<std::vector<int>> pw{{one}};
  for (int k = 1; k <= kmax; ++k) pw.push_back(product_sector(S, pw.back(), rest, gamma));
  std::set<int> sec;
  for (const auto& p : pw) sec.insert(p.begin(), p.end());
  ModelledDistribution out(f.model(), gamma, {sec.begin(), sec.end()}, f.first_row(), f.last_row());
  std::vector<double> kf(std::size_t(kmax + 1), 1.0);
  for (int k = 1; k <= kmax; ++k) kf[std::size_t(k)] = kf[std::size_t(k - 1)] * k;
  for (long m = f.first_row(); m <= f.last_row(); ++m)
    for (long j = 0; j < f.grid().cols(); ++j) {
      Point z{m, j};
      StructureVector v = f.at(z);
      double a = v[std::size_t(one)];
      v[std::size_t(one)] = 0.0;
      StructureVector acc = S.zero(gamma), p = S.basis(std::size_t(one));
      for (int k = 0; k <= kmax; ++k) {
        if (k > 0) p = S.multiply(p, v, gamma);
        double c = F(a, k) / kf[std::size_t(k)];
        if (c != 0.0) acc += c * p;
      }
      out.set(z, acc);
    }
  return out;
}

/// Zero for t <= 0 (the lifted indicator of positive times).
inline ModelledDistribution positive_part(const ModelledDistribution& f) {
  ModelledDistribution out = f;
  std::size_t M = std::size_t(f.grid().cols());
  for (int i : f.sector()) {
    double* d = out.plane(i);
    for (long m = f.first_row(); m <= std::min(0L, f.last_row()); ++m)
      std::fill_n(d + std::size_t(m - f.first_row()) * M, M, 0.0);
  }
  return out;
}

// ---- lifts -----------------------------------------------------------------------

/// Taylor lift sum_{|k|_s < gamma} D^k g(z) / k! X^k; dg(t, x, k) returns D^k g.
inline ModelledDistribution polynomial_lift(const DiscreteModel& Z, double gamma, long r0, long r1,
                                            const std::function<double(double, double, const MultiIndex&)>& dg) {
  const auto& S = Z.structure();
  const Grid& g = Z.grid();
  std::vector<int> sec;
  std::vector<MultiIndex> ks;
  for (const auto& k : multi_indices_below(gamma, g.scaling())) {
    int i = S.polynomial(k);
    if (i < 0) throw ModelledError("structure lacks the polynomial symbols below gamma");
    sec.push_back(i);
    ks.push_back(k);
  }
  ModelledDistribution f(Z, gamma, sec, r0, r1);
  for (long m = r0; m <= r1; ++m)
    for (long j = 0; j < g.cols(); ++j)
      for (std::size_t q = 0; q < ks.size(); ++q)
        f.set_coefficient(sec[q], {m, j}, dg(g.time(m), g.space(j), ks[q]) / factorial(ks[q]));
  return f;
}

/// Constant c times one symbol.
inline ModelledDistribution symbol_lift(const DiscreteModel& Z, const std::string& id, double gamma, long r0, long r1,
                                        double c = 1.0) {
  int i = Z.structure().index(id);
  ModelledDistribution f(Z, gamma, {i}, r0, r1);
  for (long m = r0; m <= r1; ++m)
    for (long j = 0; j < Z.grid().cols(); ++j) f.set_coefficient(i, {m, j}, c);
  return f;
}

// ---- abstract gradient -------------------------------------------------------------

/// D X0^a X1^b E^e = sum_{l < b} C(b, l) X0^a X1^l E^{e + b - l - 1} (spatial direction).
inline std::vector<std::pair<Monomial, double>> abstract_gradient(const Monomial& m) {
  if (!m.factors.empty()) throw ModelledError("abstract gradient is defined on polynomial and E symbols only");
  std::vector<std::pair<Monomial, double>> out;
  for (int l = 0; l < m.x.x; ++l) out.push_back({Monomial{{m.x.t, l}, m.e + m.x.x - l - 1, {}}, binomial(m.x.x, l)});
  return out;
}

/// max |(D^eps Pi_z tau)(y) - (Pi_z D tau)(y)| over the given points, with D^eps the forward difference in x.
inline double gradient_compatibility(const DiscreteModel& Z, const std::vector<int>& sector,
                                     const std::vector<Point>& zs, const std::vector<Point>& ys) {
  const auto& S = Z.structure();
  double h = Z.grid().dx(), worst = 0.0;
  for (int tau : sector) {
    auto D = abstract_gradient(S.symbol(std::size_t(tau)).mono);
    for (const auto& z : zs)
      for (const auto& y : ys) {
        double lhs = (Z.pi(std::size_t(tau), z, {y.m, y.j + 1}) - Z.pi(std::size_t(tau), z, y)) / h, rhs = 0.0;
        for (const auto& [mono, c] : D) {
          int i = S.find(mono);
          if (i < 0) throw ModelledError("structure lacks " + S.id_of(mono) + " for the gradient");
          rhs += c * Z.pi(std::size_t(i), z, y);
        }
        worst = std::max(worst, std::abs(lhs - rhs));
      }
  }
  return worst;
}

/// (D f)(z) = D f(z), at level gamma - s_x; checks compatibility of the model first.
inline ModelledDistribution differentiate(const ModelledDistribution& f, double tol = 1e-10) {
  const auto& S = f.structure();
  const Grid& g = f.grid();
  std::vector<Point> zs{{f.first_row(), 0}, {f.last_row(), g.cols() / 2}}, ys{{f.first_row(), 1}, {f.last_row(), 3}};
  double res = gradient_compatibility(f.model(), f.sector(), zs, ys);
  if (res > tol) throw ModelledError("model incompatible with the discrete gradient (residual " + std::to_string(res) + ")");
  double gamma = f.gamma() - g.scaling().x;
  std::vector<std::vector<std::pair<int, double>>> map(S.size());
  std::set<int> sec;
  for (int i : f.sector())
    for (const auto& [mono, c] : abstract_gradient(S.symbol(std::size_t(i)).mono)) {
      int k = S.find(mono);
      if (k < 0) throw ModelledError("structure lacks " + S.id_of(mono) + " for the gradient");
      if (S.symbol(std::size_t(k)).homogeneity >= gamma - RegularityStructure::tol) continue;
      map[std::size_t(i)].push_back({k, c});
      sec.insert(k);
    }
  ModelledDistribution out(f.model(), gamma, {sec.begin(), sec.end()}, f.first_row(), f.last_row());
  std::size_t n = f.points();
  for (int i : f.sector())
    for (auto [k, c] : map[std::size_t(i)]) {
      const double* a = f.plane(i);
      double* d = out.plane(k);
      for (std::size_t p = 0; p < n; ++p) d[p] += c * a[p];
    }
  return out;
}

}  // namespace regstruct
