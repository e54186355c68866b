#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "multi_index.hpp"

namespace regstruct {

class StructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SymbolKind { polynomial, noise, integrated, product, epsilon };

inline const char* to_string(SymbolKind k) {
  switch (k) {
    case SymbolKind::polynomial: return "polynomial";
    case SymbolKind::noise: return "noise";
    case SymbolKind::integrated: return "integrated";
    case SymbolKind::product: return "product";
    case SymbolKind::epsilon: return "epsilon";
  }
  return "?";
}

/// Non-polynomial generator: a noise letter or an integrated symbol I(tau).
struct Primitive {
  enum class Type { noise, integrated };
  Type type = Type::noise;
  std::string name;
  std::string integrand;  // id of tau for I(tau)
  double homogeneity = 0.0;
};

/// Every symbol is a monomial X^k E^m prod_p p^{n_p} in the primitives.
struct Monomial {
  MultiIndex x;
  int e = 0;
  std::vector<std::pair<int, int>> factors;  // (primitive index, power), sorted by index

  bool is_polynomial() const { return e == 0 && factors.empty(); }
  bool is_unit() const { return x.is_zero() && e == 0 && factors.empty(); }
  bool operator==(const Monomial&) const = default;
  auto operator<=>(const Monomial&) const = default;

  Monomial operator*(const Monomial& o) const {
    Monomial r;
    r.x = x + o.x;
    r.e = e + o.e;
    std::map<int, int> pw;
    for (auto [p, n] : factors) pw[p] += n;
    for (auto [p, n] : o.factors) pw[p] += n;
    r.factors.assign(pw.begin(), pw.end());
    return r;
  }
};

struct Symbol {
  std::string id;
  double homogeneity = 0.0;
  SymbolKind kind = SymbolKind::polynomial;
  Monomial mono;
};

class RegularityStructure;

/// Coefficient vector over the symbol basis, truncated at `gamma`.
class StructureVector {
 public:
  StructureVector() = default;
  explicit StructureVector(const RegularityStructure& s,
                           double gamma = std::numeric_limits<double>::infinity());

  std::size_t size() const { return c_.size(); }
  double& operator[](std::size_t i) { return c_[i]; }
  double operator[](std::size_t i) const { return c_[i]; }
  const std::vector<double>& coefficients() const { return c_; }
  std::vector<double>& coefficients() { return c_; }
  double gamma() const { return gamma_; }
  const RegularityStructure* structure() const { return s_; }

  StructureVector& operator+=(const StructureVector& o) {
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  StructureVector& operator-=(const StructureVector& o) {
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  StructureVector& operator*=(double a) {
    for (auto& v : c_) v *= a;
    return *this;
  }
  friend StructureVector operator+(StructureVector a, const StructureVector& b) { return a += b; }
  friend StructureVector operator-(StructureVector a, const StructureVector& b) { return a -= b; }
  friend StructureVector operator*(double a, StructureVector v) { return v *= a; }

 private:
  const RegularityStructure* s_ = nullptr;
  double gamma_ = std::numeric_limits<double>::infinity();
  std::vector<double> c_;
};

/// Linear map on the symbol basis; entry (i, j) is the coefficient of symbol i in G(symbol j).
class GroupElement {
 public:
  GroupElement() = default;
  explicit GroupElement(std::size_t n) : n_(n), m_(n * n, 0.0) {}

  static GroupElement identity(std::size_t n) {
    GroupElement g(n);
    for (std::size_t i = 0; i < n; ++i) g(i, i) = 1.0;
    return g;
  }

  std::size_t dim() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return m_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return m_[i * n_ + j]; }

  void set_column(std::size_t j, const std::vector<double>& col) {
    for (std::size_t i = 0; i < n_; ++i) (*this)(i, j) = col[i];
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> m_;
};

class RegularityStructure {
 public:
  static constexpr double tol = 1e-9;

  const Scaling& scaling() const { return scaling_; }
  double beta() const { return beta_; }
  int smoothness() const { return r_; }
  std::size_t size() const { return symbols_.size(); }
  const std::vector<Symbol>& symbols() const { return symbols_; }
  const Symbol& symbol(std::size_t i) const { return symbols_.at(i); }
  const std::vector<Primitive>& primitives() const { return primitives_; }
  const std::vector<double>& levels() const { return levels_; }
  double min_homogeneity() const { return levels_.empty() ? 0.0 : levels_.front(); }

  int find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? -1 : it->second;
  }
  int index(const std::string& id) const {
    int i = find(id);
    if (i < 0) throw StructureError("unknown symbol " + id);
    return i;
  }
  int find(const Monomial& m) const {
    auto it = by_mono_.find(m);
    return it == by_mono_.end() ? -1 : it->second;
  }
  int unit() const { return find(Monomial{}); }
  int polynomial(const MultiIndex& k) const { return find(Monomial{k, 0, {}}); }

  /// Index of tau*sigma, or -1 if the product is not in the basis.
  int product(std::size_t i, std::size_t j) const {
    return find(symbols_[i].mono * symbols_[j].mono);
  }

  /// Index of I(tau) when tau is non-polynomial; -1 if missing.
  int integrated(std::size_t i) const {
    for (std::size_t p = 0; p < primitives_.size(); ++p)
      if (primitives_[p].type == Primitive::Type::integrated && primitives_[p].integrand == symbols_[i].id)
        return find(Monomial{{}, 0, {{int(p), 1}}});
    return -1;
  }

  int primitive_index(const std::string& name) const {
    for (std::size_t p = 0; p < primitives_.size(); ++p)
      if (primitives_[p].name == name) return int(p);
    return -1;
  }

  double homogeneity(const Monomial& m) const {
    double h = m.x.degree(scaling_) + m.e * scaling_.x;
    for (auto [p, n] : m.factors) h += n * primitives_.at(p).homogeneity;
    return h;
  }

  std::string id_of(const Monomial& m) const {
    std::vector<std::string> parts;
    auto pw = [](const std::string& b, int n) { return n == 1 ? b : b + "^" + std::to_string(n); };
    if (m.x.t > 0) parts.push_back(pw("X0", m.x.t));
    if (m.x.x > 0) parts.push_back(pw("X1", m.x.x));
    if (m.e > 0) parts.push_back(pw("E", m.e));
    for (auto [p, n] : m.factors) parts.push_back(pw(primitives_.at(p).name, n));
    if (parts.empty()) return "1";
    std::string s = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) s += "*" + parts[i];
    return s;
  }

  /// Indices of symbols whose homogeneity equals `level`.
  std::vector<int> level_indices(double level) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < symbols_.size(); ++i)
      if (std::abs(symbols_[i].homogeneity - level) < tol) out.push_back(int(i));
    return out;
  }

  StructureVector zero(double gamma = std::numeric_limits<double>::infinity()) const {
    return StructureVector(*this, gamma);
  }
  StructureVector basis(std::size_t i) const {
    StructureVector v(*this);
    v[i] = 1.0;
    return v;
  }

  /// Q_l v: the component at exactly homogeneity l.
  StructureVector project(const StructureVector& v, double level) const {
    StructureVector out(*this, v.gamma());
    for (std::size_t i = 0; i < size(); ++i)
      if (std::abs(symbols_[i].homogeneity - level) < tol) out[i] = v[i];
    return out;
  }

  /// Drop every symbol with |tau| >= gamma.
  StructureVector truncate(const StructureVector& v, double gamma) const {
    StructureVector out(*this, gamma);
    for (std::size_t i = 0; i < size(); ++i)
      if (symbols_[i].homogeneity < gamma - tol) out[i] = v[i];
    return out;
  }

  /// ||v||_l: max-abs of the coefficients at level l.
  double norm(const StructureVector& v, double level) const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
      if (std::abs(symbols_[i].homogeneity - level) < tol) m = std::max(m, std::abs(v[i]));
    return m;
  }

  /// Truncated product; throws if a needed product is absent from the basis.
  StructureVector multiply(const StructureVector& a, const StructureVector& b, double gamma_out) const {
    StructureVector out(*this, gamma_out);
    for (std::size_t i = 0; i < size(); ++i) {
      if (a[i] == 0.0) continue;
      for (std::size_t j = 0; j < size(); ++j) {
        if (b[j] == 0.0) continue;
        double h = symbols_[i].homogeneity + symbols_[j].homogeneity;
        if (h >= gamma_out - tol) continue;
        int k = product(i, j);
        if (k < 0)
          throw StructureError("missing product entry " + symbols_[i].id + " * " + symbols_[j].id);
        out[k] += a[i] * b[j];
      }
    }
    return out;
  }

  // ---- structure group --------------------------------------------------

  StructureVector apply(const GroupElement& g, const StructureVector& v) const {
    if (g.dim() != size()) throw StructureError("group element basis mismatch");
    StructureVector out(*this, v.gamma());
    for (std::size_t j = 0; j < size(); ++j) {
      if (v[j] == 0.0) continue;
      for (std::size_t i = 0; i < size(); ++i) {
        double gij = g(i, j);
        if (gij == 0.0) continue;
        if (i != j && symbols_[i].homogeneity >= symbols_[j].homogeneity - tol)
          throw StructureError("group element not unipotent-triangular on " + symbols_[j].id);
        out[i] += gij * v[j];
      }
      if (std::abs(g(j, j) - 1.0) > 1e-12)
        throw StructureError("group element not unipotent on " + symbols_[j].id);
    }
    return out;
  }

  GroupElement compose(const GroupElement& a, const GroupElement& b) const {
    if (a.dim() != size() || b.dim() != size()) throw StructureError("group element basis mismatch");
    GroupElement c(size());
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t k = 0; k < size(); ++k) {
        double aik = a(i, k);
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < size(); ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }

  /// Inverse of a unipotent element by back substitution in the homogeneity order.
  GroupElement inverse(const GroupElement& g) const {
    std::size_t n = size();
    GroupElement inv = GroupElement::identity(n);
    // symbols are sorted by homogeneity, so g is upper triangular in index order
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t ii = j; ii-- > 0;) {
        double s = 0.0;
        for (std::size_t k = ii + 1; k <= j; ++k) s += g(ii, k) * inv(k, j);
        inv(ii, j) = -s;
      }
    return inv;
  }

  /// max |Gamma tau - tau| over coefficients at levels >= |tau|.
  double unipotence_defect(const GroupElement& g) const {
    double d = 0.0;
    for (std::size_t j = 0; j < size(); ++j)
      for (std::size_t i = 0; i < size(); ++i)
        if (symbols_[i].homogeneity >= symbols_[j].homogeneity - tol)
          d = std::max(d, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    return d;
  }

  /// Binomial shift Gamma X^k = (X + h)^k, identity on every other symbol.
  GroupElement polynomial_shift(double ht, double hx) const {
    GroupElement g = GroupElement::identity(size());
    for (std::size_t j = 0; j < size(); ++j) {
      const auto& m = symbols_[j].mono;
      if (m.x.is_zero()) continue;
      g(j, j) = 0.0;
      for (int a = 0; a <= m.x.t; ++a)
        for (int b = 0; b <= m.x.x; ++b) {
          Monomial mm = m;
          mm.x = {a, b};
          int i = find(mm);
          double c = binomial(m.x.t, a) * binomial(m.x.x, b) * ipow(ht, m.x.t - a) * ipow(hx, m.x.x - b);
          if (i < 0) {
            if (c != 0.0) throw StructureError("structure not closed under shifts: " + id_of(mm));
            continue;
          }
          g(i, j) += c;
        }
    }
    return g;
  }

  // ---- construction -----------------------------------------------------

  struct Row {
    std::string id;
    double homogeneity = std::numeric_limits<double>::quiet_NaN();
    std::string kind;
  };

  /// Assemble a structure from (id, homogeneity, kind) rows. Noise rows fix the noise homogeneity.
  static RegularityStructure build(const std::vector<Row>& rows, Scaling s = {}, double beta = 2.0,
                                   int r = -1) {
    RegularityStructure S;
    S.scaling_ = s;
    S.beta_ = beta;
    for (const auto& row : rows) {
      if (row.kind == "noise") {
        if (S.primitive_index(row.id) >= 0) throw StructureError("duplicate symbol id " + row.id);
        if (std::isnan(row.homogeneity)) throw StructureError("noise " + row.id + " needs a homogeneity");
        S.primitives_.push_back({Primitive::Type::noise, row.id, "", row.homogeneity});
      }
    }
    std::vector<Monomial> monos;
    for (const auto& row : rows) {
      Monomial m = S.parse(row.id);
      if (std::find(monos.begin(), monos.end(), m) != monos.end())
        throw StructureError("duplicate symbol id " + row.id);
      monos.push_back(m);
      double h = S.homogeneity(m);
      if (!std::isnan(row.homogeneity) && std::abs(h - row.homogeneity) > 1e-9)
        throw StructureError("homogeneity mismatch for " + row.id + ": expected " + std::to_string(h));
      if (!row.kind.empty() && row.kind != to_string(S.kind_of(m)))
        throw StructureError("kind mismatch for " + row.id + ": expected " + to_string(S.kind_of(m)));
    }
    S.assign(monos);
    S.check_polynomial_gaps();
    S.set_smoothness(r);
    return S;
  }

  /// Copy of this structure enlarged by extra symbols (ids parsed against the current primitives,
  /// integrated letters created on demand).
  RegularityStructure with_symbols(const std::vector<std::string>& ids) const {
    RegularityStructure S = *this;
    std::vector<Monomial> monos;
    for (const auto& sym : symbols_) monos.push_back(sym.mono);
    for (const auto& id : ids) {
      Monomial m = S.parse(id);
      if (std::find(monos.begin(), monos.end(), m) != monos.end())
        throw StructureError("symbol already present: " + id);
      monos.push_back(m);
    }
    S.assign(monos);
    S.check_polynomial_gaps();
    return S;
  }

  Monomial parse(const std::string& id) { return parse_product(strip(id)); }

  SymbolKind kind_of(const Monomial& m) const {
    if (m.factors.empty()) return m.e == 0 ? SymbolKind::polynomial : SymbolKind::epsilon;
    if (m.factors.size() == 1 && m.factors[0].second == 1 && m.x.is_zero() && m.e == 0)
      return primitives_[m.factors[0].first].type == Primitive::Type::noise ? SymbolKind::noise
                                                                            : SymbolKind::integrated;
    return SymbolKind::product;
  }

 private:
  Scaling scaling_;
  double beta_ = 2.0;
  int r_ = 1;
  std::vector<Symbol> symbols_;
  std::vector<Primitive> primitives_;
  std::vector<double> levels_;
  std::map<std::string, int> by_id_;
  std::map<Monomial, int> by_mono_;

  static std::string strip(const std::string& s) {
    std::string out;
    for (char c : s)
      if (!std::isspace(static_cast<unsigned char>(c))) out += c;
    return out;
  }

  // split at top-level '*'
  static std::vector<std::string> split_top(const std::string& s) {
    std::vector<std::string> parts;
    int depth = 0;
    std::string cur;
    for (char c : s) {
      if (c == '(') ++depth;
      if (c == ')') --depth;
      if (c == '*' && depth == 0) {
        parts.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (depth != 0) throw StructureError("unbalanced parentheses in " + s);
    parts.push_back(cur);
    return parts;
  }

  Monomial parse_product(const std::string& s) {
    Monomial m;
    if (s == "1") return m;
    for (const auto& f : split_top(s)) {
      std::string base = f;
      int power = 1;
      auto caret = f.rfind('^');
      if (caret != std::string::npos && f.find(')', caret) == std::string::npos) {
        base = f.substr(0, caret);
        power = std::stoi(f.substr(caret + 1));
        if (power < 1) throw StructureError("bad power in " + f);
      }
      Monomial fm;
      if (base == "X0") fm.x.t = power;
      else if (base == "X1") fm.x.x = power;
      else if (base == "E") fm.e = power;
      else if (base == "1") continue;
      else {
        int p = primitive_for(base);
        fm.factors = {{p, power}};
      }
      m = m * fm;
    }
    return m;
  }

  int primitive_for(const std::string& base) {
    int p = primitive_index(base);
    if (p >= 0) return p;
    if (base.size() > 3 && base.rfind("I(", 0) == 0 && base.back() == ')') {
      std::string inner = base.substr(2, base.size() - 3);
      Monomial im = parse_product(inner);
      if (im.is_polynomial()) throw StructureError("I(X^k) vanishes and is not a symbol: " + base);
      std::string inner_id = id_of(im);
      std::string name = "I(" + inner_id + ")";
      p = primitive_index(name);
      if (p >= 0) return p;
      primitives_.push_back({Primitive::Type::integrated, name, inner_id, homogeneity(im) + beta_});
      return int(primitives_.size()) - 1;
    }
    throw StructureError("unknown symbol letter " + base);
  }

  void assign(const std::vector<Monomial>& monos) {
    std::vector<Symbol> syms;
    for (const auto& m : monos) syms.push_back({id_of(m), homogeneity(m), kind_of(m), m});
    std::stable_sort(syms.begin(), syms.end(),
                     [](const Symbol& a, const Symbol& b) { return a.homogeneity < b.homogeneity - tol; });
    symbols_ = std::move(syms);
    by_id_.clear();
    by_mono_.clear();
    levels_.clear();
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      if (by_id_.count(symbols_[i].id)) throw StructureError("duplicate symbol id " + symbols_[i].id);
      by_id_[symbols_[i].id] = int(i);
      by_mono_[symbols_[i].mono] = int(i);
      if (levels_.empty() || symbols_[i].homogeneity > levels_.back() + tol)
        levels_.push_back(symbols_[i].homogeneity);
    }
  }

  void check_polynomial_gaps() const {
    for (const auto& sym : symbols_) {
      const auto& m = sym.mono;
      if (!m.is_polynomial() || m.is_unit()) continue;
      for (MultiIndex d : {MultiIndex{1, 0}, MultiIndex{0, 1}}) {
        if (!d.dominated_by(m.x)) continue;
        if (find(Monomial{m.x - d, 0, {}}) < 0)
          throw StructureError("polynomial degree gap: " + sym.id + " present but " +
                               id_of(Monomial{m.x - d, 0, {}}) + " missing");
      }
    }
  }

  void set_smoothness(int r) {
    double need = std::abs(std::min(0.0, min_homogeneity()));
    if (r < 0) r = std::max(1, int(std::floor(need)) + 1);
    if (double(r) <= need)
      throw StructureError("test-function smoothness r=" + std::to_string(r) + " must exceed |min A|=" +
                           std::to_string(need));
    r_ = r;
  }

  friend struct StructureIO;
};

inline StructureVector::StructureVector(const RegularityStructure& s, double gamma)
    : s_(&s), gamma_(gamma), c_(s.size(), 0.0) {}

/// Subset of the basis; regularity is the lowest homogeneity present.
struct Sector {
  std::vector<int> symbols;
  double regularity = 0.0;
  bool function_like = false;
};

inline Sector make_sector(const RegularityStructure& S, const std::vector<std::string>& ids) {
  Sector v;
  v.regularity = std::numeric_limits<double>::infinity();
  bool has_unit = false;
  for (const auto& id : ids) {
    int i = S.index(id);
    v.symbols.push_back(i);
    v.regularity = std::min(v.regularity, S.symbol(i).homogeneity);
    has_unit |= (i == S.unit());
  }
  std::sort(v.symbols.begin(), v.symbols.end());
  v.function_like = has_unit && std::abs(v.regularity) < RegularityStructure::tol;
  return v;
}

// ---- presets ---------------------------------------------------------------

/// All X^k with |k|_s <= degree.
inline RegularityStructure polynomial_structure(int degree, Scaling s = {}, double beta = 2.0) {
  std::vector<RegularityStructure::Row> rows;
  for (const auto& k : multi_indices_upto(degree, s)) {
    std::string id = "1";
    std::vector<std::string> parts;
    if (k.t) parts.push_back(k.t == 1 ? "X0" : "X0^" + std::to_string(k.t));
    if (k.x) parts.push_back(k.x == 1 ? "X1" : "X1^" + std::to_string(k.x));
    if (!parts.empty()) id = parts.size() == 1 ? parts[0] : parts[0] + "*" + parts[1];
    rows.push_back({id, double(k.degree(s)), "polynomial"});
  }
  return RegularityStructure::build(rows, s, beta);
}

/// X0^a X1^b E^m with 2a + b + m <= degree (one spatial direction).
inline RegularityStructure polynomial_e_structure(int degree, Scaling s = {}, double beta = 2.0) {
  std::vector<RegularityStructure::Row> rows;
  for (const auto& k : multi_indices_upto(degree, s))
    for (int m = 0; k.degree(s) + m * s.x <= degree; ++m) {
      std::vector<std::string> parts;
      if (k.t) parts.push_back(k.t == 1 ? "X0" : "X0^" + std::to_string(k.t));
      if (k.x) parts.push_back(k.x == 1 ? "X1" : "X1^" + std::to_string(k.x));
      if (m) parts.push_back(m == 1 ? "E" : "E^" + std::to_string(m));
      std::string id = "1";
      if (!parts.empty()) {
        id = parts[0];
        for (std::size_t i = 1; i < parts.size(); ++i) id += "*" + parts[i];
      }
      rows.push_back({id, std::numeric_limits<double>::quiet_NaN(), ""});
    }
  return RegularityStructure::build(rows, s, beta);
}

/// {Xi, 1, X0, X1, I(Xi), I(Xi)^2, I(Xi)^3} with |Xi| = -|s|/2 - kappa.
inline RegularityStructure phi4_structure(double kappa = 0.01, Scaling s = {}, double beta = 2.0, int r = -1) {
  double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<RegularityStructure::Row> rows = {
      {"Xi", -0.5 * s.total() - kappa, "noise"}, {"1", 0.0, "polynomial"},   {"X0", nan, "polynomial"},
      {"X1", nan, "polynomial"},                 {"I(Xi)", nan, "integrated"}, {"I(Xi)^2", nan, "product"},
      {"I(Xi)^3", nan, "product"}};
  return RegularityStructure::build(rows, s, beta, r);
}

inline RegularityStructure structure_preset(const std::string& name, double kappa = 0.01, int degree = 2) {
  if (name == "poly") return polynomial_structure(degree);
  if (name == "polyE") return polynomial_e_structure(degree);
  if (name == "phi4") return phi4_structure(kappa);
  throw StructureError("unknown structure preset " + name);
}

// ---- spec files --------------------------------------------------------------
//
// Text format:
//   scaling 2 1
//   beta 2
//   r 2
//   <id>, <homogeneity or ->, <kind>
// Lines starting with '#' are comments.

struct StructureIO {
  static RegularityStructure parse(std::istream& in) {
    Scaling s;
    double beta = 2.0;
    int r = -1;
    std::vector<RegularityStructure::Row> rows;
    std::string line;
    while (std::getline(in, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::istringstream ls(line);
      std::string first;
      if (!(ls >> first)) continue;
      if (first == "scaling") {
        ls >> s.t >> s.x;
        continue;
      }
      if (first == "beta") {
        ls >> beta;
        continue;
      }
      if (first == "r") {
        ls >> r;
        continue;
      }
      std::vector<std::string> cells;
      std::string cell;
      std::istringstream cs(line);
      while (std::getline(cs, cell, ',')) {
        std::string t;
        for (char c : cell)
          if (!std::isspace(static_cast<unsigned char>(c))) t += c;
        cells.push_back(t);
      }
      if (cells.size() != 3) throw StructureError("structure row needs 3 fields: " + line);
      double h = cells[1] == "-" || cells[1].empty() ? std::numeric_limits<double>::quiet_NaN()
                                                     : std::stod(cells[1]);
      rows.push_back({cells[0], h, cells[2]});
    }
    return RegularityStructure::build(rows, s, beta, r);
  }

  static RegularityStructure load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw StructureError("cannot open " + path);
    return parse(f);
  }

  static void write(std::ostream& out, const RegularityStructure& S) {
    out << "scaling " << S.scaling().t << " " << S.scaling().x << "\n";
    out << "beta " << S.beta() << "\n";
    out << "r " << S.smoothness() << "\n";
    out.precision(17);
    for (const auto& sym : S.symbols()) out << sym.id << ", " << sym.homogeneity << ", " << to_string(sym.kind) << "\n";
  }
};

}  // namespace regstruct
