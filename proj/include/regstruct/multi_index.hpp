#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace regstruct {

/// Parabolic scaling for (time, space). |s| = s_t + s_x.
struct Scaling {
  int t = 2;
  int x = 1;
  int total() const { return t + x; }
  bool operator==(const Scaling&) const = default;
};

/// Multi-index stored as (time exponent, space exponent).
struct MultiIndex {
  int t = 0;
  int x = 0;

  int degree(const Scaling& s) const { return s.t * t + s.x * x; }
  bool is_zero() const { return t == 0 && x == 0; }
  bool dominated_by(const MultiIndex& o) const { return t <= o.t && x <= o.x; }
  MultiIndex operator+(const MultiIndex& o) const { return {t + o.t, x + o.x}; }
  MultiIndex operator-(const MultiIndex& o) const { return {t - o.t, x - o.x}; }
  bool operator==(const MultiIndex&) const = default;
  auto operator<=>(const MultiIndex&) const = default;
};

inline double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

inline double factorial(const MultiIndex& k) { return factorial(k.t) * factorial(k.x); }

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline double binomial(const MultiIndex& n, const MultiIndex& k) {
  return binomial(n.t, k.t) * binomial(n.x, k.x);
}

inline double ipow(double base, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

/// h^k for a displacement h = (ht, hx).
inline double monomial(double ht, double hx, const MultiIndex& k) {
  return ipow(ht, k.t) * ipow(hx, k.x);
}

/// All multi-indices with |k|_s < bound (strict), ordered by degree then time exponent.
inline std::vector<MultiIndex> multi_indices_below(double bound, const Scaling& s) {
  std::vector<MultiIndex> out;
  for (int deg = 0; deg < bound + 1e-12; ++deg) {
    for (int kt = 0; s.t * kt <= deg; ++kt) {
      int rest = deg - s.t * kt;
      if (rest % s.x != 0) continue;
      MultiIndex k{kt, rest / s.x};
      if (k.degree(s) < bound - 1e-12) out.push_back(k);
    }
  }
  return out;
}

/// All multi-indices with |k|_s <= bound.
inline std::vector<MultiIndex> multi_indices_upto(double bound, const Scaling& s) {
  return multi_indices_below(std::floor(bound + 1e-12) + 0.5, s);
}

}  // namespace regstruct
