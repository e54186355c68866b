#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fft.hpp"
#include "grid.hpp"
#include "multi_index.hpp"

namespace regstruct {

class KernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Signed column offset in (-M/2, M/2].
inline long signed_col(long dj, long M) {
  long r = wrap(dj, M);
  return r > M / 2 ? r - M : r;
}

/// Rows 0..rows-1 of the periodic semi-discrete heat kernel, G(m dt, j dx) = sum_k exp(-lambda_k m dt) e^{2 pi i k j/M},
/// lambda_k = (4/dx^2) sin^2(pi k / M). Row 0 is left at zero: the kernel only reads strictly earlier times.
inline KernelRows heat_green(const Grid& g, long rows) {
  long M = g.cols();
  KernelRows G(rows, M);
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(M / 2 + 1));
  std::vector<double> out(static_cast<std::size_t>(M));
  auto plan =
      fftw_plan_dft_c2r_1d(int(M), reinterpret_cast<fftw_complex*>(spec.data()), out.data(), FFTW_ESTIMATE);
  std::vector<double> lam(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) {
    double s = std::sin(M_PI * double(k) / double(M));
    lam[k] = 4.0 / (g.dx() * g.dx()) * s * s;
  }
  for (long m = 1; m < rows; ++m) {
    double t = m * g.dt();
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] = std::exp(-lam[k] * t);
    fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(spec.data()), out.data());
    std::copy(out.begin(), out.end(), G.v.begin() + m * M);
  }
  fftw_destroy_plan(plan);
  return G;
}

/// Smooth parabolic size (|t|^{p/s_t} + |x|^{p/s_x})^{1/p} with p = 2 s_t s_x, dominating the max-norm.
inline double smooth_size(double t, double x, const Scaling& s = {}) {
  double p = 2.0 * s.t * s.x;
  return std::pow(std::pow(std::abs(t), p / s.t) + std::pow(std::abs(x), p / s.x), 1.0 / p);
}

/// Psi(log2 rho): the dyadic partition sum_n Psi~(2^n rho) = 1 on rho > 0.
inline double psi_tilde(double rho) { return rho > 0.0 ? psi(std::log2(rho)) : 0.0; }

/// Cutoff of slice n: Psi~(2^{n+2} rho), supported in rho in [2^{-n-3}, 2^{-n-1}].
inline double slice_cutoff(int n, double rho) { return psi_tilde(std::ldexp(rho, n + 2)); }

/// Tail sum_{m >= n+2} Psi~(2^m rho): everything at scales at most 2^{-n-1}.
inline double tail_cutoff(int n, double rho) {
  if (rho <= 0.0) return 1.0;
  if (rho >= std::ldexp(1.0, -n - 1)) return 0.0;
  if (rho <= std::ldexp(1.0, -n - 3)) return 1.0;
  return psi_tilde(std::ldexp(rho, n + 2)) + psi_tilde(std::ldexp(rho, n + 3));
}

/// Centered finite differences: 2nd order in time, 4th order in space.
struct FiniteDifference {
  static std::vector<std::pair<long, double>> time(int k, double h) {
    switch (k) {
      case 0: return {{0, 1.0}};
      case 1: return {{-1, -0.5 / h}, {1, 0.5 / h}};
      case 2: return {{-1, 1.0 / (h * h)}, {0, -2.0 / (h * h)}, {1, 1.0 / (h * h)}};
    }
    throw KernelError("time derivative order above 2 not supported");
  }
  static std::vector<std::pair<long, double>> space(int k, double h) {
    switch (k) {
      case 0: return {{0, 1.0}};
      case 1: {
        double c = 1.0 / (12.0 * h);
        return {{-2, c}, {-1, -8 * c}, {1, 8 * c}, {2, -c}};
      }
      case 2: {
        double c = 1.0 / (12.0 * h * h);
        return {{-2, -c}, {-1, 16 * c}, {0, -30 * c}, {1, 16 * c}, {2, -c}};
      }
      case 3: {
        double c = 1.0 / (8.0 * h * h * h);
        return {{-3, c}, {-2, -8 * c}, {-1, 13 * c}, {1, -13 * c}, {2, 8 * c}, {3, -c}};
      }
    }
    throw KernelError("space derivative order above 3 not supported");
  }
};

/// D^k applied in the base-point slot: (D^k K)(u) from shifts of the offset u = z - y.
/// Rows beyond the stored range count as zero; one extra row is produced for the forward shift.
inline KernelRows differentiate_kernel(const KernelRows& K, const MultiIndex& k, double dt, double dx) {
  auto st = FiniteDifference::time(k.t, dt);
  auto sx = FiniteDifference::space(k.x, dx);
  KernelRows out(K.L + 1, K.M);
  for (long m = 0; m < out.L; ++m)
    for (auto [a, ca] : st) {
      long src = m + a;
      if (src < 0 || src >= K.L) continue;
      const double* row = K.v.data() + src * K.M;
      double* o = out.v.data() + m * K.M;
      for (long j = 0; j < K.M; ++j) {
        double acc = 0.0;
        for (auto [b, cb] : sx) acc += cb * row[wrap(j + b, K.M)];
        o[j] += ca * acc;
      }
    }
  while (out.L > 1) {
    bool zero = true;
    for (long j = 0; j < out.M && zero; ++j) zero = out(out.L - 1, j) == 0.0;
    if (!zero) break;
    out.L -= 1;
    out.v.resize(std::size_t(out.L * out.M));
  }
  return out;
}

struct KernelOptions {
  double beta = 2.0;
  double sigma = 2.0;   // kill |k|_s <= sigma
  bool correct = true;  // false: raw annular slices (negative control)
};

/// Dyadic decomposition of the heat kernel on the periodic lattice into slices K_0..K_N,
/// K_n = G chi_n - Q_n + Q_{n+1}, where Q_n is a bump times polynomial carrying the moments of
/// G chi_{>=n} up to degree sigma. The remainder G - sum_n K_n is smooth.
class KernelDecomposition {
 public:
  static KernelDecomposition build(const Grid& g, KernelOptions opt = {}) {
    if (std::abs(opt.beta - 2.0) > 1e-12) throw KernelError("heat kernel requires beta = 2");
    KernelDecomposition D;
    D.g_ = g;
    D.opt_ = opt;
    D.N_ = 0;
    while (std::ldexp(1.0, -D.N_) > g.eps() * (1.0 + 1e-12)) ++D.N_;
    D.killed_ = multi_indices_upto(opt.sigma, g.scaling());
    D.rows0_ = long(std::floor(0.25 / g.dt() + 1e-9)) + 2;
    if (2 * long(std::ceil(0.5 / g.dx())) > g.cols() + 1) throw KernelError("spatial period below kernel support");
    D.green_ = heat_green(g, D.rows0_);
    D.assemble();
    return D;
  }

  const Grid& grid() const { return g_; }
  const KernelOptions& options() const { return opt_; }
  int finest() const { return N_; }
  int slice_count() const { return N_ + 1; }
  bool non_anticipative() const { return true; }
  const std::vector<MultiIndex>& killed() const { return killed_; }
  const KernelRows& slice(int n) const { return slices_.at(std::size_t(n)); }
  const KernelRows& total() const { return total_; }
  const KernelRows& green() const { return green_; }
  int corrector_widenings() const { return widenings_; }

  /// eps^{|s|} sum_y K(z, y) (y - z)^k, translation invariant.
  static double moment(const Grid& g, const KernelRows& K, const MultiIndex& k) {
    double acc = 0.0;
    for (long m = 0; m < K.L; ++m)
      for (long j = 0; j < K.M; ++j) {
        double v = K(m, j);
        if (v == 0.0) continue;
        acc += v * monomial(-m * g.dt(), -signed_col(j, K.M) * g.dx(), k);
      }
    return g.cell() * acc;
  }
  double moment(int n, const MultiIndex& k) const { return moment(g_, slice(n), k); }

  /// Largest |moment| over slices and killed multi-indices.
  double killing_residual() const {
    double r = 0.0;
    for (int n = 0; n <= N_; ++n)
      for (const auto& k : killed_) r = std::max(r, std::abs(moment(n, k)));
    return r;
  }

  /// max ||u||_s over offsets where slice n is nonzero.
  double support_radius(int n) const {
    const auto& K = slice(n);
    double r = 0.0;
    for (long m = 0; m < K.L; ++m)
      for (long j = 0; j < K.M; ++j)
        if (K(m, j) != 0.0) r = std::max(r, parabolic_norm(m * g_.dt(), signed_col(j, K.M) * g_.dx(), g_.scaling()));
    return r;
  }

  /// Periodic heat kernel minus the singular part, on rows 0..rows-1.
  KernelRows remainder(long rows) const {
    KernelRows R = rows <= green_.L ? truncate(green_, rows) : heat_green(g_, rows);
    KernelRows neg = total_;
    neg *= -1.0;
    if (neg.L > rows) neg = truncate(neg, rows);
    R += neg;
    return R;
  }

  /// D^k of slice n (n = -1 for the total kernel), memoised.
  const KernelRows& derivative(const MultiIndex& k, int n = -1) const {
    auto key = std::make_tuple(n, k.t, k.x);
    std::lock_guard<std::mutex> hold(*deriv_lock_);
    auto it = deriv_cache_.find(key);
    if (it != deriv_cache_.end()) return it->second;
    const KernelRows& K = n < 0 ? total_ : slice(n);
    return deriv_cache_.emplace(key, differentiate_kernel(K, k, g_.dt(), g_.dx())).first->second;
  }

  static KernelRows truncate(const KernelRows& K, long rows) {
    KernelRows out(rows, K.M);
    long r = std::min(rows, K.L);
    std::copy(K.v.begin(), K.v.begin() + r * K.M, out.v.begin());
    return out;
  }

  // ---- disk cache -----------------------------------------------------------

  std::string cache_key() const {
    std::ostringstream os;
    os.precision(17);
    os << "heat-torus-fd2x4-psi1|" << g_.eps() << "|" << g_.scaling().t << "," << g_.scaling().x << "|"
       << opt_.beta << "|" << opt_.sigma << "|" << opt_.correct << "|" << g_.period();
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : os.str()) h = (h ^ std::uint64_t(static_cast<unsigned char>(c))) * 1099511628211ULL;
    std::ostringstream hex;
    hex << std::hex << h;
    return hex.str();
  }

  /// Build, reusing a cached copy from $REGSTRUCT_CACHE when present.
  static KernelDecomposition cached(const Grid& g, KernelOptions opt = {}) {
    const char* dir = std::getenv("REGSTRUCT_CACHE");
    if (!dir || !*dir) return build(g, opt);
    KernelDecomposition probe;
    probe.g_ = g;
    probe.opt_ = opt;
    std::filesystem::path path = std::filesystem::path(dir) / ("kernel_" + probe.cache_key() + ".bin");
    if (std::filesystem::exists(path)) {
      try {
        return load(g, opt, path.string());
      } catch (const std::exception&) {
        // stale or truncated file: rebuild below
      }
    }
    auto D = build(g, opt);
    std::filesystem::create_directories(dir);
    D.save(path.string());
    return D;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    auto put = [&](const KernelRows& K) {
      std::int64_t L = K.L, M = K.M;
      f.write(reinterpret_cast<const char*>(&L), sizeof L);
      f.write(reinterpret_cast<const char*>(&M), sizeof M);
      f.write(reinterpret_cast<const char*>(K.v.data()), std::streamsize(K.v.size() * sizeof(double)));
    };
    std::int32_t n = N_, w = widenings_;
    f.write("RSKD", 4);
    f.write(reinterpret_cast<const char*>(&n), sizeof n);
    f.write(reinterpret_cast<const char*>(&w), sizeof w);
    put(green_);
    for (const auto& s : slices_) put(s);
  }

  static KernelDecomposition load(const Grid& g, KernelOptions opt, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "RSKD") throw KernelError("not a kernel cache file");
    auto get = [&]() {
      std::int64_t L = 0, M = 0;
      f.read(reinterpret_cast<char*>(&L), sizeof L);
      f.read(reinterpret_cast<char*>(&M), sizeof M);
      if (!f || M != g.cols() || L < 0 || L > Grid::max_time) throw KernelError("kernel cache layout mismatch");
      KernelRows K(L, M);
      f.read(reinterpret_cast<char*>(K.v.data()), std::streamsize(K.v.size() * sizeof(double)));
      if (!f) throw KernelError("truncated kernel cache");
      return K;
    };
    KernelDecomposition D;
    D.g_ = g;
    D.opt_ = opt;
    std::int32_t n = 0, w = 0;
    f.read(reinterpret_cast<char*>(&n), sizeof n);
    f.read(reinterpret_cast<char*>(&w), sizeof w);
    D.N_ = n;
    D.widenings_ = w;
    D.killed_ = multi_indices_upto(opt.sigma, g.scaling());
    D.rows0_ = long(std::floor(0.25 / g.dt() + 1e-9)) + 2;
    D.green_ = get();
    for (int i = 0; i <= n; ++i) D.slices_.push_back(get());
    D.sum_slices();
    return D;
  }

 private:
  Grid g_;
  KernelOptions opt_;
  int N_ = 0;
  int widenings_ = 0;
  long rows0_ = 0;
  std::vector<MultiIndex> killed_;
  KernelRows green_;
  std::vector<KernelRows> slices_;
  KernelRows total_;
  mutable std::map<std::tuple<int, int, int>, KernelRows> deriv_cache_;
  std::shared_ptr<std::mutex> deriv_lock_ = std::make_shared<std::mutex>();

  long slice_rows(int n) const {
    return std::min(rows0_, long(std::floor(std::ldexp(1.0, -2 * n) / g_.dt() + 1e-9)) + 2);
  }

  // Bump times polynomial carrying prescribed moments; time support (0, 4^{-n-1} w^2), space |x| < 2^{-n-1} w.
  KernelRows corrector(int n, const std::vector<double>& target) {
    bool nonzero = false;
    for (double v : target) nonzero |= (v != 0.0);
    KernelRows Q(slice_rows(n), g_.cols());
    if (!nonzero) return Q;
    const std::size_t nk = killed_.size();
    for (int width = 1; width <= 2; width *= 2) {
      double tau = std::ldexp(1.0, -2 * n - 2) * width * width, xi = std::ldexp(1.0, -n - 1) * width;
      std::vector<double> B(Q.v.size(), 0.0);
      for (long m = 0; m < Q.L; ++m) {
        double t = m * g_.dt();
        if (t <= 0.0 || t >= tau) continue;
        double bt = std::exp(-1.0 / (1.0 - std::pow(2.0 * t / tau - 1.0, 2)));
        for (long j = 0; j < Q.M; ++j) {
          double x = signed_col(j, Q.M) * g_.dx();
          if (std::abs(x) >= xi) continue;
          B[std::size_t(m * Q.M + j)] = bt * std::exp(-1.0 / (1.0 - std::pow(x / xi, 2)));
        }
      }
      std::vector<double> A(nk * nk, 0.0);
      for (long m = 0; m < Q.L; ++m)
        for (long j = 0; j < Q.M; ++j) {
          double b = B[std::size_t(m * Q.M + j)];
          if (b == 0.0) continue;
          double ht = -m * g_.dt(), hx = -signed_col(j, Q.M) * g_.dx();
          for (std::size_t a = 0; a < nk; ++a)
            for (std::size_t c = 0; c < nk; ++c)
              A[a * nk + c] += g_.cell() * b * monomial(ht, hx, killed_[a]) * monomial(ht, hx, killed_[c]);
        }
      std::vector<double> coef;
      if (!solve_small(A, target, coef)) {
        ++widenings_;
        continue;
      }
      for (long m = 0; m < Q.L; ++m)
        for (long j = 0; j < Q.M; ++j) {
          double b = B[std::size_t(m * Q.M + j)];
          if (b == 0.0) continue;
          double ht = -m * g_.dt(), hx = -signed_col(j, Q.M) * g_.dx();
          double p = 0.0;
          for (std::size_t c = 0; c < nk; ++c) p += coef[c] * monomial(ht, hx, killed_[c]);
          Q(m, j) = b * p;
        }
      return Q;
    }
    throw KernelError("moment correction system singular at slice " + std::to_string(n));
  }

  // Gaussian elimination with partial pivoting on a scaled copy; false if numerically singular.
  static bool solve_small(std::vector<double> A, std::vector<double> b, std::vector<double>& x) {
    std::size_t n = b.size();
    std::vector<double> scale(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) scale[i] = std::sqrt(std::abs(A[i * n + i]));
    for (std::size_t i = 0; i < n; ++i) {
      if (scale[i] == 0.0) return false;
      for (std::size_t j = 0; j < n; ++j) A[i * n + j] /= scale[i] * scale[j];
      b[i] /= scale[i];
    }
    for (std::size_t c = 0; c < n; ++c) {
      std::size_t p = c;
      for (std::size_t r = c + 1; r < n; ++r)
        if (std::abs(A[r * n + c]) > std::abs(A[p * n + c])) p = r;
      if (std::abs(A[p * n + c]) < 1e-11) return false;
      if (p != c) {
        for (std::size_t j = 0; j < n; ++j) std::swap(A[p * n + j], A[c * n + j]);
        std::swap(b[p], b[c]);
      }
      for (std::size_t r = c + 1; r < n; ++r) {
        double f = A[r * n + c] / A[c * n + c];
        for (std::size_t j = c; j < n; ++j) A[r * n + j] -= f * A[c * n + j];
        b[r] -= f * b[c];
      }
    }
    x.assign(n, 0.0);
    for (std::size_t c = n; c-- > 0;) {
      double s = b[c];
      for (std::size_t j = c + 1; j < n; ++j) s -= A[c * n + j] * x[j];
      x[c] = s / A[c * n + c];
    }
    for (std::size_t i = 0; i < n; ++i) x[i] /= scale[i];
    return true;
  }

  void assemble() {
    const Scaling& s = g_.scaling();
    // raw annular slices and tail moments
    std::vector<KernelRows> raw;
    for (int n = 0; n <= N_; ++n) {
      KernelRows K(slice_rows(n), g_.cols());
      for (long m = 1; m < K.L; ++m)
        for (long j = 0; j < K.M; ++j) {
          double rho = smooth_size(m * g_.dt(), signed_col(j, K.M) * g_.dx(), s);
          double chi = n < N_ ? slice_cutoff(n, rho) : tail_cutoff(n, rho);
          if (chi != 0.0) K(m, j) = green_(m, j) * chi;
        }
      raw.push_back(std::move(K));
    }
    if (!opt_.correct) {
      slices_ = std::move(raw);
      sum_slices();
      return;
    }
    std::vector<std::vector<double>> tail(std::size_t(N_ + 2), std::vector<double>(killed_.size(), 0.0));
    for (int n = N_; n >= 0; --n)
      for (std::size_t a = 0; a < killed_.size(); ++a)
        tail[std::size_t(n)][a] = tail[std::size_t(n + 1)][a] + moment(g_, raw[std::size_t(n)], killed_[a]);
    std::vector<KernelRows> Q;
    for (int n = 0; n <= N_; ++n) Q.push_back(corrector(n, tail[std::size_t(n)]));
    for (int n = 0; n <= N_; ++n) {
      KernelRows K = raw[std::size_t(n)];
      K -= Q[std::size_t(n)];
      if (n < N_) K += Q[std::size_t(n + 1)];
      slices_.push_back(std::move(K));
    }
    sum_slices();
  }

  void sum_slices() {
    total_ = KernelRows(rows0_, g_.cols());
    for (const auto& s : slices_) total_ += s;
  }
};

/// Jet coefficients Q_k = (1/k!) (D^k K_n * F)(z) for |k|_s < zeta + beta; slice n = -1 uses the full kernel.
struct TaylorJet {
  Point base;
  std::vector<MultiIndex> index;
  std::vector<double> coeff;

  double operator[](const MultiIndex& k) const {
    for (std::size_t i = 0; i < index.size(); ++i)
      if (index[i] == k) return coeff[i];
    return 0.0;
  }
};

inline TaylorJet taylor_lift(const KernelDecomposition& D, const GridFunction& F, int n, double zeta, const Point& z) {
  const Grid& g = F.grid();
  if (!g.has_row(z.m)) throw KernelError("jet base point outside the grid window");
  TaylorJet J;
  J.base = z;
  J.index = multi_indices_below(zeta + D.options().beta, g.scaling());
  for (const auto& k : J.index) J.coeff.push_back(convolve_at(D.derivative(k, n), F, z.m, z.j) / factorial(k));
  return J;
}

}  // namespace regstruct
