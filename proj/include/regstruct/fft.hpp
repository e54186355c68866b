#pragma once

#include <fftw3.h>

#include <complex>
#include <cstdint>
#include <cstring>
#include <map>
#include <memory>
#include <vector>

#include "grid.hpp"

namespace regstruct {

/// Kernel values K(dm dt, dj dx) for dm = 0..rows-1 (strictly causal offsets start at dm = 1),
/// dj taken modulo the number of columns.
struct KernelRows {
  long L = 0;
  long M = 0;
  std::vector<double> v;

  KernelRows() = default;
  KernelRows(long rows, long cols) : L(rows), M(cols), v(std::size_t(rows * cols), 0.0) {}

  double& operator()(long dm, long dj) { return v[std::size_t(dm * M + wrap(dj, M))]; }
  double operator()(long dm, long dj) const { return v[std::size_t(dm * M + wrap(dj, M))]; }
  double at(long dm, long dj) const { return dm < 0 || dm >= L ? 0.0 : (*this)(dm, dj); }

  KernelRows& operator+=(const KernelRows& o) {
    if (o.M != M) throw GridError("kernel column mismatch");
    if (o.L > L) {
      v.resize(std::size_t(o.L * M), 0.0);
      L = o.L;
    }
    for (std::size_t i = 0; i < o.v.size(); ++i) v[i] += o.v[i];
    return *this;
  }
  KernelRows& operator-=(const KernelRows& o) {
    KernelRows neg = o;
    for (auto& x : neg.v) x = -x;
    return *this += neg;
  }
  KernelRows& operator*=(double a) {
    for (auto& x : v) x *= a;
    return *this;
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL ^ std::uint64_t(L) ^ (std::uint64_t(M) << 32);
    const unsigned char* p = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < v.size() * sizeof(double); ++i) h = (h ^ p[i]) * 1099511628211ULL;
    return h;
  }
};

/// (K * F)(m, j) = dt dx sum_{dm, dj} K(dm, dj) F(m - dm, j - dj), F extended by zero before the window.
inline double convolve_at(const KernelRows& K, const GridFunction& F, long m, long j) {
  const Grid& g = F.grid();
  double acc = 0.0;
  long top = std::min(K.L - 1, m - g.first_row());
  for (long dm = std::max(0L, m - g.last_row()); dm <= top; ++dm) {
    const double* fr = F.row(m - dm);
    const double* kr = K.v.data() + dm * K.M;
    for (long dj = 0; dj < K.M; ++dj) acc += kr[dj] * fr[wrap(j - dj, g.cols())];
  }
  return g.cell() * acc;
}

/// Causal-in-time, periodic-in-space convolutions on one grid. FFT mode zero-pads time; direct mode
/// transforms space only and sums over time offsets, so row m only ever reads rows <= m.
class ConvolutionEngine {
 public:
  enum class Mode { fft, direct };
  using cplx = std::complex<double>;

  ConvolutionEngine(const Grid& g, long max_kernel_rows) : g_(g), Lmax_(max_kernel_rows) {
    Nt_ = g.rows();
    M_ = g.cols();
    P_ = good_size(Nt_ + Lmax_ - 1);
    Mc_ = M_ / 2 + 1;
  }

  ConvolutionEngine(const ConvolutionEngine&) = delete;
  ConvolutionEngine& operator=(const ConvolutionEngine&) = delete;

  const Grid& grid() const { return g_; }
  long padded_rows() const { return P_; }

  struct Spectrum {
    std::vector<cplx> data;
  };

  Spectrum forward(const GridFunction& f) {
    check(f.grid());
    Spectrum s;
    s.data.assign(std::size_t(P_ * Mc_), cplx{});
    std::vector<double> in(std::size_t(P_ * M_), 0.0);
    std::memcpy(in.data(), f.values().data(), sizeof(double) * std::size_t(Nt_ * M_));
    r2c(in, s.data);
    return s;
  }

  GridFunction apply(const Spectrum& fs, const KernelRows& K) {
    const auto& ks = kernel_spectrum(K);
    std::vector<cplx> prod(fs.data.size());
    for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = fs.data[i] * ks[i];
    std::vector<double> out(static_cast<std::size_t>(P_ * M_));
    c2r(prod, out);
    GridFunction r(g_);
    double scale = g_.cell() / double(P_ * M_);
    for (std::size_t i = 0; i < r.size(); ++i) r.values()[i] = out[i] * scale;
    return r;
  }

  GridFunction convolve(const KernelRows& K, const GridFunction& f, Mode mode = Mode::fft) {
    if (mode == Mode::fft) return apply(forward(f), K);
    return direct(K, f);
  }

  /// Row-by-row causal sum with spatial FFTs.
  GridFunction direct(const KernelRows& K, const GridFunction& f) {
    check(f.grid());
    if (K.M != M_) throw GridError("kernel columns differ from grid columns");
    std::vector<cplx> fh(std::size_t(Nt_ * Mc_)), kh(std::size_t(K.L * Mc_));
    row_r2c(f.values().data(), Nt_, fh.data());
    row_r2c(K.v.data(), K.L, kh.data());
    GridFunction r(g_);
    std::vector<cplx> acc(static_cast<std::size_t>(Mc_));
    std::vector<double> row(static_cast<std::size_t>(M_));
    auto plan = fftw_plan_dft_c2r_1d(int(M_), reinterpret_cast<fftw_complex*>(acc.data()), row.data(),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
    for (long m = 0; m < Nt_; ++m) {
      std::fill(acc.begin(), acc.end(), cplx{});
      long top = std::min(K.L - 1, m);
      for (long dm = 0; dm <= top; ++dm) {
        const cplx* a = kh.data() + dm * Mc_;
        const cplx* b = fh.data() + (m - dm) * Mc_;
        for (long q = 0; q < Mc_; ++q) acc[std::size_t(q)] += a[q] * b[q];
      }
      fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(acc.data()), row.data());
      double* out = r.row(g_.first_row() + m);
      for (long j = 0; j < M_; ++j) out[j] = row[std::size_t(j)] * g_.cell() / double(M_);
    }
    fftw_destroy_plan(plan);
    return r;
  }

  void clear_cache() { cache_.clear(); }

 private:
  static long good_size(long n) {
    for (long m = n;; ++m) {
      long r = m;
      for (long p : {2L, 3L, 5L, 7L})
        while (r % p == 0) r /= p;
      if (r == 1) return m;
    }
  }

  void check(const Grid& g) const {
    if (!g.same_layout(g_)) throw GridError("field grid differs from engine grid");
  }

  const std::vector<cplx>& kernel_spectrum(const KernelRows& K) {
    if (K.M != M_) throw GridError("kernel columns differ from grid columns");
    if (K.L > Lmax_) throw GridError("kernel longer than the engine padding");
    auto key = K.fingerprint();
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::vector<double> in(std::size_t(P_ * M_), 0.0);
    std::memcpy(in.data(), K.v.data(), sizeof(double) * K.v.size());
    std::vector<cplx> out(static_cast<std::size_t>(P_ * Mc_));
    r2c(in, out);
    if (cache_.size() > 64) cache_.clear();
    return cache_.emplace(key, std::move(out)).first->second;
  }

  void r2c(std::vector<double>& in, std::vector<cplx>& out) const {
    auto plan = fftw_plan_dft_r2c_2d(int(P_), int(M_), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                     FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }

  void c2r(std::vector<cplx>& in, std::vector<double>& out) const {
    auto plan = fftw_plan_dft_c2r_2d(int(P_), int(M_), reinterpret_cast<fftw_complex*>(in.data()), out.data(),
                                     FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }

  void row_r2c(const double* data, long rows, cplx* out) const {
    std::vector<double> buf(static_cast<std::size_t>(M_));
    auto plan = fftw_plan_dft_r2c_1d(int(M_), buf.data(), reinterpret_cast<fftw_complex*>(out),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
    for (long m = 0; m < rows; ++m) {
      std::memcpy(buf.data(), data + m * M_, sizeof(double) * std::size_t(M_));
      fftw_execute_dft_r2c(plan, buf.data(), reinterpret_cast<fftw_complex*>(out + m * Mc_));
    }
    fftw_destroy_plan(plan);
  }

  Grid g_;
  long Lmax_, Nt_, M_, P_, Mc_;
  std::map<std::uint64_t, std::vector<cplx>> cache_;
};

}  // namespace regstruct
