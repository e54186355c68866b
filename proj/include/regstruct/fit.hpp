#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace regstruct {

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Least-squares line through (log2 scale, log2 value).
struct ExponentFit {
  std::vector<std::pair<double, double>> points;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 1.0;
  double stderr_slope = 0.0;
  int excluded = 0;  // values below the floor

  double constant() const { return std::exp2(intercept); }
};

inline ExponentFit fit_log2(std::vector<std::pair<double, double>> pts, int excluded = 0) {
  if (pts.size() < 3) throw FitError("exponent fit needs at least 3 usable points");
  ExponentFit F;
  F.points = std::move(pts);
  F.excluded = excluded;
  double n = double(F.points.size()), mx = 0, my = 0;
  for (auto [x, y] : F.points) mx += x, my += y;
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (auto [x, y] : F.points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (sxx == 0.0) throw FitError("exponent fit needs distinct scales");
  F.slope = sxy / sxx;
  F.intercept = my - F.slope * mx;
  double sse = 0.0;
  for (auto [x, y] : F.points) {
    double r = y - F.intercept - F.slope * x;
    sse += r * r;
  }
  F.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  F.stderr_slope = F.points.size() > 2 ? std::sqrt(sse / (n - 2.0) / sxx) : 0.0;
  return F;
}

/// Fit value ~ C scale^slope; values at or below `floor` are dropped and counted.
inline ExponentFit fit_exponent(const std::vector<double>& scales, const std::vector<double>& values,
                                double floor = 1e-12) {
  if (scales.size() != values.size()) throw FitError("scales and values differ in length");
  std::vector<std::pair<double, double>> pts;
  int dropped = 0;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!(std::abs(values[i]) > floor) || !(scales[i] > 0.0)) {
      ++dropped;
      continue;
    }
    pts.emplace_back(std::log2(scales[i]), std::log2(std::abs(values[i])));
  }
  return fit_log2(std::move(pts), dropped);
}

}  // namespace regstruct
