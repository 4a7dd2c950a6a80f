#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace dbgn {

inline double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// Order-independent summation: values are sorted before accumulation so
/// the result depends only on the multiset. Used wherever permutation
/// invariance must hold bit-for-bit.
inline double canonical_sum(std::vector<double>& scratch) {
  std::sort(scratch.begin(), scratch.end());
  double s = 0.0;
  for (double v : scratch) s += v;
  return s;
}

inline double gaussian_log_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Lowest index among the maxima.
inline std::size_t argmax_lowest(std::span<const double> xs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] > xs[best]) best = i;
  }
  return best;
}

}  // namespace dbgn
