#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace usersim {

struct Interval {
  double lo = 0;
  double hi = 0;
};

/// 95% Wilson score interval for a binomial proportion.
inline Interval wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054) {
  if (n == 0) return {0, 1};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double den = 1 + z * z / nn;
  const double centre = (p + z * z / (2 * nn)) / den;
  const double half = z * std::sqrt(p * (1 - p) / nn + z * z / (4 * nn * nn)) / den;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct MeanCI {
  double mean = 0;
  double half_width = 0;  // 95%, normal approximation
  std::size_t n = 0;
};

/// Pairwise summation keeps the reduction order fixed and the error small.
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  return pairwise_sum(x, n / 2) + pairwise_sum(x + n / 2, n - n / 2);
}

inline double mean(const std::vector<double>& x) {
  return x.empty() ? 0.0 : pairwise_sum(x.data(), x.size()) / static_cast<double>(x.size());
}

inline MeanCI mean_ci(const std::vector<double>& x) {
  MeanCI r;
  r.n = x.size();
  if (x.empty()) return r;
  r.mean = mean(x);
  if (x.size() < 2) return r;
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - r.mean) * (x[i] - r.mean);
  const double var = pairwise_sum(sq.data(), sq.size()) / static_cast<double>(x.size() - 1);
  r.half_width = 1.959963984540054 * std::sqrt(var / static_cast<double>(x.size()));
  return r;
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace usersim
