#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "gridrisk/errors.hpp"

namespace gridrisk {

// Streaming mean/variance (Welford). merge() combines two accumulators so
// partial results computed in parallel can be folded back deterministically.
struct StreamStats {
  std::uint64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) noexcept {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }

  void merge(const StreamStats& o) noexcept {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n);
    const double nb = static_cast<double>(o.n);
    const double nab = na + nb;
    const double d = o.mean - mean;
    mean += d * nb / nab;
    m2 += o.m2 + d * d * na * nb / nab;
    n += o.n;
  }

  // Sample variance (n-1 denominator); 0 until two values have been seen.
  double variance() const noexcept {
    return n >= 2 ? m2 / static_cast<double>(n - 1) : 0.0;
  }

  double stddev() const noexcept { return std::sqrt(std::max(0.0, variance())); }
};

// Relative error of the running mean: sigma / (mean * sqrt(n)).
// Undefined for a zero or negative mean; callers treat that case as
// not-converged and must not ask for a number.
inline double relative_error(const StreamStats& s) {
  if (s.n < 2)
    throw ContractViolation("relative_error: needs at least two samples");
  if (!(s.mean > 0.0))
    throw ContractViolation("relative_error: undefined for a non-positive mean");
  return s.stddev() / (s.mean * std::sqrt(static_cast<double>(s.n)));
}

// 1-based order-statistic index ceil(p * n), clamped to [1, n]. The product
// is nudged before ceil so that values representable as exact integers do
// not round up from an ulp of noise (0.95 * 100 evaluates above 95).
inline std::size_t quantile_index(double p, std::size_t n) {
  if (n == 0) throw ContractViolation("quantile_index: empty sample");
  const double raw = p * static_cast<double>(n);
  const double c = std::ceil(raw - 1e-9);
  const auto idx = c < 1.0 ? std::size_t{1} : static_cast<std::size_t>(c);
  return std::min(idx, n);
}

// Empirical quantile: ascending sort, element at quantile_index(p, n).
inline double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty())
    throw ContractViolation("empirical_quantile: empty sample");
  std::sort(values.begin(), values.end());
  return values[quantile_index(p, values.size()) - 1];
}

}  // namespace gridrisk
