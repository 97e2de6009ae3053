#pragma once

#include <cmath>
#include <limits>
#include <span>

#include "gridrisk/errors.hpp"

namespace gridrisk {

namespace detail {

// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b), accurate to ~1e-14.
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0))
    throw ContractViolation("regularized_incomplete_beta: parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                        a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(log_bt);
  if (x < (a + 1.0) / (a + b + 2.0))
    return bt * detail::beta_cf(a, b, x) / a;
  return 1.0 - bt * detail::beta_cf(b, a, 1.0 - x) / b;
}

struct WelchResult {
  double t = 0.0;   // statistic; sign follows mean(a) - mean(b)
  double df = 0.0;  // Welch-Satterthwaite degrees of freedom
  double p = 1.0;   // two-sided
};

// Two-sided Welch's t-test on two samples of unequal variance. Degenerate
// inputs keep a usable answer: two zero-variance samples compare by value
// alone (p of 1 when equal, 0 when not).
inline WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw ContractViolation("welch_t_test: each sample needs at least two values");
  const auto stats = [](std::span<const double> s) {
    double mean = 0.0;
    for (double x : s) mean += x;
    mean /= static_cast<double>(s.size());
    double var = 0.0;
    for (double x : s) var += (x - mean) * (x - mean);
    var /= static_cast<double>(s.size() - 1);
    return std::pair<double, double>{mean, var};
  };
  const auto [ma, va] = stats(a);
  const auto [mb, vb] = stats(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double sa = va / na;
  const double sb = vb / nb;
  const double se2 = sa + sb;

  WelchResult res;
  if (se2 <= 0.0) {
    res.t = ma == mb ? 0.0 : std::numeric_limits<double>::infinity() *
                                 (ma > mb ? 1.0 : -1.0);
    res.df = na + nb - 2.0;
    res.p = ma == mb ? 1.0 : 0.0;
    return res;
  }
  res.t = (ma - mb) / std::sqrt(se2);
  res.df = se2 * se2 /
           (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  // Two-sided p from the t distribution: P(|T| > |t|) = I_x(df/2, 1/2)
  // with x = df / (df + t^2).
  const double x = res.df / (res.df + res.t * res.t);
  res.p = regularized_incomplete_beta(res.df / 2.0, 0.5, x);
  return res;
}

}  // namespace gridrisk
