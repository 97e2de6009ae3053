#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "gridrisk/errors.hpp"

namespace gridrisk {

// Quarter-hourly resolution: each step is average power over 0.25 h, so
// energy in kWh is the plain sum of step values times this factor.
inline constexpr double kStepHours = 0.25;

struct Profile {
  std::string id;
  std::vector<double> values;  // average power per step [kW]
};

inline double annual_energy_kwh(const Profile& p) noexcept {
  double s = 0.0;
  for (double v : p.values) s += v;
  return s * kStepHours;
}

// Rescale so the result's annual energy equals gamma_kwh. gamma of zero
// yields the zero profile; a profile with non-positive energy cannot be
// rescaled to a positive target.
inline Profile scale_profile(const Profile& p, double gamma_kwh) {
  if (gamma_kwh < 0.0)
    throw ContractViolation("scale_profile: negative yearly consumption");
  Profile out;
  out.id = p.id;
  out.values.assign(p.values.size(), 0.0);
  if (gamma_kwh == 0.0) return out;
  const double e = annual_energy_kwh(p);
  if (!(e > 0.0))
    throw DataError("scale_profile: profile has non-positive annual energy");
  const double f = gamma_kwh / e;
  for (std::size_t t = 0; t < p.values.size(); ++t) out.values[t] = f * p.values[t];
  return out;
}

// Per-step median across a set of equal-length profiles; even counts take
// the mean of the two middle values.
inline Profile median_profile(std::span<const Profile> profiles) {
  if (profiles.empty())
    throw ContractViolation("median_profile: no profiles");
  const std::size_t T = profiles[0].values.size();
  for (const Profile& p : profiles)
    if (p.values.size() != T)
      throw ContractViolation("median_profile: profile lengths differ");

  Profile out;
  out.id = "median";
  out.values.resize(T);
  const std::size_t n = profiles.size();
  std::vector<double> col(n);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < n; ++i) col[i] = profiles[i].values[t];
    const std::size_t mid = n / 2;
    std::nth_element(col.begin(), col.begin() + mid, col.end());
    double m = col[mid];
    if (n % 2 == 0) {
      const double lower = *std::max_element(col.begin(), col.begin() + mid);
      m = 0.5 * (lower + m);
    }
    out.values[t] = m;
  }
  return out;
}

// Squared deviation mass above the reference trace. Only steps where the
// profile exceeds the reference contribute.
inline double delta_plus(const Profile& s, const Profile& reference) {
  if (s.values.size() != reference.values.size())
    throw ContractViolation("delta_plus: profile lengths differ");
  double acc = 0.0;
  for (std::size_t t = 0; t < s.values.size(); ++t) {
    const double d = s.values[t] - reference.values[t];
    if (d > 0.0) acc += d * d;
  }
  return acc;
}

// Mirror image of delta_plus for dips below the reference trace.
inline double delta_minus(const Profile& s, const Profile& reference) {
  if (s.values.size() != reference.values.size())
    throw ContractViolation("delta_minus: profile lengths differ");
  double acc = 0.0;
  for (std::size_t t = 0; t < s.values.size(); ++t) {
    const double d = s.values[t] - reference.values[t];
    if (d < 0.0) acc += d * d;
  }
  return acc;
}

}  // namespace gridrisk
