#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <vector>

#include "gridrisk/demand.hpp"
#include "gridrisk/rng.hpp"

namespace gridrisk {

// Per-customer Bernoulli assignment: 1 draws from the spiky profile set of
// the customer's bin, 0 from the smooth set.
struct CategoryAssignment {
  std::vector<std::uint8_t> x;
};

// Parameters of the two-stage profile distribution. u holds the nominal
// spiky-set probabilities (set sizes over bin size), v the biased ones the
// estimator actually samples from. The likelihood ratio of a draw depends
// only on the assignment, because within a set both densities are uniform
// and cancel.
struct ISParams {
  std::vector<double> u;
  std::vector<double> v;
  Direction direction = Direction::positive;

  void validate() const {
    if (u.size() != v.size())
      throw ContractViolation("sampling parameters: u and v sizes differ");
    for (double p : u)
      if (!(p > 0.0 && p < 1.0))
        throw DegenerateDistribution(
            "sampling parameters: nominal probability outside (0,1)");
    for (double p : v)
      if (!(p > 0.0 && p < 1.0))
        throw DegenerateDistribution(
            "sampling parameters: biased probability outside (0,1)");
  }
};

// Nominal spiky-set probability per smart-meter customer: the spiky share
// of the customer's bin in the given direction. Matches plain uniform
// profile drawing exactly, which is what makes the unbiased estimator the
// baseline of every biased one.
inline std::vector<double> initial_u(const DemandEvaluator& ev, Direction dir) {
  std::vector<double> u(ev.n_s());
  for (std::size_t i = 0; i < ev.n_s(); ++i) {
    const Bin& b = ev.customer_bin(i);
    if (b.spiky(dir).empty())
      throw StateError("bin '" + b.bin_id +
                       "' has no spiky set; classify the corpus first");
    u[i] = b.spiky_fraction(dir);
    if (!(u[i] > 0.0 && u[i] < 1.0))
      std::cerr << "warning: bin '" << b.bin_id
                << "' yields a degenerate set probability of " << u[i] << "\n";
  }
  return u;
}

inline CategoryAssignment sample_assignment(const ISParams& params, bool use_biased,
                                            RngStream& rng) {
  const std::vector<double>& probs = use_biased ? params.v : params.u;
  CategoryAssignment a;
  a.x.resize(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    a.x[i] = rng.bernoulli(probs[i]) ? 1 : 0;
  return a;
}

// Second sampling stage: uniform draw within the assigned set of each
// customer's bin.
inline ProfileSelection sample_profiles(const DemandEvaluator& ev,
                                        const CategoryAssignment& assignment,
                                        Direction dir, RngStream& rng) {
  if (assignment.x.size() != ev.n_s())
    throw ContractViolation("sample_profiles: assignment size does not match");
  ProfileSelection sel;
  sel.indices.resize(ev.n_s());
  for (std::size_t i = 0; i < ev.n_s(); ++i) {
    const Bin& b = ev.customer_bin(i);
    const std::vector<std::uint32_t>& set =
        assignment.x[i] ? b.spiky(dir) : b.smooth(dir);
    if (set.empty())
      throw StateError("bin '" + b.bin_id + "' has an empty profile set");
    sel.indices[i] = set[rng.uniform_index(set.size())];
  }
  return sel;
}

// Plain uniform profile draw over each bin, used by the unbiased estimators.
inline ProfileSelection sample_profiles_uniform(const DemandEvaluator& ev,
                                                RngStream& rng) {
  ProfileSelection sel;
  sel.indices.resize(ev.n_s());
  for (std::size_t i = 0; i < ev.n_s(); ++i)
    sel.indices[i] = static_cast<std::uint32_t>(
        rng.uniform_index(ev.customer_bin(i).profiles.size()));
  return sel;
}

// m time steps uniform over the horizon, drawn with replacement.
inline TimeSample sample_times(std::uint32_t m, std::uint32_t T, RngStream& rng) {
  if (m < 1) throw ContractViolation("sample_times: need at least one step");
  if (T < 1) throw ContractViolation("sample_times: empty horizon");
  if (m > T) throw ContractViolation("sample_times: more steps than the horizon has");
  TimeSample s;
  s.steps.resize(m);
  for (std::uint32_t k = 0; k < m; ++k)
    s.steps[k] = static_cast<std::uint32_t>(rng.uniform_below(T));
  return s;
}

// log of the likelihood ratio f(x;u) / g(x;v). Summed in log space so long
// assignments cannot underflow; a boundary u turns into -inf, which exp()
// maps to the correct weight of zero.
inline double log_importance_weight(const CategoryAssignment& assignment,
                                    const ISParams& params) {
  if (assignment.x.size() != params.u.size() || params.u.size() != params.v.size())
    throw ContractViolation("importance weight: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < assignment.x.size(); ++i) {
    const double u = params.u[i];
    const double v = params.v[i];
    if (!(v > 0.0 && v < 1.0))
      throw DegenerateDistribution(
          "importance weight: biased probability outside (0,1)");
    acc += assignment.x[i] ? std::log(u) - std::log(v)
                           : std::log1p(-u) - std::log1p(-v);
  }
  return acc;
}

inline double importance_weight(const CategoryAssignment& assignment,
                                const ISParams& params) {
  return std::exp(log_importance_weight(assignment, params));
}

}  // namespace gridrisk
