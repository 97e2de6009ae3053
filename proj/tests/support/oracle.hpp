#pragma once

// Brute-force references for the tests: demand by direct summation and risk
// by full enumeration of the joint profile/time space. Deliberately written
// against the raw data structures, not the evaluator under test.

#include <cstdint>
#include <functional>
#include <vector>

#include "gridrisk/corpus.hpp"
#include "gridrisk/demand.hpp"

namespace oracle {

using namespace gridrisk;

// Walk the full product space {0..sizes[0]-1} x ... in odometer order.
template <class Fn>
inline void for_each_selection(const std::vector<std::size_t>& sizes, Fn&& fn) {
  std::vector<std::uint32_t> sel(sizes.size(), 0);
  for (;;) {
    fn(sel);
    std::size_t i = 0;
    while (i < sizes.size()) {
      if (++sel[i] < sizes[i]) break;
      sel[i] = 0;
      ++i;
    }
    if (i == sizes.size()) return;
  }
}

// Every assignment vector in {0,1}^n.
template <class Fn>
inline void for_each_assignment(std::size_t n, Fn&& fn) {
  std::vector<std::uint8_t> x(n, 0);
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    for (std::size_t i = 0; i < n; ++i) x[i] = (mask >> i) & 1 ? 1 : 0;
    fn(x);
  }
}

// Probability of an assignment under independent Bernoulli components.
inline double assignment_prob(const std::vector<std::uint8_t>& x,
                              const std::vector<double>& p) {
  double prob = 1.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    prob *= x[i] ? p[i] : 1.0 - p[i];
  return prob;
}

// Demand at one step, summed customer by customer. sel holds one profile
// index per smart-meter customer, in asset order.
inline double naive_demand(const Asset& asset, const Corpus& corpus,
                           const std::vector<std::uint32_t>& sel, std::uint32_t t) {
  double d = 0.0;
  std::size_t k = 0;
  for (const Customer& c : asset.customers) {
    switch (c.group) {
      case CustomerGroup::smart_meter:
        d += c.gamma_kwh * corpus.bin(c.bin_id).profiles.at(sel.at(k)).values.at(t);
        ++k;
        break;
      case CustomerGroup::telemetry:
        d += corpus.telemetry_profiles.at(c.telemetry_id).values.at(t);
        break;
      case CustomerGroup::average:
        d += c.gamma_kwh * corpus.average_profiles.at(c.category_id).values.at(t);
        break;
    }
  }
  return d;
}

inline bool beyond(double demand, double threshold, Direction dir) {
  return dir == Direction::positive ? demand > threshold : demand < -threshold;
}

// Exact overload fraction: profiles uniform per bin, steps uniform.
inline double exact_risk(const Asset& asset, const Corpus& corpus,
                         double threshold, Direction dir) {
  std::vector<std::size_t> sizes;
  for (const Customer& c : asset.customers)
    if (c.group == CustomerGroup::smart_meter)
      sizes.push_back(corpus.bin(c.bin_id).profiles.size());
  const std::uint32_t T = corpus.T;

  std::uint64_t hits = 0, total = 0;
  for_each_selection(sizes, [&](const std::vector<std::uint32_t>& sel) {
    for (std::uint32_t t = 0; t < T; ++t) {
      ++total;
      if (beyond(naive_demand(asset, corpus, sel, t), threshold, dir)) ++hits;
    }
  });
  return static_cast<double>(hits) / static_cast<double>(total);
}

// Exact expected overload fraction given a spiky/smooth assignment:
// profiles uniform within each customer's assigned set.
inline double exact_impact_given_assignment(const Asset& asset, const Corpus& corpus,
                                            const std::vector<std::uint8_t>& x,
                                            double threshold, Direction dir) {
  std::vector<const std::vector<std::uint32_t>*> sets;
  std::size_t k = 0;
  for (const Customer& c : asset.customers) {
    if (c.group != CustomerGroup::smart_meter) continue;
    const Bin& b = corpus.bin(c.bin_id);
    sets.push_back(x.at(k) ? &b.spiky(dir) : &b.smooth(dir));
    ++k;
  }
  std::vector<std::size_t> sizes;
  for (const auto* s : sets) sizes.push_back(s->size());
  const std::uint32_t T = corpus.T;

  std::uint64_t hits = 0, total = 0;
  std::vector<std::uint32_t> mapped(sets.size());
  for_each_selection(sizes, [&](const std::vector<std::uint32_t>& set_sel) {
    for (std::size_t i = 0; i < sets.size(); ++i)
      mapped[i] = (*sets[i])[set_sel[i]];
    for (std::uint32_t t = 0; t < T; ++t) {
      ++total;
      if (beyond(naive_demand(asset, corpus, mapped, t), threshold, dir)) ++hits;
    }
  });
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace oracle
