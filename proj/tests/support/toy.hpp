#pragma once

// Small hand-buildable corpora and assets for tests. Everything stays on a
// 0.25 value grid so sums and comparisons are exact in double arithmetic.

#include <string>
#include <utility>
#include <vector>

#include "gridrisk/corpus.hpp"
#include "gridrisk/demand.hpp"
#include "gridrisk/rng.hpp"
#include "support/oracle.hpp"

namespace toy {

using namespace gridrisk;

inline Bin make_bin(std::string bin_id, std::string category,
                    std::vector<std::vector<double>> rows) {
  Bin b;
  b.bin_id = std::move(bin_id);
  b.category_id = std::move(category);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Profile p;
    p.id = b.bin_id + "_p" + std::to_string(i);
    p.values = std::move(rows[i]);
    b.profiles.push_back(std::move(p));
  }
  return b;
}

// Corpus with classification applied at q. A q of 0.75 marks exactly one
// profile spiky in bins of two to four profiles.
inline Corpus make_corpus(std::uint32_t T, std::vector<Bin> bins,
                          double q = 0.75) {
  Corpus c;
  c.T = T;
  c.bins = std::move(bins);
  classify_corpus(c, q);
  c.rebuild_index();
  return c;
}

inline Customer smart(std::string bin_id, double gamma) {
  Customer c;
  c.group = CustomerGroup::smart_meter;
  c.bin_id = std::move(bin_id);
  c.gamma_kwh = gamma;
  return c;
}

inline Customer telemetry(std::string telemetry_id) {
  Customer c;
  c.group = CustomerGroup::telemetry;
  c.telemetry_id = std::move(telemetry_id);
  return c;
}

inline Customer average(std::string category_id, double gamma) {
  Customer c;
  c.group = CustomerGroup::average;
  c.category_id = std::move(category_id);
  c.gamma_kwh = gamma;
  return c;
}

inline Asset make_asset(std::string id, double d_cap,
                        std::vector<Customer> customers) {
  Asset a;
  a.asset_id = std::move(id);
  a.d_cap_kw = d_cap;
  a.customers = std::move(customers);
  return a;
}

struct ToyInstance {
  Corpus corpus;
  Asset asset;
  Direction direction = Direction::positive;
  double exact_risk = 0.0;  // strict exceedance fraction at asset.d_cap_kw
};

// Random small instance with an exactly known risk. Profile values live on
// a half-integer grid; the rating is the midpoint of two adjacent distinct
// signed demand values, so no sum ever lands on it. min_risk filters out
// instances too rare to estimate quickly.
inline ToyInstance random_toy_instance(RngStream& rng, Direction dir,
                                       double min_risk = 0.0) {
  for (;;) {
    const std::uint32_t T = 4 + static_cast<std::uint32_t>(rng.uniform_below(5));
    const std::size_t n_bins = 1 + rng.uniform_index(2);

    std::vector<Bin> bins;
    for (std::size_t b = 0; b < n_bins; ++b) {
      const std::size_t n_prof = 2 + rng.uniform_index(3);
      std::vector<std::vector<double>> rows(n_prof, std::vector<double>(T));
      for (auto& row : rows)
        for (double& v : row) {
          // positive direction: loads in [0.5, 4]; negative: allow export
          v = dir == Direction::positive
                  ? 0.5 + 0.5 * static_cast<double>(rng.uniform_below(8))
                  : 0.5 * (static_cast<double>(rng.uniform_below(17)) - 8.0);
        }
      bins.push_back(make_bin("b" + std::to_string(b), "cat", std::move(rows)));
    }

    ToyInstance inst;
    inst.direction = dir;
    inst.corpus = make_corpus(T, std::move(bins));

    // deviation ties can empty a smooth set; such corpora cannot carry a
    // two-stage distribution, so roll again
    bool degenerate = false;
    for (const Bin& b : inst.corpus.bins)
      for (Direction d : {Direction::positive, Direction::negative})
        if (b.spiky(d).empty() || b.smooth(d).empty()) degenerate = true;
    if (degenerate) continue;

    const std::size_t n_cust = 1 + rng.uniform_index(3);
    std::vector<Customer> customers;
    for (std::size_t i = 0; i < n_cust; ++i) {
      const std::size_t b = rng.uniform_index(n_bins);
      const double gamma = 0.5 * static_cast<double>(1 + rng.uniform_below(4));
      customers.push_back(smart("b" + std::to_string(b), gamma));
    }
    inst.asset = make_asset("toy", 1.0, std::move(customers));

    // All signed demand values over the whole joint space.
    std::vector<double> signed_demands;
    std::vector<std::size_t> sizes;
    for (const Customer& c : inst.asset.customers)
      sizes.push_back(inst.corpus.bin(c.bin_id).profiles.size());
    oracle::for_each_selection(sizes, [&](const std::vector<std::uint32_t>& sel) {
      for (std::uint32_t t = 0; t < T; ++t) {
        const double d = oracle::naive_demand(inst.asset, inst.corpus, sel, t);
        signed_demands.push_back(dir == Direction::positive ? d : -d);
      }
    });

    std::vector<double> distinct = signed_demands;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    // Candidate ratings: midpoints that are positive and leave a nonzero,
    // non-certain exceedance probability.
    std::vector<double> mids;
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
      const double mid = 0.5 * (distinct[i] + distinct[i + 1]);
      if (mid > 0.0) mids.push_back(mid);
    }
    if (mids.empty()) continue;

    inst.asset.d_cap_kw = mids[rng.uniform_index(mids.size())];
    std::size_t hits = 0;
    for (double s : signed_demands)
      if (s > inst.asset.d_cap_kw) ++hits;
    if (hits == 0) continue;
    inst.exact_risk =
        static_cast<double>(hits) / static_cast<double>(signed_demands.size());
    if (inst.exact_risk < min_risk) continue;
    return inst;
  }
}

}  // namespace toy
