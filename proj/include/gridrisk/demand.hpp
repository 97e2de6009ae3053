#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gridrisk/corpus.hpp"

namespace gridrisk {

// The three customer groups of the bottom-up model: smart-meter customers
// draw a measured profile from their consumption bin, telemetry customers
// contribute a fixed absolute trace, and the remainder get the scaled
// average profile of their category.
enum class CustomerGroup { smart_meter, telemetry, average };

inline const char* to_string(CustomerGroup g) noexcept {
  switch (g) {
    case CustomerGroup::smart_meter: return "smart_meter";
    case CustomerGroup::telemetry: return "telemetry";
    default: return "average";
  }
}

inline CustomerGroup customer_group_from_string(const std::string& s) {
  if (s == "smart_meter") return CustomerGroup::smart_meter;
  if (s == "telemetry") return CustomerGroup::telemetry;
  if (s == "average") return CustomerGroup::average;
  throw DataError("unknown customer group '" + s + "'");
}

struct Customer {
  CustomerGroup group = CustomerGroup::smart_meter;
  double gamma_kwh = 0.0;    // yearly consumption; groups 1 and 3
  std::string bin_id;        // group 1
  std::string telemetry_id;  // group 2
  std::string category_id;   // group 3
};

struct Asset {
  std::string asset_id;
  double d_cap_kw = 0.0;  // capacity rating; overload means |load| beyond it
  std::vector<Customer> customers;

  std::size_t count(CustomerGroup g) const noexcept {
    std::size_t n = 0;
    for (const Customer& c : customers)
      if (c.group == g) ++n;
    return n;
  }
};

// One profile index per smart-meter customer, into that customer's bin.
struct ProfileSelection {
  std::vector<std::uint32_t> indices;
};

// Evaluation time steps (with repetition allowed when subsampled).
struct TimeSample {
  std::vector<std::uint32_t> steps;

  static TimeSample full_year(std::uint32_t T) {
    TimeSample s;
    s.steps.resize(T);
    for (std::uint32_t t = 0; t < T; ++t) s.steps[t] = t;
    return s;
  }
};

// Asset demand evaluator. Resolves every customer reference against the
// corpus once and caches the aggregate trace of the telemetry and
// average-profile customers, which never varies across draws; only the
// smart-meter sum is recomputed per profile selection.
class DemandEvaluator {
 public:
  DemandEvaluator(const Asset& asset, const Corpus& corpus)
      : asset_(&asset), corpus_(&corpus) {
    if (!(asset.d_cap_kw > 0.0))
      throw DataError("asset '" + asset.asset_id + "': capacity rating must be positive");
    fixed_.assign(corpus.T, 0.0);
    for (const Customer& c : asset.customers) {
      if (c.group != CustomerGroup::telemetry && c.gamma_kwh < 0.0)
        throw DataError("asset '" + asset.asset_id + "': negative yearly consumption");
      switch (c.group) {
        case CustomerGroup::smart_meter: {
          const Bin& b = corpus.bin(c.bin_id);
          if (b.profiles[0].values.size() != corpus.T)
            throw DataError("bin '" + c.bin_id + "' does not match the corpus horizon");
          bins_.push_back(&b);
          gammas_.push_back(c.gamma_kwh);
          break;
        }
        case CustomerGroup::telemetry: {
          auto it = corpus.telemetry_profiles.find(c.telemetry_id);
          if (it == corpus.telemetry_profiles.end())
            throw DataError("unknown telemetry id '" + c.telemetry_id + "'");
          add_scaled(it->second.values, 1.0);
          break;
        }
        case CustomerGroup::average: {
          auto it = corpus.average_profiles.find(c.category_id);
          if (it == corpus.average_profiles.end())
            throw DataError("unknown average-profile category '" + c.category_id + "'");
          add_scaled(it->second.values, c.gamma_kwh);
          break;
        }
      }
    }
  }

  const Asset& asset() const noexcept { return *asset_; }
  const Corpus& corpus() const noexcept { return *corpus_; }
  std::uint32_t T() const noexcept { return corpus_->T; }
  std::size_t n_s() const noexcept { return bins_.size(); }
  const Bin& customer_bin(std::size_t i) const { return *bins_.at(i); }
  double customer_gamma(std::size_t i) const { return gammas_.at(i); }
  const std::vector<double>& fixed_trace() const noexcept { return fixed_; }

  // Total demand at the given steps. out[k] corresponds to steps[k].
  void evaluate(const ProfileSelection& sel, std::span<const std::uint32_t> steps,
                std::vector<double>& out) const {
    if (sel.indices.size() != bins_.size())
      throw ContractViolation("evaluate: selection size does not match customer count");
    const std::size_t m = steps.size();
    out.resize(m);
    for (std::size_t k = 0; k < m; ++k) out[k] = fixed_[steps[k]];
    for (std::size_t i = 0; i < bins_.size(); ++i) {
      const std::vector<double>& vals =
          bins_[i]->profiles.at(sel.indices[i]).values;
      const double g = gammas_[i];
      for (std::size_t k = 0; k < m; ++k) out[k] += g * vals[steps[k]];
    }
  }

  std::vector<double> evaluate(const ProfileSelection& sel,
                               std::span<const std::uint32_t> steps) const {
    std::vector<double> out;
    evaluate(sel, steps, out);
    return out;
  }

  // Largest load over the given steps, measured in the overload direction:
  // max D for positive, max -D (deepest export) for negative.
  double max_signed_load(const ProfileSelection& sel,
                         std::span<const std::uint32_t> steps, Direction dir,
                         std::vector<double>& scratch) const {
    evaluate(sel, steps, scratch);
    double best = -std::numeric_limits<double>::infinity();
    for (double d : scratch) {
      const double s = dir == Direction::positive ? d : -d;
      if (s > best) best = s;
    }
    return best;
  }

  // Fraction of the given steps whose demand lies beyond the threshold in
  // the overload direction (strictly above it, or strictly below its
  // negative for export).
  double impact(const ProfileSelection& sel, std::span<const std::uint32_t> steps,
                double threshold, Direction dir, std::vector<double>& scratch) const {
    if (steps.empty()) throw ContractViolation("impact: no time steps");
    evaluate(sel, steps, scratch);
    std::size_t hits = 0;
    if (dir == Direction::positive) {
      for (double d : scratch)
        if (d > threshold) ++hits;
    } else {
      for (double d : scratch)
        if (d < -threshold) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(steps.size());
  }

 private:
  void add_scaled(const std::vector<double>& vals, double f) {
    if (vals.size() != fixed_.size())
      throw DataError("profile length does not match the corpus horizon");
    for (std::size_t t = 0; t < vals.size(); ++t) fixed_[t] += f * vals[t];
  }

  const Asset* asset_;
  const Corpus* corpus_;
  std::vector<const Bin*> bins_;  // per smart-meter customer
  std::vector<double> gammas_;    // per smart-meter customer
  std::vector<double> fixed_;     // telemetry + average aggregate
};

// Convenience wrappers for small inputs and tests; each call builds a fresh
// evaluator, so hot loops should hold a DemandEvaluator instead.

inline std::vector<double> evaluate_demand(const Asset& asset, const Corpus& corpus,
                                           const ProfileSelection& sel,
                                           const TimeSample& theta) {
  return DemandEvaluator(asset, corpus).evaluate(sel, theta.steps);
}

inline double max_load(const Asset& asset, const Corpus& corpus,
                       const ProfileSelection& sel, const TimeSample& theta,
                       Direction dir = Direction::positive) {
  std::vector<double> scratch;
  return DemandEvaluator(asset, corpus).max_signed_load(sel, theta.steps, dir, scratch);
}

inline double impact(const Asset& asset, const Corpus& corpus,
                     const ProfileSelection& sel, const TimeSample& theta,
                     double threshold, Direction dir) {
  std::vector<double> scratch;
  return DemandEvaluator(asset, corpus).impact(sel, theta.steps, threshold, dir, scratch);
}

}  // namespace gridrisk
