#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <string>
#include <vector>

#include "gridrisk/sampling.hpp"
#include "gridrisk/stats.hpp"

namespace gridrisk {

struct AssetGenOptions {
  std::uint32_t count = 30;
  std::uint32_t n_s_min = 5;
  std::uint32_t n_s_max = 120;
  double telemetry_prob = 0.3;  // chance of attaching a telemetry customer
  double average_prob = 0.5;    // chance of attaching average-profile load
  std::uint32_t probe_traces = 400;
  std::uint32_t probe_m = 256;

  void validate() const {
    if (count < 1) throw ConfigError("asset generation: zero assets");
    if (n_s_min < 1 || n_s_max < n_s_min)
      throw ConfigError("asset generation: bad customer count range");
    if (probe_traces < 10 || probe_m < 1)
      throw ConfigError("asset generation: probe too small");
  }
};

// Random assets over the corpus with capacity ratings engineered to spread
// the overload probability across magnitudes: some ratings sit at moderate
// demand quantiles (common overloads), others beyond the largest probed
// maximum (rare ones). Customer counts are log-spaced so small and large
// assets both appear.
inline std::vector<Asset> gen_assets(const Corpus& corpus,
                                     const AssetGenOptions& opts,
                                     std::uint64_t seed) {
  opts.validate();
  if (corpus.bins.empty()) throw DataError("asset generation: corpus has no bins");

  std::vector<Asset> assets;
  for (std::uint32_t a = 0; a < opts.count; ++a) {
    RngStream rng(seed, hash_combine(0x5eed, a));
    Asset asset;
    asset.asset_id = "asset_" + std::to_string(a);

    const double log_lo = std::log(static_cast<double>(opts.n_s_min));
    const double log_hi = std::log(static_cast<double>(opts.n_s_max));
    const auto n_s = static_cast<std::uint32_t>(
        std::lround(std::exp(log_lo + (log_hi - log_lo) * rng.uniform())));
    for (std::uint32_t i = 0; i < std::max<std::uint32_t>(1, n_s); ++i) {
      const Bin& bin = corpus.bins[rng.uniform_index(corpus.bins.size())];
      Customer c;
      c.group = CustomerGroup::smart_meter;
      c.bin_id = bin.bin_id;
      c.gamma_kwh = bin.consumption_range[0] +
                    (bin.consumption_range[1] - bin.consumption_range[0]) *
                        rng.uniform();
      asset.customers.push_back(std::move(c));
    }
    if (!corpus.telemetry_profiles.empty() && rng.bernoulli(opts.telemetry_prob)) {
      auto it = corpus.telemetry_profiles.begin();
      std::advance(it, rng.uniform_index(corpus.telemetry_profiles.size()));
      Customer c;
      c.group = CustomerGroup::telemetry;
      c.telemetry_id = it->first;
      asset.customers.push_back(std::move(c));
    }
    if (!corpus.average_profiles.empty() && rng.bernoulli(opts.average_prob)) {
      auto it = corpus.average_profiles.begin();
      std::advance(it, rng.uniform_index(corpus.average_profiles.size()));
      Customer c;
      c.group = CustomerGroup::average;
      c.category_id = it->first;
      c.gamma_kwh = 2000.0 + 18000.0 * rng.uniform();
      asset.customers.push_back(std::move(c));
    }

    // Probe the demand maximum distribution to place the rating. The
    // rating needs a placeholder before the evaluator will accept the
    // asset; it is overwritten right after the probe.
    asset.d_cap_kw = 1.0;
    const DemandEvaluator ev(asset, corpus);
    std::vector<double> maxima(opts.probe_traces);
    std::vector<double> scratch;
    const std::uint32_t m = std::min(opts.probe_m, corpus.T);
    for (std::uint32_t p = 0; p < opts.probe_traces; ++p) {
      RngStream sel_rng(seed, hash_combine(hash_combine(0x96a0be, a), p * 2));
      RngStream time_rng(seed, hash_combine(hash_combine(0x96a0be, a), p * 2 + 1));
      const ProfileSelection sel = sample_profiles_uniform(ev, sel_rng);
      const TimeSample theta = sample_times(m, corpus.T, time_rng);
      maxima[p] = ev.max_signed_load(sel, theta.steps, Direction::positive, scratch);
    }
    const double top = *std::max_element(maxima.begin(), maxima.end());
    double d_cap;
    switch (a % 6) {
      case 0: d_cap = empirical_quantile(maxima, 0.5); break;
      case 1: d_cap = empirical_quantile(maxima, 0.9); break;
      case 2: d_cap = empirical_quantile(maxima, 0.99); break;
      case 3: d_cap = top * 1.02; break;
      case 4: d_cap = top * 1.08; break;
      default: d_cap = top * 1.2; break;
    }
    asset.d_cap_kw = d_cap > 0.0 ? d_cap : 1.0;
    assets.push_back(std::move(asset));
  }
  return assets;
}

}  // namespace gridrisk
