#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "gridrisk/corpus.hpp"
#include "gridrisk/rng.hpp"
#include "json.hpp"

namespace gridrisk {

// Knobs for one group-1 customer category of the synthetic corpus.
struct CategorySpec {
  std::string id;
  std::uint32_t n_bins = 2;
  std::uint32_t profiles_per_bin = 60;
  double gamma_low_kwh = 1500.0;
  double gamma_high_kwh = 6000.0;
  double spike_fraction = 0.15;   // share of profiles given heavy-tail spikes
  double spikes_per_year = 60.0;  // expected spike count at full-year length
  double spike_scale = 1.5;       // Pareto scale, multiples of mean base power
  double spike_alpha = 1.6;       // Pareto tail exponent
  double pv_fraction = 0.0;       // share of profiles with midday PV export
  double pv_energy_share = 0.5;   // PV energy relative to base consumption
  double noise_level = 0.08;
};

struct AverageCategorySpec {
  std::string id = "avg";
};

struct TelemetrySpec {
  std::string id;
  double peak_kw = 50.0;
};

struct CorpusSpec {
  std::uint32_t T = 35040;
  double q_spiky = 0.95;
  std::uint32_t min_bins_per_category = 2;
  std::uint32_t max_bins_per_category = 4;
  std::uint32_t min_profiles_per_bin = 2;
  std::vector<CategorySpec> categories;
  std::vector<AverageCategorySpec> average_categories;
  std::vector<TelemetrySpec> telemetry;

  void validate() const;
};

// Ground truth of what the generator injected, keyed by profile id.
// Only used by diagnostics and tests; never serialized with the corpus.
struct SynthLabels {
  std::map<std::string, bool> spike_injected;
  std::map<std::string, bool> pv_injected;
};

namespace detail {

inline bool valid_id(const std::string& s) {
  if (s.empty() || s.size() > 64) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
      return false;
  return true;
}

// Daily/weekly/seasonal base shape around mean_kw plus multiplicative noise.
inline void synth_base(RngStream& rng, std::uint32_t T, double mean_kw,
                       double noise, std::vector<double>& out) {
  const double day = static_cast<double>(std::min<std::uint32_t>(T, 96));
  const double week = 7.0 * day;
  const double tau = 6.283185307179586;
  const double a_day = 0.25 + 0.30 * rng.uniform();
  const double a_day2 = 0.05 + 0.10 * rng.uniform();
  const double a_week = 0.05 + 0.10 * rng.uniform();
  const double a_year = 0.10 + 0.20 * rng.uniform();
  const double p_day = tau * rng.uniform();
  const double p_day2 = tau * rng.uniform();
  const double p_week = tau * rng.uniform();
  const double p_year = tau * rng.uniform();

  out.resize(T);
  for (std::uint32_t t = 0; t < T; ++t) {
    const double x = static_cast<double>(t);
    double shape = 1.0 + a_day * std::sin(tau * x / day + p_day) +
                   a_day2 * std::sin(2.0 * tau * x / day + p_day2) +
                   a_week * std::sin(tau * x / week + p_week) +
                   a_year * std::sin(tau * x / static_cast<double>(T) + p_year);
    shape = std::max(shape, 0.05);
    const double v = mean_kw * shape * (1.0 + noise * rng.normal());
    out[t] = std::max(v, 0.0);
  }
}

inline void synth_spikes(RngStream& rng, const CategorySpec& cs, double mean_kw,
                         std::vector<double>& vals) {
  const auto T = static_cast<std::uint32_t>(vals.size());
  const double lambda = cs.spikes_per_year * static_cast<double>(T) / 35040.0;
  const std::uint32_t count = std::max<std::uint32_t>(1, rng.poisson(lambda));
  for (std::uint32_t s = 0; s < count; ++s) {
    const auto pos = static_cast<std::uint32_t>(rng.uniform_index(T));
    const double mag =
        std::min(rng.pareto(cs.spike_scale * mean_kw, cs.spike_alpha),
                 60.0 * mean_kw);
    const auto width = static_cast<std::uint32_t>(1 + rng.uniform_index(2));
    for (std::uint32_t w = 0; w < width && pos + w < T; ++w)
      vals[pos + w] += mag / static_cast<double>(1 + w);
  }
}

// Midday export bell with seasonal swing and cloud noise, scaled so the PV
// energy equals the requested share of the base consumption energy.
inline void synth_pv(RngStream& rng, double energy_share, std::vector<double>& vals) {
  const auto T = static_cast<std::uint32_t>(vals.size());
  const double day = static_cast<double>(std::min<std::uint32_t>(T, 96));
  const double tau = 6.283185307179586;
  const double p_year = tau * rng.uniform();

  double base_energy = 0.0;
  for (double v : vals) base_energy += v;

  std::vector<double> pv(T);
  double pv_sum = 0.0;
  for (std::uint32_t t = 0; t < T; ++t) {
    const double in_day = std::fmod(static_cast<double>(t), day) / day;
    const double bell = std::pow(std::sin(3.141592653589793 * in_day), 2.0);
    const double seasonal =
        0.6 + 0.4 * std::sin(tau * static_cast<double>(t) / T + p_year);
    const double cloud = std::clamp(1.0 + 0.5 * rng.normal(), 0.0, 1.5);
    pv[t] = bell * seasonal * cloud;
    pv_sum += pv[t];
  }
  if (pv_sum <= 0.0) return;
  const double f = energy_share * base_energy / pv_sum;
  for (std::uint32_t t = 0; t < T; ++t) vals[t] -= f * pv[t];
}

}  // namespace detail

inline void CorpusSpec::validate() const {
  if (T < 1) throw ConfigError("corpus spec: horizon must have at least one step");
  if (categories.empty())
    throw ConfigError("corpus spec: no customer categories, corpus would be empty");
  if (!(q_spiky > 0.0 && q_spiky < 1.0))
    throw ConfigError("corpus spec: q_spiky must lie in (0,1)");
  if (min_bins_per_category < 1 || max_bins_per_category < min_bins_per_category)
    throw ConfigError("corpus spec: bad bin count bounds");
  for (const CategorySpec& c : categories) {
    if (!detail::valid_id(c.id))
      throw ConfigError("corpus spec: bad category id '" + c.id + "'");
    if (c.n_bins < min_bins_per_category || c.n_bins > max_bins_per_category)
      throw ConfigError("corpus spec: category '" + c.id + "' bin count outside [" +
                        std::to_string(min_bins_per_category) + ", " +
                        std::to_string(max_bins_per_category) + "]");
    if (c.profiles_per_bin < std::max<std::uint32_t>(1, min_profiles_per_bin))
      throw ConfigError("corpus spec: category '" + c.id + "' has too few profiles per bin");
    if (!(c.gamma_low_kwh >= 0.0 && c.gamma_high_kwh > c.gamma_low_kwh))
      throw ConfigError("corpus spec: category '" + c.id + "' has a bad consumption range");
    if (c.spike_fraction < 0.0 || c.spike_fraction > 1.0 || c.pv_fraction < 0.0 ||
        c.pv_fraction > 1.0)
      throw ConfigError("corpus spec: fractions must lie in [0,1]");
    if (c.pv_energy_share < 0.0 || c.pv_energy_share > 0.8)
      throw ConfigError("corpus spec: pv_energy_share must lie in [0, 0.8]");
    if (!(c.spike_alpha > 0.0 && c.spike_scale > 0.0 && c.spikes_per_year > 0.0))
      throw ConfigError("corpus spec: spike parameters must be positive");
    if (c.noise_level < 0.0 || c.noise_level > 1.0)
      throw ConfigError("corpus spec: noise_level must lie in [0,1]");
  }
  for (const AverageCategorySpec& a : average_categories)
    if (!detail::valid_id(a.id))
      throw ConfigError("corpus spec: bad average category id '" + a.id + "'");
  for (const TelemetrySpec& t : telemetry) {
    if (!detail::valid_id(t.id))
      throw ConfigError("corpus spec: bad telemetry id '" + t.id + "'");
    if (!(t.peak_kw > 0.0))
      throw ConfigError("corpus spec: telemetry peak must be positive");
  }
}

// Build a fully classified synthetic corpus. Pure function of (spec, seed):
// every profile draws from its own counter-based stream, so the output is
// bit-identical across runs and platforms with the same libm.
inline Corpus synthesize_corpus(const CorpusSpec& spec, std::uint64_t seed,
                                SynthLabels* labels = nullptr) {
  spec.validate();
  Corpus corpus;
  corpus.T = spec.T;
  corpus.seed = seed;

  std::vector<double> scratch;
  for (std::size_t ci = 0; ci < spec.categories.size(); ++ci) {
    const CategorySpec& cs = spec.categories[ci];
    const std::size_t total =
        static_cast<std::size_t>(cs.n_bins) * cs.profiles_per_bin;

    std::vector<Profile> profiles(total);
    std::vector<double> gammas(total);
    std::vector<bool> spiked(total), pv(total);
    for (std::size_t p = 0; p < total; ++p) {
      RngStream rng(seed, hash_combine(hash_combine(1, ci), p));
      const double gamma_target =
          cs.gamma_low_kwh + (cs.gamma_high_kwh - cs.gamma_low_kwh) * rng.uniform();
      const double mean_kw = gamma_target / (kStepHours * spec.T);
      detail::synth_base(rng, spec.T, mean_kw, cs.noise_level, scratch);
      spiked[p] = rng.bernoulli(cs.spike_fraction);
      if (spiked[p]) detail::synth_spikes(rng, cs, mean_kw, scratch);
      pv[p] = rng.bernoulli(cs.pv_fraction);
      if (pv[p]) detail::synth_pv(rng, cs.pv_energy_share, scratch);

      Profile& prof = profiles[p];
      char buf[24];
      std::snprintf(buf, sizeof buf, "_p%03u", static_cast<unsigned>(p));
      prof.id = cs.id + buf;
      prof.values = scratch;
      gammas[p] = annual_energy_kwh(prof);
      if (labels) {
        labels->spike_injected[prof.id] = spiked[p];
        labels->pv_injected[prof.id] = pv[p];
      }
    }

    const std::vector<std::uint32_t> assignment = quantile_bin(gammas, cs.n_bins);
    std::vector<Bin> cat_bins(cs.n_bins);
    for (std::uint32_t b = 0; b < cs.n_bins; ++b) {
      cat_bins[b].bin_id = cs.id + "_b" + std::to_string(b);
      cat_bins[b].category_id = cs.id;
      cat_bins[b].consumption_range = {0.0, 0.0};
    }
    for (std::size_t p = 0; p < total; ++p) {
      Bin& bin = cat_bins[assignment[p]];
      Profile normalised = scale_profile(profiles[p], 1.0);
      normalised.id = profiles[p].id;
      bin.profiles.push_back(std::move(normalised));
      auto& range = bin.consumption_range;
      if (bin.profiles.size() == 1) {
        range = {gammas[p], gammas[p]};
      } else {
        range[0] = std::min(range[0], gammas[p]);
        range[1] = std::max(range[1], gammas[p]);
      }
    }
    for (Bin& b : cat_bins) corpus.bins.push_back(std::move(b));
  }

  for (std::size_t ai = 0; ai < spec.average_categories.size(); ++ai) {
    RngStream rng(seed, hash_combine(hash_combine(2, ai), 0));
    detail::synth_base(rng, spec.T, 1.0, 0.0, scratch);
    Profile p;
    p.id = spec.average_categories[ai].id;
    p.values = scratch;
    corpus.average_profiles[p.id] = scale_profile(p, 1.0);
    corpus.average_profiles[p.id].id = p.id;
  }

  for (std::size_t ti = 0; ti < spec.telemetry.size(); ++ti) {
    const TelemetrySpec& ts = spec.telemetry[ti];
    RngStream rng(seed, hash_combine(hash_combine(3, ti), 0));
    detail::synth_base(rng, spec.T, ts.peak_kw * 0.45, 0.05, scratch);
    Profile p;
    p.id = ts.id;
    p.values = scratch;
    corpus.telemetry_profiles[p.id] = std::move(p);
  }

  classify_corpus(corpus, spec.q_spiky);
  corpus.rebuild_index();
  return corpus;
}

inline CorpusSpec corpus_spec_from_json(const nlohmann::json& j) {
  CorpusSpec spec;
  spec.T = j.value("T", spec.T);
  spec.q_spiky = j.value("q_spiky", spec.q_spiky);
  spec.min_bins_per_category = j.value("min_bins_per_category", spec.min_bins_per_category);
  spec.max_bins_per_category = j.value("max_bins_per_category", spec.max_bins_per_category);
  spec.min_profiles_per_bin = j.value("min_profiles_per_bin", spec.min_profiles_per_bin);
  for (const auto& cj : j.value("categories", nlohmann::json::array())) {
    CategorySpec c;
    c.id = cj.at("id").get<std::string>();
    c.n_bins = cj.value("n_bins", c.n_bins);
    c.profiles_per_bin = cj.value("profiles_per_bin", c.profiles_per_bin);
    c.gamma_low_kwh = cj.value("gamma_low_kwh", c.gamma_low_kwh);
    c.gamma_high_kwh = cj.value("gamma_high_kwh", c.gamma_high_kwh);
    c.spike_fraction = cj.value("spike_fraction", c.spike_fraction);
    c.spikes_per_year = cj.value("spikes_per_year", c.spikes_per_year);
    c.spike_scale = cj.value("spike_scale", c.spike_scale);
    c.spike_alpha = cj.value("spike_alpha", c.spike_alpha);
    c.pv_fraction = cj.value("pv_fraction", c.pv_fraction);
    c.pv_energy_share = cj.value("pv_energy_share", c.pv_energy_share);
    c.noise_level = cj.value("noise_level", c.noise_level);
    spec.categories.push_back(std::move(c));
  }
  for (const auto& aj : j.value("average_categories", nlohmann::json::array())) {
    AverageCategorySpec a;
    a.id = aj.at("id").get<std::string>();
    spec.average_categories.push_back(std::move(a));
  }
  for (const auto& tj : j.value("telemetry", nlohmann::json::array())) {
    TelemetrySpec t;
    t.id = tj.at("id").get<std::string>();
    t.peak_kw = tj.value("peak_kw", t.peak_kw);
    spec.telemetry.push_back(std::move(t));
  }
  spec.validate();
  return spec;
}

}  // namespace gridrisk
