#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gridrisk/ce.hpp"

namespace gridrisk {

// Per-bin spiky-set probabilities generalised from a collection of
// optimised runs, applicable to assets never optimised themselves.
struct GeneralizedBinProbs {
  Direction direction = Direction::positive;
  double threshold = 0.15;
  std::uint32_t max_customers = 80;
  double q_spiky = 0.95;
  std::map<std::string, double> bin_probs;
  std::vector<std::string> source_assets;
};

// Average the optimised per-customer probabilities per bin over all small
// enough source assets. A bin whose average does not clear the threshold
// keeps its nominal spiky share instead: a weak tilt generalises worse
// than none. Everything is re-clamped into the usual bounds.
inline GeneralizedBinProbs derive_bin_probs(const std::vector<CETrace>& ce_results,
                                            const Corpus& corpus, Direction dir,
                                            std::uint32_t max_customers = 80,
                                            double threshold = 0.15,
                                            bool per_asset_mean = false) {
  GeneralizedBinProbs gen;
  gen.direction = dir;
  gen.threshold = threshold;
  gen.max_customers = max_customers;
  gen.q_spiky = corpus.q_spiky;

  struct Acc {
    double sum = 0.0;
    std::uint64_t count = 0;
  };
  std::map<std::string, Acc> acc;
  std::set<std::string> sources;

  for (const CETrace& t : ce_results) {
    if (t.direction != dir) continue;
    if (t.customer_bins.size() != t.v_final.size())
      throw DataError("optimised run for asset '" + t.asset_id +
                      "' has mismatched bins and parameters");
    if (t.customer_bins.size() >= max_customers) continue;
    sources.insert(t.asset_id);
    if (per_asset_mean) {
      // Mean of per-asset means: every source asset counts once per bin.
      std::map<std::string, Acc> local;
      for (std::size_t i = 0; i < t.customer_bins.size(); ++i) {
        Acc& a = local[t.customer_bins[i]];
        a.sum += t.v_final[i];
        ++a.count;
      }
      for (const auto& [bin_id, a] : local) {
        Acc& g = acc[bin_id];
        g.sum += a.sum / static_cast<double>(a.count);
        ++g.count;
      }
    } else {
      // Flat mean over every (asset, customer) pair.
      for (std::size_t i = 0; i < t.customer_bins.size(); ++i) {
        Acc& a = acc[t.customer_bins[i]];
        a.sum += t.v_final[i];
        ++a.count;
      }
    }
  }
  if (sources.empty())
    throw ConfigError(
        "no optimised runs left after filtering; nothing to generalise from");
  gen.source_assets.assign(sources.begin(), sources.end());

  const double lo = 1.0 - corpus.q_spiky;
  const double hi = 0.9;
  for (const Bin& b : corpus.bins) {
    double p;
    const auto it = acc.find(b.bin_id);
    if (it != acc.end() &&
        it->second.sum / static_cast<double>(it->second.count) > threshold) {
      p = it->second.sum / static_cast<double>(it->second.count);
    } else {
      if (it == acc.end())
        std::cerr << "warning: bin '" << b.bin_id
                  << "' appears in no optimised run; keeping its nominal "
                     "probability\n";
      p = b.spiky_fraction(dir);
    }
    gen.bin_probs[b.bin_id] = std::clamp(p, lo, hi);
  }
  return gen;
}

// Sampling parameters for an asset from generalised probabilities: every
// customer gets its bin's generalised value, the nominal side stays the
// plain spiky share.
inline ISParams apply_generalized(const DemandEvaluator& ev,
                                  const GeneralizedBinProbs& gen) {
  ISParams params;
  params.direction = gen.direction;
  params.u = initial_u(ev, gen.direction);
  params.v.resize(ev.n_s());
  for (std::size_t i = 0; i < ev.n_s(); ++i) {
    const auto it = gen.bin_probs.find(ev.customer_bin(i).bin_id);
    if (it == gen.bin_probs.end())
      throw DataError("no generalised probability for bin '" +
                      ev.customer_bin(i).bin_id + "'");
    params.v[i] = it->second;
  }
  params.validate();
  return params;
}

inline nlohmann::json bin_probs_to_json(const GeneralizedBinProbs& gen) {
  return {{"threshold", gen.threshold},
          {"max_customers", gen.max_customers},
          {"q_spiky", gen.q_spiky},
          {"source_assets", gen.source_assets},
          {"bin_probs", gen.bin_probs}};
}

inline GeneralizedBinProbs bin_probs_from_json(const nlohmann::json& j,
                                               Direction dir) {
  GeneralizedBinProbs gen;
  gen.direction = dir;
  gen.threshold = j.value("threshold", gen.threshold);
  gen.max_customers = j.value("max_customers", gen.max_customers);
  gen.q_spiky = j.value("q_spiky", gen.q_spiky);
  gen.source_assets = j.value("source_assets", std::vector<std::string>{});
  gen.bin_probs = j.at("bin_probs").get<std::map<std::string, double>>();
  return gen;
}

// File holds one entry per direction so a single artifact serves both
// overload senses.
inline void save_bin_probs(const std::map<Direction, GeneralizedBinProbs>& by_dir,
                           const std::filesystem::path& path) {
  nlohmann::json j;
  j["schema_version"] = 1;
  nlohmann::json dirs;
  for (const auto& [dir, gen] : by_dir) dirs[to_string(dir)] = bin_probs_to_json(gen);
  j["directions"] = std::move(dirs);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  os << j.dump(2) << "\n";
}

inline std::map<Direction, GeneralizedBinProbs> load_bin_probs(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  if (j.value("schema_version", 0) != 1)
    throw DataError("'" + path.string() + "' has an unsupported schema version");
  std::map<Direction, GeneralizedBinProbs> out;
  for (const auto& [key, gj] : j.at("directions").items()) {
    const Direction dir = direction_from_string(key);
    out[dir] = bin_probs_from_json(gj, dir);
  }
  if (out.empty())
    throw DataError("'" + path.string() + "' holds no generalised probabilities");
  return out;
}

}  // namespace gridrisk
