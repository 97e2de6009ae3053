#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "gridrisk/profile.hpp"
#include "gridrisk/stats.hpp"

namespace gridrisk {

// Overload direction: positive means demand above the capacity rating,
// negative means net export below minus the rating (feed-in from PV).
enum class Direction { positive, negative };

inline const char* to_string(Direction d) noexcept {
  return d == Direction::positive ? "pos" : "neg";
}

inline Direction direction_from_string(const std::string& s) {
  if (s == "pos") return Direction::positive;
  if (s == "neg") return Direction::negative;
  throw ConfigError("unknown direction '" + s + "' (expected pos or neg)");
}

// A consumption band within one customer category. Profiles are stored
// normalised to unit annual energy; a customer's yearly consumption scales
// them at evaluation time. The spiky/smooth partition is kept per direction.
struct Bin {
  std::string bin_id;
  std::string category_id;
  std::array<double, 2> consumption_range{0.0, 0.0};  // [low, high] kWh/yr
  std::vector<Profile> profiles;
  std::vector<std::uint32_t> spiky_plus;
  std::vector<std::uint32_t> spiky_minus;
  std::vector<std::uint32_t> smooth_plus;   // derived complement
  std::vector<std::uint32_t> smooth_minus;  // derived complement

  const std::vector<std::uint32_t>& spiky(Direction d) const noexcept {
    return d == Direction::positive ? spiky_plus : spiky_minus;
  }
  const std::vector<std::uint32_t>& smooth(Direction d) const noexcept {
    return d == Direction::positive ? smooth_plus : smooth_minus;
  }
  double spiky_fraction(Direction d) const noexcept {
    return profiles.empty() ? 0.0
                            : static_cast<double>(spiky(d).size()) /
                                  static_cast<double>(profiles.size());
  }

  void rebuild_complements() {
    const auto complement = [&](const std::vector<std::uint32_t>& in) {
      std::vector<char> is_in(profiles.size(), 0);
      for (std::uint32_t i : in) is_in.at(i) = 1;
      std::vector<std::uint32_t> out;
      out.reserve(profiles.size() - in.size());
      for (std::uint32_t i = 0; i < profiles.size(); ++i)
        if (!is_in[i]) out.push_back(i);
      return out;
    };
    smooth_plus = complement(spiky_plus);
    smooth_minus = complement(spiky_minus);
  }
};

// Profile corpus: binned measured profiles (group 1), absolute telemetry
// traces (group 2) and normalised per-category average profiles (group 3),
// all on a common time grid of T steps.
struct Corpus {
  std::uint32_t T = 0;
  std::uint64_t seed = 0;
  double q_spiky = 0.95;  // quantile used for the stored classification
  std::vector<Bin> bins;
  std::map<std::string, Profile> average_profiles;    // unit annual energy
  std::map<std::string, Profile> telemetry_profiles;  // absolute kW
  std::map<std::string, std::size_t> bin_index;

  void rebuild_index() {
    bin_index.clear();
    for (std::size_t i = 0; i < bins.size(); ++i) {
      if (!bin_index.emplace(bins[i].bin_id, i).second)
        throw DataError("duplicate bin id '" + bins[i].bin_id + "'");
    }
  }

  const Bin& bin(const std::string& id) const {
    auto it = bin_index.find(id);
    if (it == bin_index.end()) throw DataError("unknown bin id '" + id + "'");
    return bins[it->second];
  }

  std::vector<std::string> group1_categories() const {
    std::vector<std::string> out;
    for (const Bin& b : bins)
      if (std::find(out.begin(), out.end(), b.category_id) == out.end())
        out.push_back(b.category_id);
    return out;
  }
};

// Number of profiles classified spiky: ceil((1-q) * n), at least one.
// Computed as n - floor(q*n) with a nudge so exact-integer products do not
// drift across the floor (0.95 * 100 lands a hair above 95).
inline std::size_t spiky_count(double q, std::size_t n) {
  const double raw = q * static_cast<double>(n);
  const double fl = std::floor(raw + 1e-9);
  auto kept = fl < 0.0 ? std::size_t{0} : static_cast<std::size_t>(fl);
  kept = std::min(kept, n - 1);
  return n - kept;
}

// Split yearly consumptions into n_bins groups of near-equal size (sizes
// differ by at most one; earlier bins take the remainder). Assignment is
// monotone in consumption; ties keep input order.
inline std::vector<std::uint32_t> quantile_bin(
    const std::vector<double>& consumptions, std::uint32_t n_bins) {
  if (consumptions.empty())
    throw ConfigError("quantile_bin: no consumption values");
  if (n_bins == 0) throw ConfigError("quantile_bin: zero bins");
  if (n_bins > consumptions.size())
    throw ConfigError("quantile_bin: more bins than values");

  const std::size_t n = consumptions.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return consumptions[a] < consumptions[b];
  });

  std::vector<std::uint32_t> assignment(n);
  const std::size_t base = n / n_bins;
  const std::size_t extra = n % n_bins;
  std::size_t pos = 0;
  for (std::uint32_t b = 0; b < n_bins; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) assignment[order[pos++]] = b;
  }
  return assignment;
}

// Indices of the profiles whose deviation mass reaches the top
// ceil((1-q)*n) of the bin for the given direction. Ties at the threshold
// are all included, so a bin with identical profiles comes back whole.
inline std::vector<std::uint32_t> classify_spiky(const Bin& bin, double q_spiky,
                                                 Direction dir) {
  const std::size_t n = bin.profiles.size();
  if (n == 0) throw ContractViolation("classify_spiky: empty bin");
  if (!(q_spiky > 0.0 && q_spiky < 1.0))
    throw ConfigError("classify_spiky: quantile must lie in (0,1)");

  const Profile med = median_profile(bin.profiles);
  std::vector<double> delta(n);
  for (std::size_t i = 0; i < n; ++i)
    delta[i] = dir == Direction::positive ? delta_plus(bin.profiles[i], med)
                                          : delta_minus(bin.profiles[i], med);

  const std::size_t count = spiky_count(q_spiky, n);
  std::vector<double> sorted = delta;
  std::nth_element(sorted.begin(), sorted.begin() + (count - 1), sorted.end(),
                   std::greater<>());
  const double threshold = sorted[count - 1];

  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < n; ++i)
    if (delta[i] >= threshold) out.push_back(i);
  return out;
}

// Classify every bin in both directions and rebuild the set partitions.
// A bin whose deviation metric cannot separate anything (all profiles tied)
// ends up all-spiky; that is reported but kept usable.
inline void classify_corpus(Corpus& corpus, double q_spiky) {
  for (Bin& b : corpus.bins) {
    b.spiky_plus = classify_spiky(b, q_spiky, Direction::positive);
    b.spiky_minus = classify_spiky(b, q_spiky, Direction::negative);
    b.rebuild_complements();
    if (b.spiky_plus.size() == b.profiles.size() ||
        b.spiky_minus.size() == b.profiles.size())
      std::cerr << "warning: bin '" << b.bin_id
                << "' has a degenerate deviation metric; every profile "
                   "classified spiky\n";
  }
  corpus.q_spiky = q_spiky;
}

}  // namespace gridrisk
