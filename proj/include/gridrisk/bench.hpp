#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "gridrisk/asset_io.hpp"
#include "gridrisk/ce.hpp"
#include "gridrisk/generalize.hpp"
#include "gridrisk/welch.hpp"

namespace gridrisk {

struct RunRecord {
  std::string asset_id;
  Method method = Method::mc;
  Direction direction = Direction::positive;
  std::uint32_t replicate = 0;
  std::uint64_t seed = 0;
  std::uint32_t m = 0;
  bool failed = false;
  RiskEstimate estimate;
};

inline nlohmann::json run_record_to_json(const RunRecord& r) {
  return {{"schema_version", 1},
          {"asset_id", r.asset_id},
          {"method", to_string(r.method)},
          {"direction", to_string(r.direction)},
          {"replicate", r.replicate},
          {"seed", r.seed},
          {"m", r.m},
          {"failed", r.failed},
          {"r_hat", r.estimate.r_hat},
          {"beta", r.estimate.beta},
          {"n", r.estimate.n},
          {"elapsed_s", r.estimate.elapsed_s},
          {"converged", r.estimate.converged},
          {"zero_flagged", r.estimate.zero_flagged},
          {"ess", r.estimate.ess},
          {"warnings", r.estimate.warnings}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != 1)
    throw DataError("run record has an unsupported schema version");
  RunRecord r;
  r.asset_id = j.at("asset_id").get<std::string>();
  r.method = method_from_string(j.at("method").get<std::string>());
  r.direction = direction_from_string(j.at("direction").get<std::string>());
  r.replicate = j.value("replicate", 0u);
  r.seed = j.value("seed", std::uint64_t{0});
  r.m = j.value("m", 0u);
  r.failed = j.value("failed", false);
  r.estimate.method = r.method;
  r.estimate.direction = r.direction;
  r.estimate.r_hat = j.at("r_hat").get<double>();
  r.estimate.beta = j.at("beta").get<double>();
  r.estimate.n = j.at("n").get<std::uint64_t>();
  r.estimate.elapsed_s = j.at("elapsed_s").get<double>();
  r.estimate.converged = j.at("converged").get<bool>();
  r.estimate.zero_flagged = j.at("zero_flagged").get<bool>();
  r.estimate.ess = j.value("ess", 0.0);
  r.estimate.warnings = j.value("warnings", std::vector<std::string>{});
  return r;
}

inline void write_runs_jsonl(std::span<const RunRecord> records, std::ostream& os) {
  for (const RunRecord& r : records) os << run_record_to_json(r).dump() << "\n";
}

inline void write_runs_jsonl(std::span<const RunRecord> records,
                             const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  write_runs_jsonl(records, os);
}

inline std::vector<RunRecord> read_runs_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path.string() + "'");
  std::vector<RunRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(run_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("'" + path.string() + "' line " + std::to_string(line_no) +
                      ": " + e.what());
    }
  }
  if (records.empty()) throw DataError("'" + path.string() + "' holds no runs");
  return records;
}

struct CampaignConfig {
  std::vector<Method> methods{Method::ref, Method::mc, Method::ce_is};
  std::vector<Direction> directions{Direction::positive, Direction::negative};
  std::uint32_t replicates = 9;
  CEConfig ce;  // carries the shared m / beta_target / n_max / batch too
  std::map<Direction, GeneralizedBinProbs> gen_probs;  // required for gen-is
  unsigned workers = 1;

  void validate() const {
    ce.validate();
    if (methods.empty()) throw ConfigError("campaign: no methods");
    if (directions.empty()) throw ConfigError("campaign: no directions");
    if (replicates < 1) throw ConfigError("campaign: zero replicates");
    for (Method mth : methods)
      if (mth == Method::gen_is)
        for (Direction d : directions)
          if (gen_probs.find(d) == gen_probs.end())
            throw ConfigError(
                "campaign: gen-is requested without generalised probabilities "
                "for direction " + std::string(to_string(d)));
  }
};

namespace detail {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Per-cell seed from the campaign seed and the cell coordinates, so any
// single record can be reproduced in isolation.
inline std::uint64_t cell_seed(std::uint64_t campaign_seed, const std::string& asset_id,
                               Method method, Direction dir, std::uint32_t replicate) {
  const std::string key = asset_id + "\x1f" + to_string(method) + "\x1f" +
                          to_string(dir) + "\x1f" + std::to_string(replicate);
  return hash_combine(campaign_seed, fnv1a64(key));
}

}  // namespace detail

// Run every (asset, direction, method, replicate) cell. Cells execute on a
// small worker pool, each into its own result slot keyed by cell index, so
// the record order and content are independent of scheduling. A cell that
// throws becomes a failed record carrying the message; the campaign
// continues.
inline std::vector<RunRecord> run_campaign(const std::vector<Asset>& assets,
                                           const Corpus& corpus,
                                           const CampaignConfig& cfg,
                                           std::uint64_t campaign_seed) {
  cfg.validate();
  if (assets.empty()) throw ConfigError("campaign: no assets");

  struct Cell {
    const Asset* asset;
    Direction dir;
    Method method;
    std::uint32_t replicate;
  };
  std::vector<Cell> cells;
  for (const Asset& a : assets)
    for (Direction d : cfg.directions)
      for (Method mth : cfg.methods)
        for (std::uint32_t rep = 0; rep < cfg.replicates; ++rep)
          cells.push_back({&a, d, mth, rep});

  // Evaluators are shared per asset across cells; building one can fail on
  // bad data, which must fail that asset's cells, not the campaign.
  std::map<std::string, DemandEvaluator> evaluators;
  std::map<std::string, std::string> broken;
  for (const Asset& a : assets) {
    try {
      evaluators.emplace(a.asset_id, DemandEvaluator(a, corpus));
    } catch (const std::exception& e) {
      broken.emplace(a.asset_id, e.what());
    }
  }

  const EstimatorConfig est_cfg = cfg.ce.estimator();
  std::vector<RunRecord> records(cells.size());
  std::atomic<std::size_t> next{0};

  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      RunRecord& rec = records[i];
      rec.asset_id = cell.asset->asset_id;
      rec.method = cell.method;
      rec.direction = cell.dir;
      rec.replicate = cell.replicate;
      rec.m = est_cfg.m;
      rec.seed = detail::cell_seed(campaign_seed, cell.asset->asset_id, cell.method,
                                   cell.dir, cell.replicate);
      rec.estimate.method = cell.method;
      rec.estimate.direction = cell.dir;
      try {
        const auto bit = broken.find(cell.asset->asset_id);
        if (bit != broken.end()) throw DataError(bit->second);
        const DemandEvaluator& ev = evaluators.at(cell.asset->asset_id);
        switch (cell.method) {
          case Method::ref:
            rec.estimate = run_reference(ev, cell.dir, est_cfg, rec.seed);
            break;
          case Method::mc:
            rec.estimate = run_mc(ev, cell.dir, est_cfg, rec.seed);
            break;
          case Method::ce_is:
            rec.estimate = ce_estimate(ev, cell.dir, cfg.ce, rec.seed);
            break;
          case Method::gen_is: {
            const ISParams params =
                apply_generalized(ev, cfg.gen_probs.at(cell.dir));
            rec.estimate = run_is(ev, params, est_cfg, rec.seed, Method::gen_is);
            break;
          }
        }
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.estimate = RiskEstimate{};
        rec.estimate.method = cell.method;
        rec.estimate.direction = cell.dir;
        rec.estimate.warnings.push_back(e.what());
      }
    }
  };

  if (cfg.workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < cfg.workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return records;
}

enum class Accuracy { accurate, inaccurate, insufficient };

inline const char* to_string(Accuracy a) noexcept {
  switch (a) {
    case Accuracy::accurate: return "accurate";
    case Accuracy::inaccurate: return "inaccurate";
    default: return "insufficient";
  }
}

struct AccuracyVerdict {
  std::string asset_id;
  Direction direction = Direction::positive;
  Method method = Method::mc;
  Accuracy verdict = Accuracy::insufficient;
  double p = -1.0;  // -1 when the test could not run
  double t = 0.0;
};

// Core of the accuracy filter: Welch's t-test of a method's replicate
// estimates against the reference ones.
inline Accuracy welch_verdict(std::span<const double> method_rhats,
                              std::span<const double> ref_rhats,
                              double significance, double* p_out = nullptr,
                              double* t_out = nullptr) {
  if (method_rhats.size() < 2 || ref_rhats.size() < 2) return Accuracy::insufficient;
  const WelchResult res = welch_t_test(method_rhats, ref_rhats);
  if (p_out) *p_out = res.p;
  if (t_out) *t_out = res.t;
  return res.p < significance ? Accuracy::inaccurate : Accuracy::accurate;
}

// One verdict per (asset, direction, non-reference method) present in the
// records. Failed runs contribute nothing; a side with fewer than two
// usable replicates cannot be tested and is marked so.
inline std::vector<AccuracyVerdict> welch_filter(std::span<const RunRecord> records,
                                                 double significance = 0.05) {
  if (!(significance > 0.0 && significance < 1.0))
    throw ConfigError("welch_filter: significance must lie in (0,1)");
  using CellKey = std::tuple<std::string, int, int>;  // asset, dir, method
  std::map<CellKey, std::vector<double>> rhats;
  for (const RunRecord& r : records) {
    if (r.failed) continue;
    rhats[{r.asset_id, static_cast<int>(r.direction), static_cast<int>(r.method)}]
        .push_back(r.estimate.r_hat);
  }
  std::vector<AccuracyVerdict> verdicts;
  for (const auto& [key, values] : rhats) {
    const auto& [asset_id, dir_i, method_i] = key;
    const auto method = static_cast<Method>(method_i);
    if (method == Method::ref) continue;
    AccuracyVerdict v;
    v.asset_id = asset_id;
    v.direction = static_cast<Direction>(dir_i);
    v.method = method;
    const auto ref_it =
        rhats.find({asset_id, dir_i, static_cast<int>(Method::ref)});
    if (ref_it == rhats.end()) {
      v.verdict = Accuracy::insufficient;
    } else {
      v.verdict = welch_verdict(values, ref_it->second, significance, &v.p, &v.t);
    }
    verdicts.push_back(std::move(v));
  }
  return verdicts;
}

// Runtime a run would have needed to reach the target relative error,
// under the 1/sqrt(n) error law: time scales with (beta / target)^2.
inline double extrapolate_time(double elapsed_s, double beta_current,
                               double beta_target) {
  if (!(beta_target > 0.0))
    throw ConfigError("extrapolate_time: target must be positive");
  if (!(elapsed_s >= 0.0) || !(beta_current >= 0.0))
    throw ContractViolation("extrapolate_time: negative inputs");
  if (beta_current <= beta_target) return elapsed_s;
  const double f = beta_current / beta_target;
  return elapsed_s * f * f;
}

struct ReportOptions {
  double significance = 0.05;
  double beta_target = 0.1;
  bool ratio_of_grand_means = false;  // alternative aggregation across cells
};

struct SpeedupReport {
  struct Row {
    int magnitude = 0;  // floor(log10 r)
    Method method = Method::mc;
    double mean_speedup = 0.0;
    std::uint32_t n_cells = 0;
  };
  struct HistRow {
    int magnitude = 0;
    Method method = Method::mc;
    std::uint32_t count = 0;
  };
  struct CellDetail {
    std::string asset_id;
    Direction direction = Direction::positive;
    Method method = Method::mc;
    int magnitude = 0;
    double speedup = 0.0;
  };

  std::vector<Row> rows;
  std::vector<HistRow> histogram;
  std::vector<CellDetail> cells;
  std::vector<AccuracyVerdict> verdicts;
  std::uint32_t excluded_failed = 0;
  std::uint32_t excluded_zero = 0;
  std::uint32_t excluded_inaccurate = 0;
  std::uint32_t excluded_insufficient = 0;
};

// Aggregate a campaign into speedup-per-magnitude tables. Reference runs
// anchor both the decimal magnitude of each asset-direction cell and the
// time a method's speedup is measured against. Non-converged runs enter
// with their extrapolated time; zero estimates carry no usable magnitude
// or time, so they are dropped and counted.
inline SpeedupReport speedup_report(std::span<const RunRecord> records,
                                    const ReportOptions& opts = {}) {
  SpeedupReport rep;
  rep.verdicts = welch_filter(records, opts.significance);

  std::map<std::pair<std::string, int>, std::map<int, Accuracy>> verdict_of;
  for (const AccuracyVerdict& v : rep.verdicts)
    verdict_of[{v.asset_id, static_cast<int>(v.direction)}]
              [static_cast<int>(v.method)] = v.verdict;

  using CellKey = std::pair<std::string, int>;  // asset, dir
  std::map<CellKey, std::map<int, std::vector<const RunRecord*>>> groups;
  for (const RunRecord& r : records) {
    if (r.failed) {
      ++rep.excluded_failed;
      continue;
    }
    groups[{r.asset_id, static_cast<int>(r.direction)}]
          [static_cast<int>(r.method)].push_back(&r);
  }

  // Usable records of one method within a cell: nonzero estimates with
  // their effective (possibly extrapolated) times.
  const auto collect = [&](const std::vector<const RunRecord*>& runs, double& mean_time,
                           double& mean_rhat, std::uint32_t& kept) {
    double time_sum = 0.0, rhat_sum = 0.0;
    kept = 0;
    for (const RunRecord* r : runs) {
      if (r->estimate.zero_flagged || r->estimate.r_hat <= 0.0) {
        ++rep.excluded_zero;
        continue;
      }
      const double beta = r->estimate.converged
                              ? opts.beta_target
                              : std::max(r->estimate.beta, opts.beta_target);
      time_sum += extrapolate_time(r->estimate.elapsed_s, beta, opts.beta_target);
      rhat_sum += r->estimate.r_hat;
      ++kept;
    }
    if (kept > 0) {
      mean_time = time_sum / kept;
      mean_rhat = rhat_sum / kept;
    }
  };

  struct BinAcc {
    double speedup_sum = 0.0;
    double ref_time_sum = 0.0;
    double method_time_sum = 0.0;
    std::uint32_t cells = 0;
  };
  std::map<std::pair<int, int>, BinAcc> bins;       // (magnitude, method)
  std::map<std::pair<int, int>, std::uint32_t> hist;  // (magnitude, method)

  for (const auto& [key, by_method] : groups) {
    const auto& [asset_id, dir_i] = key;
    double ref_time = 0.0, ref_rhat = 0.0;
    std::uint32_t ref_kept = 0;
    const auto ref_it = by_method.find(static_cast<int>(Method::ref));
    if (ref_it != by_method.end())
      collect(ref_it->second, ref_time, ref_rhat, ref_kept);
    const bool has_ref = ref_kept > 0;
    if (has_ref) {
      const int mag = static_cast<int>(std::floor(std::log10(ref_rhat)));
      ++hist[{mag, static_cast<int>(Method::ref)}];
    }

    for (const auto& [method_i, runs] : by_method) {
      if (method_i == static_cast<int>(Method::ref)) continue;
      double method_time = 0.0, method_rhat = 0.0;
      std::uint32_t kept = 0;
      collect(runs, method_time, method_rhat, kept);
      if (kept == 0) continue;

      const auto vd_it = verdict_of.find({asset_id, dir_i});
      const Accuracy verdict = vd_it != verdict_of.end() &&
                                       vd_it->second.count(method_i)
                                   ? vd_it->second.at(method_i)
                                   : Accuracy::insufficient;
      if (verdict == Accuracy::inaccurate) {
        rep.excluded_inaccurate += kept;
        continue;
      }
      if (verdict == Accuracy::insufficient) {
        rep.excluded_insufficient += kept;
        continue;
      }

      // Magnitude comes from the reference estimate when one exists, else
      // from the method's own mean.
      const double anchor = has_ref ? ref_rhat : method_rhat;
      const int mag = static_cast<int>(std::floor(std::log10(anchor)));
      ++hist[{mag, method_i}];
      if (!has_ref) continue;  // no speedup without a reference time

      const double speedup = ref_time / method_time;
      BinAcc& acc = bins[{mag, method_i}];
      acc.speedup_sum += speedup;
      acc.ref_time_sum += ref_time;
      acc.method_time_sum += method_time;
      ++acc.cells;
      rep.cells.push_back({asset_id, static_cast<Direction>(dir_i),
                           static_cast<Method>(method_i), mag, speedup});
    }
  }

  for (const auto& [key, acc] : bins) {
    SpeedupReport::Row row;
    row.magnitude = key.first;
    row.method = static_cast<Method>(key.second);
    row.n_cells = acc.cells;
    row.mean_speedup = opts.ratio_of_grand_means
                           ? acc.ref_time_sum / acc.method_time_sum
                           : acc.speedup_sum / acc.cells;
    rep.rows.push_back(row);
  }
  for (const auto& [key, count] : hist)
    rep.histogram.push_back({key.first, static_cast<Method>(key.second), count});
  return rep;
}

inline nlohmann::json speedup_report_to_json(const SpeedupReport& rep) {
  nlohmann::json j;
  j["schema_version"] = 1;
  auto rows = nlohmann::json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"magnitude", r.magnitude},
                    {"method", to_string(r.method)},
                    {"mean_speedup", r.mean_speedup},
                    {"n_cells", r.n_cells}});
  j["speedups"] = std::move(rows);
  auto hist = nlohmann::json::array();
  for (const auto& h : rep.histogram)
    hist.push_back({{"magnitude", h.magnitude},
                    {"method", to_string(h.method)},
                    {"count", h.count}});
  j["histogram"] = std::move(hist);
  auto verdicts = nlohmann::json::array();
  for (const auto& v : rep.verdicts)
    verdicts.push_back({{"asset_id", v.asset_id},
                        {"direction", to_string(v.direction)},
                        {"method", to_string(v.method)},
                        {"verdict", to_string(v.verdict)},
                        {"p", v.p}});
  j["verdicts"] = std::move(verdicts);
  j["excluded"] = {{"failed", rep.excluded_failed},
                   {"zero", rep.excluded_zero},
                   {"inaccurate", rep.excluded_inaccurate},
                   {"insufficient", rep.excluded_insufficient}};
  return j;
}

inline std::string speedup_report_to_csv(const SpeedupReport& rep) {
  std::ostringstream os;
  os << "section,magnitude,method,value,count\n";
  for (const auto& r : rep.rows)
    os << "speedup," << r.magnitude << ',' << to_string(r.method) << ','
       << r.mean_speedup << ',' << r.n_cells << "\n";
  for (const auto& h : rep.histogram)
    os << "histogram," << h.magnitude << ',' << to_string(h.method) << ",,"
       << h.count << "\n";
  os << "excluded,,failed,," << rep.excluded_failed << "\n";
  os << "excluded,,zero,," << rep.excluded_zero << "\n";
  os << "excluded,,inaccurate,," << rep.excluded_inaccurate << "\n";
  os << "excluded,,insufficient,," << rep.excluded_insufficient << "\n";
  return os.str();
}

inline std::string speedup_report_to_text(const SpeedupReport& rep) {
  std::ostringstream os;
  os << "speedup vs reference, by decimal magnitude of the estimate\n";
  os << std::left << std::setw(12) << "magnitude" << std::setw(10) << "method"
     << std::right << std::setw(14) << "mean speedup" << std::setw(9) << "cells"
     << "\n";
  for (const auto& r : rep.rows) {
    std::ostringstream mag;
    mag << "1e" << r.magnitude;
    os << std::left << std::setw(12) << mag.str() << std::setw(10)
       << to_string(r.method) << std::right << std::setw(14) << std::fixed
       << std::setprecision(2) << r.mean_speedup << std::setw(9) << r.n_cells
       << "\n";
  }
  os << "\nestimates per magnitude\n";
  os << std::left << std::setw(12) << "magnitude" << std::setw(10) << "method"
     << std::right << std::setw(9) << "count" << "\n";
  for (const auto& h : rep.histogram) {
    std::ostringstream mag;
    mag << "1e" << h.magnitude;
    os << std::left << std::setw(12) << mag.str() << std::setw(10)
       << to_string(h.method) << std::right << std::setw(9) << h.count << "\n";
  }
  os << "\nexcluded records: " << rep.excluded_failed << " failed, "
     << rep.excluded_zero << " zero, " << rep.excluded_inaccurate
     << " inaccurate, " << rep.excluded_insufficient << " untestable\n";
  return os.str();
}

}  // namespace gridrisk
