#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gridrisk/estimators.hpp"
#include "json.hpp"

namespace gridrisk {

struct CEConfig {
  std::uint32_t m = 2000;        // time steps sampled per trace
  std::uint32_t n_opt = 500;     // traces per optimisation iteration
  double rho = 0.05;             // elite quantile level
  double alpha = 0.6;            // smoothing weight on the new parameters
  double q_spiky = 0.95;         // classification quantile; sets the lower bound
  double beta_target = 0.1;
  std::uint64_t n_max = 20000;   // total trace budget, optimisation included
  std::uint64_t n_max_zero = 10000;  // abort level when nothing ever exceeds
  std::uint32_t batch = 50;      // estimation-stage traces per convergence check
  double d_opt_init_factor = 0.5;    // first threshold as a share of the rating
  bool monotone_threshold = true;    // keep d_opt non-decreasing across iterations
  bool full_year_max_load = false;   // rate iteration maxima over every step
  unsigned threads = 1;

  void validate() const {
    if (m < 1 || n_opt < 2) throw ConfigError("ce config: m and n_opt too small");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("ce config: rho must lie in (0,1)");
    if (!(alpha > 0.0 && alpha <= 1.0))
      throw ConfigError("ce config: alpha must lie in (0,1]");
    if (!(q_spiky > 0.0 && q_spiky < 1.0))
      throw ConfigError("ce config: q_spiky must lie in (0,1)");
    if (!(beta_target > 0.0)) throw ConfigError("ce config: beta_target must be positive");
    if (n_max < 1 || batch < 1) throw ConfigError("ce config: bad budget");
    if (!(d_opt_init_factor > 0.0))
      throw ConfigError("ce config: threshold init factor must be positive");
  }

  EstimatorConfig estimator() const {
    EstimatorConfig cfg;
    cfg.m = m;
    cfg.beta_target = beta_target;
    cfg.n_max = n_max;
    cfg.batch = batch;
    cfg.threads = threads;
    return cfg;
  }

  nlohmann::json to_json() const {
    return {{"m", m},
            {"n_opt", n_opt},
            {"rho", rho},
            {"alpha", alpha},
            {"q_spiky", q_spiky},
            {"beta_target", beta_target},
            {"n_max", n_max},
            {"n_max_zero", n_max_zero},
            {"batch", batch},
            {"d_opt_init_factor", d_opt_init_factor},
            {"monotone_threshold", monotone_threshold},
            {"full_year_max_load", full_year_max_load}};
  }

  static CEConfig from_json(const nlohmann::json& j) {
    CEConfig c;
    c.m = j.value("m", c.m);
    c.n_opt = j.value("n_opt", c.n_opt);
    c.rho = j.value("rho", c.rho);
    c.alpha = j.value("alpha", c.alpha);
    c.q_spiky = j.value("q_spiky", c.q_spiky);
    c.beta_target = j.value("beta_target", c.beta_target);
    c.n_max = j.value("n_max", c.n_max);
    c.n_max_zero = j.value("n_max_zero", c.n_max_zero);
    c.batch = j.value("batch", c.batch);
    c.d_opt_init_factor = j.value("d_opt_init_factor", c.d_opt_init_factor);
    c.monotone_threshold = j.value("monotone_threshold", c.monotone_threshold);
    c.full_year_max_load = j.value("full_year_max_load", c.full_year_max_load);
    c.validate();
    return c;
  }
};

struct CEIterationRecord {
  std::uint32_t k = 0;
  double d_opt = 0.0;     // threshold after this iteration's update
  double quantile = 0.0;  // raw (1-rho) quantile of the iteration maxima
  std::vector<double> v;  // parameters after smoothing and bounding
  double r_hat = 0.0;     // running weighted estimate at the true rating
  double beta = 0.0;
  std::uint64_t samples = 0;  // optimisation traces consumed so far
  bool elite_empty = false;
};

struct CETrace {
  std::string asset_id;
  Direction direction = Direction::positive;
  std::vector<std::string> customer_bins;
  std::vector<double> u;
  double d_opt_init = 0.0;
  CEConfig config;
  std::vector<CEIterationRecord> iterations;
  std::vector<double> v_final;
  double r_hat = 0.0;
  double beta = 0.0;
  std::uint64_t n = 0;
  bool converged = false;
  bool zero_flagged = false;
};

// Weighted elite update: the new spiky probability of customer i is the
// share of weighted overload mass carried by samples that assigned i to
// the spiky set. Minimises cross entropy against the zero-variance target
// within the Bernoulli family.
inline std::vector<double> ce_update(const std::vector<CategoryAssignment>& xs,
                                     const std::vector<double>& h_tilde,
                                     const std::vector<double>& w) {
  if (xs.empty() || xs.size() != h_tilde.size() || xs.size() != w.size())
    throw ContractViolation("ce_update: sample arrays disagree");
  const std::size_t n_s = xs[0].x.size();
  double denom = 0.0;
  std::vector<double> num(n_s, 0.0);
  for (std::size_t j = 0; j < xs.size(); ++j) {
    if (xs[j].x.size() != n_s)
      throw ContractViolation("ce_update: assignment sizes disagree");
    const double hw = h_tilde[j] * w[j];
    denom += hw;
    if (hw != 0.0)
      for (std::size_t i = 0; i < n_s; ++i)
        if (xs[j].x[i]) num[i] += hw;
  }
  if (!(denom > 0.0))
    throw EliteSetEmpty("ce_update: no weighted overload mass in the sample");
  std::vector<double> v(n_s);
  for (std::size_t i = 0; i < n_s; ++i)
    v[i] = std::clamp(num[i] / denom, 0.0, 1.0);
  return v;
}

// Smoothed update clamped into [1 - q_spiky, 0.9]: the lower bound keeps
// every nominal draw reachable (weights stay bounded), the upper one stops
// the sampler from abandoning the smooth sets entirely.
inline std::vector<double> smooth_and_bound(const std::vector<double>& v_new,
                                            const std::vector<double>& v_prev,
                                            double alpha, double q_spiky) {
  if (v_new.size() != v_prev.size())
    throw ContractViolation("smooth_and_bound: size mismatch");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ConfigError("smooth_and_bound: alpha must lie in (0,1]");
  if (!(q_spiky > 0.0 && q_spiky < 1.0))
    throw ConfigError("smooth_and_bound: q_spiky must lie in (0,1)");
  const double lo = 1.0 - q_spiky;
  const double hi = 0.9;
  std::vector<double> out(v_new.size());
  for (std::size_t i = 0; i < v_new.size(); ++i)
    out[i] = std::clamp(alpha * v_new[i] + (1.0 - alpha) * v_prev[i], lo, hi);
  return out;
}

// Elite threshold candidate: the empirical (1 - rho) quantile of the
// per-trace maximum loads.
inline double update_threshold(const std::vector<double>& max_loads, double rho) {
  if (max_loads.empty())
    throw ContractViolation("update_threshold: no maxima");
  if (!(rho > 0.0 && rho < 1.0))
    throw ConfigError("update_threshold: rho must lie in (0,1)");
  return empirical_quantile(max_loads, 1.0 - rho);
}

namespace detail {

inline void ce_finalize(RiskEstimate& est, CETrace& trace,
                        const std::vector<double>& v_final,
                        std::chrono::steady_clock::time_point t0,
                        CETrace* trace_out) {
  est.elapsed_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  trace.v_final = v_final;
  trace.r_hat = est.r_hat;
  trace.beta = est.beta;
  trace.n = est.n;
  trace.converged = est.converged;
  trace.zero_flagged = est.zero_flagged;
  if (trace_out) *trace_out = trace;
}

}  // namespace detail

// Sequential cross-entropy estimator. Starting from the nominal parameters
// it raises an intermediate threshold through the (1 - rho) quantile of the
// sampled maximum loads, re-tilting the per-customer probabilities toward
// samples that crossed it, until the threshold clears the capacity rating;
// the overload probability is then estimated under the frozen tilt with
// batched convergence checks. Early exits: the running weighted estimate at
// the rating may converge first, and a long streak with no exceedance at
// all declares the probability numerically zero.
inline RiskEstimate ce_estimate(const DemandEvaluator& ev, Direction dir,
                                const CEConfig& cfg, std::uint64_t seed,
                                CETrace* trace_out = nullptr) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const double d_cap = ev.asset().d_cap_kw;
  const std::uint32_t T = ev.T();
  const std::uint32_t m = std::min(cfg.m, T);
  const TimeSample full = TimeSample::full_year(T);

  ISParams cur;
  cur.u = initial_u(ev, dir);
  cur.v = cur.u;
  cur.direction = dir;
  cur.validate();

  RiskEstimate est;
  est.method = Method::ce_is;
  est.direction = dir;
  if (ev.n_s() > 80)
    est.warnings.push_back(
        "asset has more than 80 smart-meter customers; the per-customer "
        "optimisation may converge poorly");

  CETrace trace;
  trace.asset_id = ev.asset().asset_id;
  trace.direction = dir;
  trace.config = cfg;
  trace.u = cur.u;
  for (std::size_t i = 0; i < ev.n_s(); ++i)
    trace.customer_bins.push_back(ev.customer_bin(i).bin_id);
  double d_opt = cfg.d_opt_init_factor * d_cap;
  trace.d_opt_init = d_opt;

  const std::uint32_t n_opt = cfg.n_opt;
  std::vector<double> demands(static_cast<std::size_t>(n_opt) * m);
  std::vector<CategoryAssignment> xs(n_opt);
  std::vector<double> ws(n_opt), maxes(n_opt), h_cap(n_opt), h_tilde(n_opt);

  std::uint64_t trace_counter = 0;
  std::uint64_t samples_opt = 0;
  std::uint32_t k = 0;
  bool exceeded = false;
  int consecutive_empty = 0;
  bool budget_exhausted = false;
  StreamStats pooled;  // all per-iteration weighted products, fallback only
  double pooled_sw = 0.0, pooled_sw2 = 0.0;

  while (true) {
    ++k;
    const std::uint64_t base = trace_counter;
    trace_counter += n_opt;
    parallel_for(n_opt, cfg.threads, [&](std::uint64_t j) {
      RngStream assign_rng = detail::trace_stream(seed, base + j, 0);
      RngStream sel_rng = detail::trace_stream(seed, base + j, 1);
      RngStream time_rng = detail::trace_stream(seed, base + j, 2);
      xs[j] = sample_assignment(cur, true, assign_rng);
      const ProfileSelection sel = sample_profiles(ev, xs[j], dir, sel_rng);
      const TimeSample theta = sample_times(m, T, time_rng);

      thread_local std::vector<double> row;
      ev.evaluate(sel, theta.steps, row);
      if (dir == Direction::negative)
        for (double& d : row) d = -d;

      double mx = row[0];
      std::size_t hits = 0;
      for (double d : row) {
        if (d > mx) mx = d;
        if (d > d_cap) ++hits;
      }
      if (cfg.full_year_max_load) {
        thread_local std::vector<double> full_scratch;
        mx = ev.max_signed_load(sel, full.steps, dir, full_scratch);
      }
      maxes[j] = mx;
      h_cap[j] = static_cast<double>(hits) / static_cast<double>(m);
      ws[j] = importance_weight(xs[j], cur);
      std::copy(row.begin(), row.end(), demands.begin() + j * m);
    });
    samples_opt += n_opt;

    for (std::uint32_t j = 0; j < n_opt; ++j)
      if (maxes[j] > d_cap) exceeded = true;

    const double quantile = update_threshold(maxes, cfg.rho);
    d_opt = cfg.monotone_threshold ? std::max(d_opt, quantile) : quantile;

    // The update targets the intermediate threshold, never more than the
    // rating itself, so the last iterations already optimise for the event
    // of interest.
    const double elite_thr = std::min(d_opt, d_cap);
    for (std::uint32_t j = 0; j < n_opt; ++j) {
      const double* row = demands.data() + static_cast<std::size_t>(j) * m;
      std::size_t hits = 0;
      for (std::uint32_t t = 0; t < m; ++t)
        if (row[t] > elite_thr) ++hits;
      h_tilde[j] = static_cast<double>(hits) / static_cast<double>(m);
    }

    CEIterationRecord rec;
    rec.k = k;
    rec.quantile = quantile;
    rec.d_opt = d_opt;
    rec.samples = samples_opt;

    // Running weighted estimate at the true rating from this iteration's
    // own samples; also pooled across iterations as a fallback for runs
    // that never reach the estimation stage.
    StreamStats s6;
    double iter_sw = 0.0, iter_sw2 = 0.0;
    for (std::uint32_t j = 0; j < n_opt; ++j) {
      const double prod = h_cap[j] * ws[j];
      s6.add(prod);
      pooled.add(prod);
      iter_sw += ws[j];
      iter_sw2 += ws[j] * ws[j];
    }
    pooled_sw += iter_sw;
    pooled_sw2 += iter_sw2;
    const bool s6_defined = s6.mean > 0.0 && s6.n >= 2;
    rec.r_hat = s6.mean;
    rec.beta = s6_defined ? relative_error(s6) : 0.0;

    double elite_mass = 0.0;
    for (std::uint32_t j = 0; j < n_opt; ++j) elite_mass += h_tilde[j] * ws[j];
    if (elite_mass > 0.0) {
      const std::vector<double> v_raw = ce_update(xs, h_tilde, ws);
      cur.v = smooth_and_bound(v_raw, cur.v, cfg.alpha, cfg.q_spiky);
      consecutive_empty = 0;
    } else {
      // One fresh resample is allowed; two empty elites in a row abort.
      rec.elite_empty = true;
      if (++consecutive_empty >= 2) {
        rec.v = cur.v;
        trace.iterations.push_back(std::move(rec));
        est.r_hat = pooled.mean;
        est.n = samples_opt;
        est.beta = (pooled.n >= 2 && pooled.mean > 0.0) ? relative_error(pooled) : 0.0;
        est.converged = false;
        est.zero_flagged = est.r_hat == 0.0;
        if (pooled_sw2 > 0.0) est.ess = pooled_sw * pooled_sw / pooled_sw2;
        est.warnings.push_back(
            "optimisation aborted: no weighted overload mass in two "
            "consecutive iterations");
        detail::ce_finalize(est, trace, cur.v, t0, trace_out);
        return est;
      }
    }
    rec.v = cur.v;
    trace.iterations.push_back(rec);

    if (s6_defined && relative_error(s6) < cfg.beta_target) {
      est.r_hat = s6.mean;
      est.beta = relative_error(s6);
      est.n = samples_opt;
      est.converged = true;
      est.zero_flagged = false;
      if (iter_sw2 > 0.0) est.ess = iter_sw * iter_sw / iter_sw2;
      detail::ce_finalize(est, trace, cur.v, t0, trace_out);
      return est;
    }

    // A long streak without a single exceedance anywhere means the event
    // is numerically negligible at this sampling effort; flag and stop.
    if (samples_opt > cfg.n_max_zero && !exceeded) {
      est.r_hat = 0.0;
      est.beta = 0.0;
      est.n = samples_opt;
      est.converged = false;
      est.zero_flagged = true;
      detail::ce_finalize(est, trace, cur.v, t0, trace_out);
      return est;
    }

    if (d_opt > d_cap) break;

    if (samples_opt >= cfg.n_max) {
      budget_exhausted = true;
      break;
    }
  }

  if (budget_exhausted) {
    // The threshold never cleared the rating within the budget. The pooled
    // per-iteration products still average to an unbiased value, so report
    // that instead of nothing, but never as converged.
    est.r_hat = pooled.mean;
    est.n = samples_opt;
    est.beta = (pooled.n >= 2 && pooled.mean > 0.0) ? relative_error(pooled) : 0.0;
    est.converged = false;
    est.zero_flagged = est.r_hat == 0.0;
    if (pooled_sw2 > 0.0) est.ess = pooled_sw * pooled_sw / pooled_sw2;
    est.warnings.push_back(
        "trace budget spent before the threshold reached the capacity rating");
    detail::ce_finalize(est, trace, cur.v, t0, trace_out);
    return est;
  }

  // Estimation stage: importance sampling under the frozen tilt, batch-wise
  // until the relative error beats the target or the shared budget is gone.
  // A batch is always drawn before the budget check, mirroring the
  // sample-then-test order of the optimisation loop.
  StreamStats stats;
  double sum_w = 0.0, sum_w2 = 0.0;
  std::uint64_t n_est = 0;
  bool converged = false;
  std::vector<detail::TraceValue> buf(cfg.batch);
  do {
    const std::uint64_t base = trace_counter;
    trace_counter += cfg.batch;
    parallel_for(cfg.batch, cfg.threads, [&](std::uint64_t j) {
      RngStream assign_rng = detail::trace_stream(seed, base + j, 0);
      RngStream sel_rng = detail::trace_stream(seed, base + j, 1);
      RngStream time_rng = detail::trace_stream(seed, base + j, 2);
      const CategoryAssignment x = sample_assignment(cur, true, assign_rng);
      const ProfileSelection sel = sample_profiles(ev, x, dir, sel_rng);
      const TimeSample theta = sample_times(m, T, time_rng);
      thread_local std::vector<double> scratch;
      const double h = ev.impact(sel, theta.steps, d_cap, dir, scratch);
      const double w = importance_weight(x, cur);
      buf[j] = {h * w, w};
    });
    for (std::uint32_t j = 0; j < cfg.batch; ++j) {
      stats.add(buf[j].value);
      sum_w += buf[j].weight;
      sum_w2 += buf[j].weight * buf[j].weight;
    }
    n_est += cfg.batch;
    if (stats.mean > 0.0 && stats.n >= 2 &&
        relative_error(stats) < cfg.beta_target) {
      converged = true;
      break;
    }
  } while (samples_opt + n_est <= cfg.n_max);

  est.r_hat = stats.mean;
  est.n = samples_opt + n_est;
  est.beta =
      (stats.n >= 2 && stats.mean > 0.0) ? relative_error(stats) : 0.0;
  est.converged = converged;
  est.zero_flagged = est.r_hat == 0.0;
  if (sum_w2 > 0.0) est.ess = sum_w * sum_w / sum_w2;
  detail::ce_finalize(est, trace, cur.v, t0, trace_out);
  return est;
}

// Trace serialization: one JSON object per line, a header, one line per
// iteration, and a final summary. Meant for the generalisation step and
// for eyeballing optimisation behaviour.

inline void save_ce_trace(const CETrace& trace, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  nlohmann::json header{{"type", "header"},
                        {"schema_version", 1},
                        {"asset_id", trace.asset_id},
                        {"direction", to_string(trace.direction)},
                        {"customer_bins", trace.customer_bins},
                        {"u", trace.u},
                        {"d_opt_init", trace.d_opt_init},
                        {"config", trace.config.to_json()}};
  os << header.dump() << "\n";
  for (const CEIterationRecord& it : trace.iterations) {
    nlohmann::json ij{{"type", "iteration"}, {"k", it.k},
                      {"d_opt", it.d_opt},   {"quantile", it.quantile},
                      {"v", it.v},           {"r_hat", it.r_hat},
                      {"beta", it.beta},     {"samples", it.samples},
                      {"elite_empty", it.elite_empty}};
    os << ij.dump() << "\n";
  }
  nlohmann::json fj{{"type", "final"},
                    {"v", trace.v_final},
                    {"r_hat", trace.r_hat},
                    {"beta", trace.beta},
                    {"n", trace.n},
                    {"converged", trace.converged},
                    {"zero_flagged", trace.zero_flagged}};
  os << fj.dump() << "\n";
}

inline CETrace load_ce_trace(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path.string() + "'");
  CETrace trace;
  bool have_header = false, have_final = false;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("'" + path.string() + "' is not valid JSONL: " + e.what());
    }
    try {
      const auto type = j.value("type", std::string{});
      if (type == "header") {
        trace.asset_id = j.at("asset_id").get<std::string>();
        trace.direction = direction_from_string(j.at("direction").get<std::string>());
        trace.customer_bins = j.at("customer_bins").get<std::vector<std::string>>();
        trace.u = j.at("u").get<std::vector<double>>();
        trace.d_opt_init = j.value("d_opt_init", 0.0);
        if (j.contains("config")) trace.config = CEConfig::from_json(j["config"]);
        have_header = true;
      } else if (type == "iteration") {
        CEIterationRecord it;
        it.k = j.at("k").get<std::uint32_t>();
        it.d_opt = j.at("d_opt").get<double>();
        it.quantile = j.value("quantile", 0.0);
        it.v = j.at("v").get<std::vector<double>>();
        it.r_hat = j.value("r_hat", 0.0);
        it.beta = j.value("beta", 0.0);
        it.samples = j.value("samples", std::uint64_t{0});
        it.elite_empty = j.value("elite_empty", false);
        trace.iterations.push_back(std::move(it));
      } else if (type == "final") {
        trace.v_final = j.at("v").get<std::vector<double>>();
        trace.r_hat = j.value("r_hat", 0.0);
        trace.beta = j.value("beta", 0.0);
        trace.n = j.value("n", std::uint64_t{0});
        trace.converged = j.value("converged", false);
        trace.zero_flagged = j.value("zero_flagged", false);
        have_final = true;
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("'" + path.string() + "' has a malformed trace line: " +
                      e.what());
    }
  }
  if (!have_header || !have_final)
    throw DataError("'" + path.string() + "' is missing the header or final line");
  return trace;
}

}  // namespace gridrisk
