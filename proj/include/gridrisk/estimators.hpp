#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "gridrisk/parallel.hpp"
#include "gridrisk/sampling.hpp"
#include "gridrisk/stats.hpp"

namespace gridrisk {

enum class Method { ref, mc, ce_is, gen_is };

inline const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::ref: return "ref";
    case Method::mc: return "mc";
    case Method::ce_is: return "ce-is";
    default: return "gen-is";
  }
}

inline Method method_from_string(const std::string& s) {
  if (s == "ref") return Method::ref;
  if (s == "mc") return Method::mc;
  if (s == "ce-is") return Method::ce_is;
  if (s == "gen-is") return Method::gen_is;
  throw ConfigError("unknown method '" + s + "' (expected ref, mc, ce-is or gen-is)");
}

struct EstimatorConfig {
  std::uint32_t m = 2000;      // time steps sampled per trace
  double beta_target = 0.1;    // relative-error stopping level
  std::uint64_t n_max = 20000; // trace budget
  std::uint32_t batch = 50;    // traces between convergence checks
  bool full_year = false;      // evaluate every step instead of sampling m
  unsigned threads = 1;

  void validate() const {
    if (m < 1) throw ConfigError("estimator config: m must be at least 1");
    if (!(beta_target > 0.0))
      throw ConfigError("estimator config: beta_target must be positive");
    if (n_max < 1) throw ConfigError("estimator config: n_max must be at least 1");
    if (batch < 1) throw ConfigError("estimator config: batch must be at least 1");
  }
};

struct RiskEstimate {
  double r_hat = 0.0;
  double beta = 0.0;             // relative error; 0 when undefined
  std::uint64_t n = 0;           // traces consumed
  double elapsed_s = 0.0;
  Method method = Method::mc;
  Direction direction = Direction::positive;
  bool converged = false;
  bool zero_flagged = false;     // budget ran out without a single event
  double ess = 0.0;              // weighted effective sample size (IS only)
  std::vector<std::string> warnings;
};

namespace detail {

// Sub-channel layout per trace: 0 category assignment, 1 profile draw,
// 2 time draw. Every trace owns its streams, so any subset of traces can
// be evaluated in any order (or on any thread) with identical results.
inline RngStream trace_stream(std::uint64_t seed, std::uint64_t trace_idx,
                              unsigned channel) {
  return RngStream(seed, trace_idx * 4 + channel);
}

struct TraceValue {
  double value = 0.0;
  double weight = 1.0;
};

struct LoopResult {
  StreamStats stats;
  double sum_w = 0.0;
  double sum_w2 = 0.0;
  std::uint64_t n = 0;
  bool converged = false;
};

// Shared batched accumulation loop: draw `batch` traces, fold them in index
// order, stop once the relative error of the running mean beats the target
// or the budget is spent.
template <class TraceFn>
inline LoopResult run_batched(TraceFn&& trace_value, const EstimatorConfig& cfg) {
  LoopResult res;
  std::vector<TraceValue> buf(cfg.batch);
  while (res.n < cfg.n_max && !res.converged) {
    const auto b = static_cast<std::uint32_t>(
        std::min<std::uint64_t>(cfg.batch, cfg.n_max - res.n));
    parallel_for(b, cfg.threads,
                 [&](std::uint64_t j) { buf[j] = trace_value(res.n + j); });
    for (std::uint32_t j = 0; j < b; ++j) {
      res.stats.add(buf[j].value);
      res.sum_w += buf[j].weight;
      res.sum_w2 += buf[j].weight * buf[j].weight;
    }
    res.n += b;
    if (res.stats.n >= 2 && res.stats.mean > 0.0 &&
        relative_error(res.stats) < cfg.beta_target)
      res.converged = true;
  }
  return res;
}

inline void finish_estimate(RiskEstimate& est, const LoopResult& res,
                            std::chrono::steady_clock::time_point t0,
                            bool weighted) {
  est.r_hat = res.stats.mean;
  est.n = res.n;
  est.beta = (res.stats.n >= 2 && res.stats.mean > 0.0)
                 ? relative_error(res.stats)
                 : 0.0;
  est.converged = res.converged;
  est.zero_flagged = est.r_hat == 0.0;
  if (weighted && res.sum_w2 > 0.0)
    est.ess = res.sum_w * res.sum_w / res.sum_w2;
  est.elapsed_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::uint32_t effective_m(const EstimatorConfig& cfg, std::uint32_t T) {
  // m is capped at the horizon; the default of 2000 stays usable on the
  // short grids used in tests.
  return cfg.full_year ? T : std::min(cfg.m, T);
}

}  // namespace detail

// Reference estimator: uniform profile draws, every time step evaluated.
// The yearly overload fraction of each trace enters a running mean until
// the relative error beats the target or the trace budget runs out.
inline RiskEstimate run_reference(const DemandEvaluator& ev, Direction dir,
                                  const EstimatorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const TimeSample full = TimeSample::full_year(ev.T());
  const double d_cap = ev.asset().d_cap_kw;

  auto fn = [&](std::uint64_t idx) -> detail::TraceValue {
    RngStream sel_rng = detail::trace_stream(seed, idx, 1);
    const ProfileSelection sel = sample_profiles_uniform(ev, sel_rng);
    thread_local std::vector<double> scratch;
    return {ev.impact(sel, full.steps, d_cap, dir, scratch), 1.0};
  };

  const detail::LoopResult res = detail::run_batched(fn, cfg);
  RiskEstimate est;
  est.method = Method::ref;
  est.direction = dir;
  detail::finish_estimate(est, res, t0, false);
  return est;
}

// Conventional Monte Carlo: uniform profile draws, m time steps sampled
// with replacement per trace (hierarchical estimator).
inline RiskEstimate run_mc(const DemandEvaluator& ev, Direction dir,
                           const EstimatorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const TimeSample full = TimeSample::full_year(ev.T());
  const std::uint32_t m = detail::effective_m(cfg, ev.T());
  const bool full_year = cfg.full_year || m == ev.T();
  const double d_cap = ev.asset().d_cap_kw;

  auto fn = [&](std::uint64_t idx) -> detail::TraceValue {
    RngStream sel_rng = detail::trace_stream(seed, idx, 1);
    const ProfileSelection sel = sample_profiles_uniform(ev, sel_rng);
    thread_local std::vector<double> scratch;
    double h;
    if (full_year) {
      h = ev.impact(sel, full.steps, d_cap, dir, scratch);
    } else {
      RngStream time_rng = detail::trace_stream(seed, idx, 2);
      const TimeSample theta = sample_times(m, ev.T(), time_rng);
      h = ev.impact(sel, theta.steps, d_cap, dir, scratch);
    }
    return {h, 1.0};
  };

  const detail::LoopResult res = detail::run_batched(fn, cfg);
  RiskEstimate est;
  est.method = Method::mc;
  est.direction = dir;
  detail::finish_estimate(est, res, t0, false);
  return est;
}

// Importance-sampled estimator under fixed two-stage parameters: biased
// category assignment, uniform draw within the assigned set, sampled time
// steps; every trace value is reweighted by the likelihood ratio.
inline RiskEstimate run_is(const DemandEvaluator& ev, const ISParams& params,
                           const EstimatorConfig& cfg, std::uint64_t seed,
                           Method method = Method::gen_is) {
  cfg.validate();
  params.validate();
  if (params.u.size() != ev.n_s())
    throw ContractViolation("run_is: parameter size does not match customer count");
  const auto t0 = std::chrono::steady_clock::now();
  const TimeSample full = TimeSample::full_year(ev.T());
  const std::uint32_t m = detail::effective_m(cfg, ev.T());
  const bool full_year = cfg.full_year || m == ev.T();
  const double d_cap = ev.asset().d_cap_kw;
  const Direction dir = params.direction;

  auto fn = [&](std::uint64_t idx) -> detail::TraceValue {
    RngStream assign_rng = detail::trace_stream(seed, idx, 0);
    RngStream sel_rng = detail::trace_stream(seed, idx, 1);
    const CategoryAssignment x = sample_assignment(params, true, assign_rng);
    const ProfileSelection sel = sample_profiles(ev, x, dir, sel_rng);
    thread_local std::vector<double> scratch;
    double h;
    if (full_year) {
      h = ev.impact(sel, full.steps, d_cap, dir, scratch);
    } else {
      RngStream time_rng = detail::trace_stream(seed, idx, 2);
      const TimeSample theta = sample_times(m, ev.T(), time_rng);
      h = ev.impact(sel, theta.steps, d_cap, dir, scratch);
    }
    const double w = importance_weight(x, params);
    return {h * w, w};
  };

  const detail::LoopResult res = detail::run_batched(fn, cfg);
  RiskEstimate est;
  est.method = method;
  est.direction = dir;
  detail::finish_estimate(est, res, t0, true);
  return est;
}

}  // namespace gridrisk
