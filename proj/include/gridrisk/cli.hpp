#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gridrisk/asset_gen.hpp"
#include "gridrisk/bench.hpp"
#include "gridrisk/corpus_io.hpp"
#include "gridrisk/synth.hpp"

namespace gridrisk::cli {

namespace detail {

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Classification quantile actually in force: an explicit flag reclassifies
// the corpus in memory so the nominal probabilities and the bounds match.
inline void apply_q_spiky(Corpus& corpus, bool flag_given, double q) {
  if (flag_given && q != corpus.q_spiky) classify_corpus(corpus, q);
}

inline const Asset& find_asset(const std::vector<Asset>& assets,
                               const std::string& id) {
  for (const Asset& a : assets)
    if (a.asset_id == id) return a;
  throw DataError("no asset '" + id + "' in the asset file");
}

struct SharedEstimateFlags {
  CEConfig ce;  // carries every numeric knob, CE-only ones included
  bool no_monotone = false;

  void attach(CLI::App* sub, bool with_ce) {
    sub->add_option("--m", ce.m, "time steps sampled per trace")
        ->capture_default_str();
    sub->add_option("--beta-target", ce.beta_target,
                    "relative-error stopping level")
        ->capture_default_str();
    sub->add_option("--n-max", ce.n_max, "total trace budget")
        ->capture_default_str();
    sub->add_option("--batch", ce.batch, "traces per convergence check")
        ->capture_default_str();
    if (with_ce) {
      sub->add_option("--n-opt", ce.n_opt, "traces per optimisation iteration")
          ->capture_default_str();
      sub->add_option("--rho", ce.rho, "elite quantile level")
          ->capture_default_str();
      sub->add_option("--alpha", ce.alpha, "smoothing weight")
          ->capture_default_str();
      sub->add_option("--n-max-zero", ce.n_max_zero,
                      "abort level without any exceedance")
          ->capture_default_str();
      sub->add_option("--d-opt-init-factor", ce.d_opt_init_factor,
                      "first threshold as a share of the rating")
          ->capture_default_str();
      sub->add_flag("--no-monotone-threshold", no_monotone,
                    "let the threshold fall between iterations");
      sub->add_flag("--full-year-max-load", ce.full_year_max_load,
                    "rate iteration maxima over every step");
    }
  }

  CEConfig resolved() const {
    CEConfig out = ce;
    out.monotone_threshold = !no_monotone;
    return out;
  }
};

}  // namespace detail

inline int run(std::vector<std::string> args) {
  CLI::App app{"distribution-network overload risk estimation"};
  app.require_subcommand(1);

  // gen-corpus
  auto* gen_corpus = app.add_subcommand(
      "gen-corpus", "synthesize a profile corpus from a JSON spec");
  std::string gc_spec, gc_out;
  std::uint64_t gc_seed = 1;
  gen_corpus->add_option("--spec", gc_spec, "corpus spec JSON")
      ->required()
      ->check(CLI::ExistingFile);
  gen_corpus->add_option("--seed", gc_seed, "generator seed")->capture_default_str();
  gen_corpus->add_option("--out", gc_out, "output directory")->required();

  // define-assets
  auto* define_assets = app.add_subcommand(
      "define-assets", "validate an asset file against a corpus");
  std::string da_assets, da_corpus;
  define_assets->add_option("--assets", da_assets, "asset JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  define_assets->add_option("--corpus", da_corpus, "corpus directory")
      ->required()
      ->check(CLI::ExistingDirectory);

  // gen-assets
  auto* gen_assets_cmd = app.add_subcommand(
      "gen-assets", "generate a random asset set over a corpus");
  std::string ga_corpus, ga_out;
  std::uint64_t ga_seed = 1;
  AssetGenOptions ga_opts;
  gen_assets_cmd->add_option("--corpus", ga_corpus, "corpus directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  gen_assets_cmd->add_option("--count", ga_opts.count, "number of assets")
      ->capture_default_str();
  gen_assets_cmd->add_option("--n-s-min", ga_opts.n_s_min, "smallest customer count")
      ->capture_default_str();
  gen_assets_cmd->add_option("--n-s-max", ga_opts.n_s_max, "largest customer count")
      ->capture_default_str();
  gen_assets_cmd->add_option("--seed", ga_seed, "generator seed")
      ->capture_default_str();
  gen_assets_cmd->add_option("--out", ga_out, "output asset JSON")->required();

  // estimate
  auto* estimate = app.add_subcommand(
      "estimate", "estimate the overload probability of one asset");
  std::string es_corpus, es_assets, es_asset, es_method = "mc", es_dir = "pos";
  std::string es_gen_probs, es_trace, es_out;
  std::uint64_t es_seed = 1;
  double es_q_spiky = 0.95;
  bool es_full_year = false;
  unsigned es_threads = 1;
  detail::SharedEstimateFlags es_flags;
  estimate->add_option("--corpus", es_corpus, "corpus directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  estimate->add_option("--assets", es_assets, "asset JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  estimate->add_option("--asset", es_asset, "asset id")->required();
  estimate->add_option("--method", es_method, "ref, mc, ce-is or gen-is")
      ->capture_default_str();
  estimate->add_option("--direction", es_dir, "pos or neg")->capture_default_str();
  estimate->add_option("--seed", es_seed, "estimator seed")->capture_default_str();
  estimate->add_option("--q-spiky", es_q_spiky,
                       "reclassify the corpus at this quantile")
      ->capture_default_str();
  estimate->add_flag("--full-year", es_full_year,
                     "evaluate every step instead of sampling m");
  estimate->add_option("--threads", es_threads, "threads within the estimator")
      ->capture_default_str();
  estimate->add_option("--gen-probs", es_gen_probs,
                       "generalised probabilities JSON (gen-is)")
      ->check(CLI::ExistingFile);
  estimate->add_option("--trace", es_trace, "write the optimisation trace here");
  estimate->add_option("--out", es_out, "also write the result record here");
  es_flags.attach(estimate, true);

  // generalize
  auto* generalize = app.add_subcommand(
      "generalize", "derive per-bin probabilities from optimisation traces");
  std::string gl_results, gl_corpus, gl_out;
  std::uint32_t gl_max_customers = 80;
  double gl_threshold = 0.15;
  bool gl_per_asset_mean = false;
  generalize->add_option("--ce-results", gl_results, "directory of trace JSONL files")
      ->required()
      ->check(CLI::ExistingDirectory);
  generalize->add_option("--corpus", gl_corpus, "corpus directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  generalize->add_option("--max-customers", gl_max_customers,
                         "only generalise from assets smaller than this")
      ->capture_default_str();
  generalize->add_option("--threshold", gl_threshold,
                         "keep a bin mean only above this value")
      ->capture_default_str();
  generalize->add_flag("--per-asset-mean", gl_per_asset_mean,
                       "average per asset before averaging across assets");
  generalize->add_option("--out", gl_out, "output JSON")->required();

  // bench
  auto* bench = app.add_subcommand(
      "bench", "run an estimation campaign over an asset set");
  std::string be_corpus, be_assets, be_methods = "ref,mc,ce-is";
  std::string be_dirs = "pos,neg", be_gen_probs, be_out;
  std::uint32_t be_replicates = 9;
  std::uint64_t be_seed = 1;
  unsigned be_workers = 1;
  detail::SharedEstimateFlags be_flags;
  bench->add_option("--corpus", be_corpus, "corpus directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  bench->add_option("--assets", be_assets, "asset JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  bench->add_option("--methods", be_methods, "comma list of methods")
      ->capture_default_str();
  bench->add_option("--directions", be_dirs, "comma list of directions")
      ->capture_default_str();
  bench->add_option("--replicates", be_replicates, "independent runs per cell")
      ->capture_default_str();
  bench->add_option("--seed", be_seed, "campaign seed")->capture_default_str();
  bench->add_option("--workers", be_workers, "parallel cells")->capture_default_str();
  bench->add_option("--gen-probs", be_gen_probs,
                    "generalised probabilities JSON (gen-is)")
      ->check(CLI::ExistingFile);
  bench->add_option("--out", be_out, "output runs JSONL")->required();
  be_flags.attach(bench, true);

  // report
  auto* report = app.add_subcommand(
      "report", "aggregate a campaign into speedup tables");
  std::string rp_runs, rp_format = "table", rp_out;
  ReportOptions rp_opts;
  bool rp_grand_means = false;
  report->add_option("--runs", rp_runs, "runs JSONL from bench")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--format", rp_format, "table, csv or json")
      ->capture_default_str();
  report->add_option("--significance", rp_opts.significance,
                     "accuracy filter significance level")
      ->capture_default_str();
  report->add_option("--beta-target", rp_opts.beta_target,
                     "target error for time extrapolation")
      ->capture_default_str();
  report->add_flag("--ratio-of-grand-means", rp_grand_means,
                   "aggregate times before dividing");
  report->add_option("--out", rp_out, "write the report here instead of stdout");

  std::reverse(args.begin(), args.end());  // CLI11 wants them reversed
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen_corpus->parsed()) {
      std::ifstream is(gc_spec);
      nlohmann::json j;
      is >> j;
      const CorpusSpec spec = corpus_spec_from_json(j);
      const Corpus corpus = synthesize_corpus(spec, gc_seed);
      save_corpus(corpus, gc_out);
      std::size_t profiles = 0;
      for (const Bin& b : corpus.bins) profiles += b.profiles.size();
      std::cout << "corpus written to " << gc_out << ": " << corpus.bins.size()
                << " bins, " << profiles << " profiles, T=" << corpus.T << "\n";
      return 0;
    }

    if (define_assets->parsed()) {
      const Corpus corpus = load_corpus(da_corpus);
      const std::vector<Asset> assets = load_assets(da_assets);
      const std::vector<ValidationIssue> issues = validate_assets(assets, corpus);
      if (issues.empty()) {
        std::cout << "ok: " << assets.size()
                  << " assets validate against the corpus\n";
        return 0;
      }
      for (const ValidationIssue& i : issues)
        std::cerr << i.asset_id << ": " << i.message << "\n";
      std::cerr << issues.size() << " problems found\n";
      return 1;
    }

    if (gen_assets_cmd->parsed()) {
      const Corpus corpus = load_corpus(ga_corpus);
      const std::vector<Asset> assets = gen_assets(corpus, ga_opts, ga_seed);
      save_assets(assets, ga_out);
      std::cout << "wrote " << assets.size() << " assets to " << ga_out << "\n";
      return 0;
    }

    if (estimate->parsed()) {
      Corpus corpus = load_corpus(es_corpus);
      detail::apply_q_spiky(corpus, estimate->count("--q-spiky") > 0, es_q_spiky);
      const std::vector<Asset> assets = load_assets(es_assets);
      const Asset& asset = detail::find_asset(assets, es_asset);
      const DemandEvaluator ev(asset, corpus);
      const Method method = method_from_string(es_method);
      const Direction dir = direction_from_string(es_dir);

      CEConfig ce_cfg = es_flags.resolved();
      ce_cfg.q_spiky = estimate->count("--q-spiky") > 0 ? es_q_spiky : corpus.q_spiky;
      ce_cfg.threads = es_threads;
      EstimatorConfig est_cfg = ce_cfg.estimator();
      est_cfg.full_year = es_full_year;

      RunRecord rec;
      rec.asset_id = asset.asset_id;
      rec.method = method;
      rec.direction = dir;
      rec.seed = es_seed;
      rec.m = est_cfg.m;
      switch (method) {
        case Method::ref:
          rec.estimate = run_reference(ev, dir, est_cfg, es_seed);
          break;
        case Method::mc:
          rec.estimate = run_mc(ev, dir, est_cfg, es_seed);
          break;
        case Method::ce_is: {
          CETrace trace;
          rec.estimate = ce_estimate(ev, dir, ce_cfg, es_seed,
                                     es_trace.empty() ? nullptr : &trace);
          if (!es_trace.empty()) save_ce_trace(trace, es_trace);
          break;
        }
        case Method::gen_is: {
          if (es_gen_probs.empty())
            throw ConfigError("gen-is needs --gen-probs");
          const auto by_dir = load_bin_probs(es_gen_probs);
          const auto it = by_dir.find(dir);
          if (it == by_dir.end())
            throw DataError("no generalised probabilities for direction " +
                            std::string(to_string(dir)));
          const ISParams params = apply_generalized(ev, it->second);
          rec.estimate = run_is(ev, params, est_cfg, es_seed, Method::gen_is);
          break;
        }
      }
      const std::string line = run_record_to_json(rec).dump();
      std::cout << line << "\n";
      if (!es_out.empty()) {
        std::ofstream os(es_out, std::ios::trunc);
        if (!os) throw DataError("cannot write '" + es_out + "'");
        os << line << "\n";
      }
      return 0;
    }

    if (generalize->parsed()) {
      const Corpus corpus = load_corpus(gl_corpus);
      std::vector<std::filesystem::path> files;
      for (const auto& entry : std::filesystem::directory_iterator(gl_results))
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
          files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      if (files.empty())
        throw DataError("no .jsonl traces in '" + gl_results + "'");
      std::vector<CETrace> traces;
      for (const auto& f : files) traces.push_back(load_ce_trace(f));

      std::map<Direction, GeneralizedBinProbs> by_dir;
      for (Direction dir : {Direction::positive, Direction::negative}) {
        const bool any = std::any_of(traces.begin(), traces.end(),
                                     [&](const CETrace& t) {
                                       return t.direction == dir &&
                                              t.customer_bins.size() <
                                                  gl_max_customers;
                                     });
        if (any)
          by_dir[dir] = derive_bin_probs(traces, corpus, dir, gl_max_customers,
                                         gl_threshold, gl_per_asset_mean);
      }
      if (by_dir.empty())
        throw ConfigError(
            "no optimised runs left after filtering; nothing to generalise from");
      save_bin_probs(by_dir, gl_out);
      std::cout << "generalised probabilities for " << by_dir.size()
                << " direction(s) from " << traces.size() << " traces written to "
                << gl_out << "\n";
      return 0;
    }

    if (bench->parsed()) {
      const Corpus corpus = load_corpus(be_corpus);
      const std::vector<Asset> assets = load_assets(be_assets);
      CampaignConfig cc;
      cc.ce = be_flags.resolved();
      cc.ce.q_spiky = corpus.q_spiky;
      cc.replicates = be_replicates;
      cc.workers = be_workers;
      cc.methods.clear();
      for (const std::string& s : detail::split_csv(be_methods))
        cc.methods.push_back(method_from_string(s));
      cc.directions.clear();
      for (const std::string& s : detail::split_csv(be_dirs))
        cc.directions.push_back(direction_from_string(s));
      if (!be_gen_probs.empty()) cc.gen_probs = load_bin_probs(be_gen_probs);
      const std::vector<RunRecord> records = run_campaign(assets, corpus, cc, be_seed);
      write_runs_jsonl(records, std::filesystem::path(be_out));
      std::cout << "wrote " << records.size() << " runs to " << be_out << "\n";
      return 0;
    }

    if (report->parsed()) {
      const std::vector<RunRecord> records = read_runs_jsonl(rp_runs);
      rp_opts.ratio_of_grand_means = rp_grand_means;
      const SpeedupReport rep = speedup_report(records, rp_opts);
      std::string out;
      if (rp_format == "table") {
        out = speedup_report_to_text(rep);
      } else if (rp_format == "csv") {
        out = speedup_report_to_csv(rep);
      } else if (rp_format == "json") {
        out = speedup_report_to_json(rep).dump(2) + "\n";
      } else {
        throw ConfigError("unknown report format '" + rp_format + "'");
      }
      if (rp_out.empty()) {
        std::cout << out;
      } else {
        std::ofstream os(rp_out, std::ios::trunc);
        if (!os) throw DataError("cannot write '" + rp_out + "'");
        os << out;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

inline int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(std::move(args));
}

}  // namespace gridrisk::cli
