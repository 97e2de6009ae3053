#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <fstream>

#include "gridrisk/estimators.hpp"
#include "gridrisk/generalize.hpp"
#include "support/oracle.hpp"
#include "support/tmpdir.hpp"
#include "support/toy.hpp"

using namespace gridrisk;

namespace {

Corpus three_bin_corpus() {
  return toy::make_corpus(4, {toy::make_bin("b0", "cat", {{1, 1, 1, 1},
                                                          {1, 1, 1, 9}}),
                              toy::make_bin("b1", "cat", {{2, 2, 2, 2},
                                                          {2, 2, 8, 2}}),
                              toy::make_bin("b2", "cat", {{3, 3, 3, 3},
                                                          {3, 9, 3, 3}})});
}

CETrace make_trace(std::string asset, Direction dir,
                   std::vector<std::string> bins, std::vector<double> v) {
  CETrace t;
  t.asset_id = std::move(asset);
  t.direction = dir;
  t.customer_bins = std::move(bins);
  t.v_final = std::move(v);
  return t;
}

}  // namespace

TEST_CASE("bin probabilities average over small source assets", "[generalize]") {
  const Corpus corpus = three_bin_corpus();
  std::vector<CETrace> traces;
  traces.push_back(make_trace("a1", Direction::positive, {"b0", "b0", "b1"},
                              {0.8, 0.6, 0.3}));
  traces.push_back(make_trace("a2", Direction::positive, {"b0"}, {0.4}));
  traces.push_back(make_trace("neg", Direction::negative, {"b0"}, {0.9}));
  // 80 customers is already too wide to generalise from
  traces.push_back(make_trace("huge", Direction::positive,
                              std::vector<std::string>(80, "b0"),
                              std::vector<double>(80, 0.9)));

  const GeneralizedBinProbs flat =
      derive_bin_probs(traces, corpus, Direction::positive);
  CHECK(flat.source_assets == std::vector<std::string>{"a1", "a2"});
  CHECK_THAT(flat.bin_probs.at("b0"),
             Catch::Matchers::WithinAbs((0.8 + 0.6 + 0.4) / 3.0, 1e-12));
  CHECK(flat.bin_probs.at("b1") == 0.3);
  // a bin no optimised run touched keeps its nominal spiky share
  CHECK(flat.bin_probs.at("b2") == 0.5);
  CHECK(flat.q_spiky == corpus.q_spiky);
  CHECK(flat.direction == Direction::positive);

  const GeneralizedBinProbs per_asset = derive_bin_probs(
      traces, corpus, Direction::positive, 80, 0.15, /*per_asset_mean=*/true);
  CHECK_THAT(per_asset.bin_probs.at("b0"),
             Catch::Matchers::WithinAbs((0.7 + 0.4) / 2.0, 1e-12));
  CHECK(per_asset.bin_probs.at("b1") == 0.3);
}

TEST_CASE("weak averages fall back to the nominal share", "[generalize]") {
  const Corpus corpus = three_bin_corpus();

  // strictly above the threshold is required; 0.15 itself is not enough
  std::vector<CETrace> at_threshold{
      make_trace("a", Direction::positive, {"b1"}, {0.15})};
  CHECK(derive_bin_probs(at_threshold, corpus, Direction::positive)
            .bin_probs.at("b1") == 0.5);

  std::vector<CETrace> below{
      make_trace("a", Direction::positive, {"b1"}, {0.1})};
  CHECK(derive_bin_probs(below, corpus, Direction::positive)
            .bin_probs.at("b1") == 0.5);

  std::vector<CETrace> just_above{
      make_trace("a", Direction::positive, {"b1"}, {0.2})};
  // kept, but re-clamped to the lower bound 1 - q_spiky = 0.25
  CHECK(derive_bin_probs(just_above, corpus, Direction::positive)
            .bin_probs.at("b1") == 0.25);

  std::vector<CETrace> high{
      make_trace("a", Direction::positive, {"b1"}, {0.95})};
  CHECK(derive_bin_probs(high, corpus, Direction::positive)
            .bin_probs.at("b1") == 0.9);
}

TEST_CASE("generalisation failure modes", "[generalize]") {
  const Corpus corpus = three_bin_corpus();

  std::vector<CETrace> wide{make_trace("w", Direction::positive,
                                       std::vector<std::string>(80, "b0"),
                                       std::vector<double>(80, 0.9))};
  CHECK_THROWS_AS(derive_bin_probs(wide, corpus, Direction::positive),
                  ConfigError);
  CHECK_THROWS_AS(derive_bin_probs({}, corpus, Direction::positive),
                  ConfigError);

  std::vector<CETrace> mismatched{
      make_trace("m", Direction::positive, {"b0", "b1"}, {0.5})};
  CHECK_THROWS_AS(derive_bin_probs(mismatched, corpus, Direction::positive),
                  DataError);

  // raising the cutoff lets the wide asset through
  const GeneralizedBinProbs gen =
      derive_bin_probs(wide, corpus, Direction::positive, 81);
  CHECK_THAT(gen.bin_probs.at("b0"), Catch::Matchers::WithinAbs(0.9, 1e-12));
  CHECK(gen.max_customers == 81);
}

TEST_CASE("generalised parameters attach to an asset", "[generalize]") {
  const Corpus corpus = three_bin_corpus();
  const Asset asset = toy::make_asset(
      "a", 20.0, {toy::smart("b0", 1.0), toy::smart("b1", 2.0)});
  const DemandEvaluator ev(asset, corpus);

  GeneralizedBinProbs gen;
  gen.direction = Direction::positive;
  gen.bin_probs = {{"b0", 0.4}, {"b1", 0.7}, {"b2", 0.5}};
  const ISParams params = apply_generalized(ev, gen);
  CHECK(params.u == std::vector<double>{0.5, 0.5});
  CHECK(params.v == std::vector<double>{0.4, 0.7});
  CHECK(params.direction == Direction::positive);

  gen.bin_probs.erase("b1");
  CHECK_THROWS_AS(apply_generalized(ev, gen), DataError);
}

TEST_CASE("bin probability files round trip", "[generalize]") {
  const Corpus corpus = three_bin_corpus();
  std::vector<CETrace> traces{
      make_trace("a1", Direction::positive, {"b0", "b1"}, {0.8, 0.3}),
      make_trace("a1", Direction::negative, {"b0", "b1"}, {0.7, 0.45})};

  std::map<Direction, GeneralizedBinProbs> by_dir;
  by_dir[Direction::positive] =
      derive_bin_probs(traces, corpus, Direction::positive);
  by_dir[Direction::negative] =
      derive_bin_probs(traces, corpus, Direction::negative);

  toy::TempDir dir("genio");
  const auto path = dir.path / "bin_probs.json";
  save_bin_probs(by_dir, path);
  const auto back = load_bin_probs(path);

  REQUIRE(back.size() == 2);
  for (const Direction d : {Direction::positive, Direction::negative}) {
    const GeneralizedBinProbs& orig = by_dir.at(d);
    const GeneralizedBinProbs& got = back.at(d);
    CHECK(got.direction == d);
    CHECK(got.bin_probs == orig.bin_probs);
    CHECK(got.source_assets == orig.source_assets);
    CHECK(got.threshold == orig.threshold);
    CHECK(got.max_customers == orig.max_customers);
    CHECK(got.q_spiky == orig.q_spiky);
  }

  CHECK_THROWS_AS(load_bin_probs(dir.path / "missing.json"), DataError);
  std::ofstream(dir.path / "junk.json") << "not json";
  CHECK_THROWS_AS(load_bin_probs(dir.path / "junk.json"), DataError);
  std::ofstream(dir.path / "old.json") << "{\"schema_version\": 7}";
  CHECK_THROWS_AS(load_bin_probs(dir.path / "old.json"), DataError);
}

TEST_CASE("generalised tilts stay unbiased on unseen assets", "[generalize]") {
  // optimise one asset, generalise its tilt, estimate a different asset
  // that shares the bin; the importance-sampling identity keeps the second
  // estimate centred on its own exact risk
  std::vector<double> base(1000, 1.0), spiky(1000, 1.0);
  spiky[137] = 10.0;
  const Corpus corpus =
      toy::make_corpus(1000, {toy::make_bin("b", "cat", {base, spiky})});

  const Asset seen = toy::make_asset("seen", 5.0, {toy::smart("b", 1.0)});
  const DemandEvaluator ev_seen(seen, corpus);
  CEConfig cfg;
  cfg.q_spiky = 0.75;
  cfg.m = 200;
  CETrace trace;
  const RiskEstimate opt =
      ce_estimate(ev_seen, Direction::positive, cfg, 11, &trace);
  REQUIRE(opt.converged);
  REQUIRE(trace.v_final[0] > 0.15);  // strong enough to survive the cutoff

  const GeneralizedBinProbs gen =
      derive_bin_probs({trace}, corpus, Direction::positive);
  CHECK(gen.bin_probs.at("b") == trace.v_final[0]);

  const Asset unseen = toy::make_asset(
      "unseen", 11.0, {toy::smart("b", 1.0), toy::smart("b", 1.0)});
  const DemandEvaluator ev_unseen(unseen, corpus);
  const double exact =
      oracle::exact_risk(unseen, corpus, unseen.d_cap_kw, Direction::positive);
  REQUIRE(exact == 0.25 * (1.0 / 1000.0));  // both spiky and the spike step

  const ISParams params = apply_generalized(ev_unseen, gen);
  EstimatorConfig ecfg = cfg.estimator();
  const RiskEstimate est =
      run_is(ev_unseen, params, ecfg, 99, Method::gen_is);
  REQUIRE(est.converged);
  CHECK(est.method == Method::gen_is);
  CHECK(std::abs(est.r_hat - exact) <= 3.5 * est.beta * est.r_hat);
  CHECK(est.ess > 0.0);
  CHECK(est.ess < static_cast<double>(est.n));  // a real tilt is in force

  // the artifact file reproduces the estimate bit for bit
  toy::TempDir dir("genpipe");
  std::map<Direction, GeneralizedBinProbs> by_dir{{Direction::positive, gen}};
  save_bin_probs(by_dir, dir.path / "probs.json");
  const auto loaded = load_bin_probs(dir.path / "probs.json");
  const ISParams params2 =
      apply_generalized(ev_unseen, loaded.at(Direction::positive));
  const RiskEstimate est2 =
      run_is(ev_unseen, params2, ecfg, 99, Method::gen_is);
  CHECK(est2.r_hat == est.r_hat);
  CHECK(est2.beta == est.beta);
  CHECK(est2.n == est.n);
}
