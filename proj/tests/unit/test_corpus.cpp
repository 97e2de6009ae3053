#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gridrisk/corpus_io.hpp"
#include "gridrisk/synth.hpp"
#include "support/tmpdir.hpp"
#include "support/toy.hpp"

using namespace gridrisk;

TEST_CASE("annual energy of a constant 1 kW profile over a year", "[corpus]") {
  Profile p;
  p.values.assign(35040, 1.0);
  CHECK(annual_energy_kwh(p) == 8760.0);
}

TEST_CASE("scale_profile hits the target energy exactly", "[corpus]") {
  Profile p;
  p.values = {1.0, 3.0, 2.0, 2.0};  // energy 2 kWh
  const Profile s = scale_profile(p, 5.0);
  CHECK_THAT(annual_energy_kwh(s), Catch::Matchers::WithinAbs(5.0, 1e-12));
  CHECK_THAT(s.values[1], Catch::Matchers::WithinAbs(7.5, 1e-12));

  const Profile z = scale_profile(p, 0.0);
  for (double v : z.values) CHECK(v == 0.0);

  CHECK_THROWS_AS(scale_profile(p, -1.0), ContractViolation);
  Profile flat;
  flat.values = {0.0, 0.0};
  CHECK_THROWS_AS(scale_profile(flat, 1.0), DataError);
  Profile net_negative;
  net_negative.values = {1.0, -3.0};
  CHECK_THROWS_AS(scale_profile(net_negative, 1.0), DataError);
}

TEST_CASE("median profile, odd and even counts", "[corpus]") {
  const auto prof = [](std::vector<double> v) {
    Profile p;
    p.values = std::move(v);
    return p;
  };
  const std::vector<Profile> odd{prof({1, 10}), prof({3, 30}), prof({2, 20})};
  const Profile m_odd = median_profile(odd);
  CHECK(m_odd.values == std::vector<double>{2, 20});

  const std::vector<Profile> even{prof({1, 8}), prof({2, 2}), prof({3, 4}),
                                  prof({4, 6})};
  const Profile m_even = median_profile(even);
  CHECK(m_even.values == std::vector<double>{2.5, 5.0});

  CHECK_THROWS_AS(median_profile({}), ContractViolation);
  const std::vector<Profile> ragged{prof({1, 2}), prof({1})};
  CHECK_THROWS_AS(median_profile(ragged), ContractViolation);
}

TEST_CASE("deviation mass splits by sign", "[corpus]") {
  Profile ref;
  ref.values = {1.0, 1.0, 1.0};
  Profile s;
  s.values = {3.0, 1.0, 0.5};
  CHECK(delta_plus(s, ref) == 4.0);    // (3-1)^2
  CHECK(delta_minus(s, ref) == 0.25);  // (0.5-1)^2
  CHECK(delta_plus(ref, ref) == 0.0);
  CHECK(delta_minus(ref, ref) == 0.0);
}

TEST_CASE("spiky count per bin size", "[corpus]") {
  CHECK(spiky_count(0.95, 100) == 5);
  CHECK(spiky_count(0.95, 20) == 1);
  CHECK(spiky_count(0.95, 19) == 1);
  CHECK(spiky_count(0.95, 60) == 3);
  CHECK(spiky_count(0.5, 4) == 2);
  CHECK(spiky_count(0.9, 10) == 1);
  CHECK(spiky_count(0.999, 3) == 1);   // never zero
  CHECK(spiky_count(0.01, 5) == 5);    // nearly everything
  CHECK(spiky_count(0.75, 2) == 1);
  CHECK(spiky_count(0.75, 3) == 1);
  CHECK(spiky_count(0.75, 4) == 1);
}

TEST_CASE("quantile binning is monotone with near-equal sizes", "[corpus]") {
  const std::vector<double> cons{5, 1, 3, 2, 4, 6};
  CHECK(quantile_bin(cons, 2) == std::vector<std::uint32_t>{1, 0, 0, 0, 1, 1});

  // ties keep input order
  CHECK(quantile_bin({2, 2, 2, 2}, 2) == std::vector<std::uint32_t>{0, 0, 1, 1});

  // 7 values over 3 bins: sizes 3, 2, 2
  const auto a = quantile_bin({1, 2, 3, 4, 5, 6, 7}, 3);
  CHECK(a == std::vector<std::uint32_t>{0, 0, 0, 1, 1, 2, 2});

  CHECK_THROWS_AS(quantile_bin({}, 2), ConfigError);
  CHECK_THROWS_AS(quantile_bin({1.0}, 0), ConfigError);
  CHECK_THROWS_AS(quantile_bin({1.0}, 2), ConfigError);
}

TEST_CASE("classification picks the top deviators per direction", "[corpus]") {
  Bin b = toy::make_bin("b", "c",
                        {{1, 1, 1, 1}, {1, 1, 1, 5}, {0, 1, 1, 1}});
  CHECK(classify_spiky(b, 0.75, Direction::positive) ==
        std::vector<std::uint32_t>{1});
  CHECK(classify_spiky(b, 0.75, Direction::negative) ==
        std::vector<std::uint32_t>{2});
}

TEST_CASE("classification keeps threshold ties together", "[corpus]") {
  Bin b = toy::make_bin("b", "c", {{1, 1, 1, 1}, {2, 1, 1, 1}, {1, 2, 1, 1}});
  CHECK(classify_spiky(b, 0.75, Direction::positive) ==
        std::vector<std::uint32_t>{1, 2});
}

TEST_CASE("indistinguishable profiles all classify spiky", "[corpus]") {
  Corpus c = toy::make_corpus(3, {toy::make_bin(
                                     "b", "c", {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}})});
  CHECK(c.bins[0].spiky_plus.size() == 3);
  CHECK(c.bins[0].smooth_plus.empty());
}

TEST_CASE("classify guards its quantile", "[corpus]") {
  Bin b = toy::make_bin("b", "c", {{1, 1}, {2, 2}});
  CHECK_THROWS_AS(classify_spiky(b, 0.0, Direction::positive), ConfigError);
  CHECK_THROWS_AS(classify_spiky(b, 1.0, Direction::positive), ConfigError);
  Bin empty;
  CHECK_THROWS_AS(classify_spiky(empty, 0.9, Direction::positive),
                  ContractViolation);
}

TEST_CASE("complements partition the bin", "[corpus]") {
  Corpus c = toy::make_corpus(
      4, {toy::make_bin("b", "c", {{1, 1, 1, 1}, {1, 1, 1, 6}, {1, 1, 1, 2}})});
  const Bin& b = c.bins[0];
  CHECK(b.spiky_plus.size() + b.smooth_plus.size() == b.profiles.size());
  CHECK(b.spiky_minus.size() + b.smooth_minus.size() == b.profiles.size());
  CHECK(b.spiky_fraction(Direction::positive) ==
        static_cast<double>(b.spiky_plus.size()) / 3.0);
}

TEST_CASE("duplicate bin ids are rejected", "[corpus]") {
  Corpus c;
  c.T = 2;
  c.bins = {toy::make_bin("b", "c", {{1, 1}, {2, 2}}),
            toy::make_bin("b", "c", {{1, 1}, {2, 2}})};
  CHECK_THROWS_AS(c.rebuild_index(), DataError);
}

namespace {

CorpusSpec small_spec() {
  CorpusSpec spec;
  spec.T = 480;  // five days
  spec.q_spiky = 0.75;
  CategorySpec cat;
  cat.id = "house";
  cat.n_bins = 2;
  cat.profiles_per_bin = 8;
  cat.gamma_low_kwh = 1500.0;
  cat.gamma_high_kwh = 6000.0;
  cat.spike_fraction = 0.5;
  cat.pv_fraction = 0.25;
  spec.categories.push_back(cat);
  AverageCategorySpec avg;
  avg.id = "smallbiz";
  spec.average_categories.push_back(avg);
  TelemetrySpec tel;
  tel.id = "factory";
  tel.peak_kw = 40.0;
  spec.telemetry.push_back(tel);
  return spec;
}

}  // namespace

TEST_CASE("synthesis is a pure function of spec and seed", "[corpus]") {
  const CorpusSpec spec = small_spec();
  SynthLabels labels;
  const Corpus a = synthesize_corpus(spec, 7, &labels);
  const Corpus b = synthesize_corpus(spec, 7);
  REQUIRE(a.bins.size() == b.bins.size());
  for (std::size_t i = 0; i < a.bins.size(); ++i) {
    REQUIRE(a.bins[i].profiles.size() == b.bins[i].profiles.size());
    for (std::size_t p = 0; p < a.bins[i].profiles.size(); ++p)
      CHECK(a.bins[i].profiles[p].values == b.bins[i].profiles[p].values);
  }

  const Corpus c = synthesize_corpus(spec, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.bins.size() && !any_diff; ++i)
    any_diff = a.bins[i].profiles[0].values != c.bins[i].profiles[0].values;
  CHECK(any_diff);

  CHECK(labels.spike_injected.size() == 16);
  CHECK(labels.pv_injected.size() == 16);
}

TEST_CASE("synthetic corpus structure and normalisation", "[corpus]") {
  const Corpus c = synthesize_corpus(small_spec(), 21);
  CHECK(c.T == 480);
  CHECK(c.q_spiky == 0.75);
  REQUIRE(c.bins.size() == 2);
  for (const Bin& b : c.bins) {
    CHECK(b.category_id == "house");
    CHECK(b.profiles.size() == 8);
    for (const Profile& p : b.profiles) {
      CHECK(p.values.size() == 480);
      CHECK_THAT(annual_energy_kwh(p), Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
    CHECK(b.consumption_range[0] > 0.0);
    CHECK(b.consumption_range[0] <= b.consumption_range[1]);
    CHECK_FALSE(b.spiky_plus.empty());
    CHECK_FALSE(b.spiky_minus.empty());
  }
  // bins split the consumption range monotonically
  CHECK(c.bins[0].consumption_range[1] <= c.bins[1].consumption_range[0]);

  REQUIRE(c.average_profiles.count("smallbiz") == 1);
  CHECK_THAT(annual_energy_kwh(c.average_profiles.at("smallbiz")),
             Catch::Matchers::WithinAbs(1.0, 1e-9));
  REQUIRE(c.telemetry_profiles.count("factory") == 1);
  CHECK(c.telemetry_profiles.at("factory").values.size() == 480);
}

TEST_CASE("spec validation rejects broken inputs", "[corpus]") {
  CorpusSpec empty;
  CHECK_THROWS_AS(empty.validate(), ConfigError);

  CorpusSpec spec = small_spec();
  spec.categories[0].id = "bad id!";
  CHECK_THROWS_AS(spec.validate(), ConfigError);

  spec = small_spec();
  spec.categories[0].n_bins = 9;
  CHECK_THROWS_AS(spec.validate(), ConfigError);

  spec = small_spec();
  spec.categories[0].gamma_high_kwh = spec.categories[0].gamma_low_kwh;
  CHECK_THROWS_AS(spec.validate(), ConfigError);

  spec = small_spec();
  spec.categories[0].pv_energy_share = 0.9;
  CHECK_THROWS_AS(spec.validate(), ConfigError);

  spec = small_spec();
  spec.q_spiky = 1.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("spec parses from json with defaults", "[corpus]") {
  const auto j = nlohmann::json::parse(R"({
    "T": 960,
    "q_spiky": 0.9,
    "categories": [
      {"id": "home", "n_bins": 2, "profiles_per_bin": 4},
      {"id": "shop", "n_bins": 3, "profiles_per_bin": 5, "pv_fraction": 0.5}
    ],
    "average_categories": [{"id": "rest"}],
    "telemetry": [{"id": "plant", "peak_kw": 120.0}]
  })");
  const CorpusSpec spec = corpus_spec_from_json(j);
  CHECK(spec.T == 960);
  CHECK(spec.q_spiky == 0.9);
  REQUIRE(spec.categories.size() == 2);
  CHECK(spec.categories[0].profiles_per_bin == 4);
  CHECK(spec.categories[1].pv_fraction == 0.5);
  CHECK(spec.categories[1].spike_alpha == 1.6);  // default kept
  CHECK(spec.telemetry[0].peak_kw == 120.0);

  CHECK_THROWS_AS(corpus_spec_from_json(nlohmann::json::object()), ConfigError);
}

TEST_CASE("round trip through disk is stable", "[corpus]") {
  const Corpus orig = synthesize_corpus(small_spec(), 33);
  toy::TempDir dir1("corpus_io1");
  toy::TempDir dir2("corpus_io2");
  save_corpus(orig, dir1.path);
  const Corpus loaded1 = load_corpus(dir1.path);

  CHECK(loaded1.T == orig.T);
  CHECK(loaded1.seed == orig.seed);
  CHECK(loaded1.q_spiky == orig.q_spiky);
  REQUIRE(loaded1.bins.size() == orig.bins.size());
  for (std::size_t i = 0; i < orig.bins.size(); ++i) {
    CHECK(loaded1.bins[i].bin_id == orig.bins[i].bin_id);
    CHECK(loaded1.bins[i].spiky_plus == orig.bins[i].spiky_plus);
    CHECK(loaded1.bins[i].spiky_minus == orig.bins[i].spiky_minus);
    CHECK(loaded1.bins[i].smooth_plus == orig.bins[i].smooth_plus);
    CHECK(loaded1.bins[i].consumption_range == orig.bins[i].consumption_range);
  }
  CHECK(loaded1.bin_index.size() == orig.bins.size());

  // storage quantises once; a second pass through disk changes nothing
  save_corpus(loaded1, dir2.path);
  const Corpus loaded2 = load_corpus(dir2.path);
  for (std::size_t i = 0; i < loaded1.bins.size(); ++i)
    for (std::size_t p = 0; p < loaded1.bins[i].profiles.size(); ++p)
      CHECK(loaded2.bins[i].profiles[p].values ==
            loaded1.bins[i].profiles[p].values);

  const auto slurp = [](const std::filesystem::path& f) {
    std::ifstream is(f, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  CHECK(slurp(dir1.path / "house_b0.bin") == slurp(dir2.path / "house_b0.bin"));
}

TEST_CASE("values on the storage grid survive exactly", "[corpus]") {
  // halves and quarters are exact in 32-bit floats
  Corpus c = toy::make_corpus(
      4, {toy::make_bin("b0", "cat", {{0.5, 1.25, 2.0, 0.75},
                                      {4.0, 0.5, 0.25, 8.5},
                                      {1.0, 1.0, 1.5, 0.25}})});
  toy::TempDir dir("corpus_exact");
  save_corpus(c, dir.path);
  const Corpus loaded = load_corpus(dir.path);
  for (std::size_t p = 0; p < 3; ++p)
    CHECK(loaded.bins[0].profiles[p].values == c.bins[0].profiles[p].values);
}

TEST_CASE("loader rejects damaged stores", "[corpus]") {
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus/dir"), DataError);

  const Corpus orig = synthesize_corpus(small_spec(), 5);
  {
    toy::TempDir dir("corpus_trunc");
    save_corpus(orig, dir.path);
    std::filesystem::resize_file(dir.path / "house_b0.bin", 17);
    CHECK_THROWS_AS(load_corpus(dir.path), DataError);
  }
  {
    toy::TempDir dir("corpus_schema");
    save_corpus(orig, dir.path);
    auto meta = nlohmann::json::parse(std::ifstream(dir.path / "corpus.json"));
    meta["schema_version"] = 99;
    std::ofstream(dir.path / "corpus.json", std::ios::trunc) << meta.dump(2);
    CHECK_THROWS_AS(load_corpus(dir.path), DataError);
  }
  {
    toy::TempDir dir("corpus_badindex");
    save_corpus(orig, dir.path);
    auto meta = nlohmann::json::parse(std::ifstream(dir.path / "corpus.json"));
    meta["bins"][0]["spiky_plus"] = {1000};
    std::ofstream(dir.path / "corpus.json", std::ios::trunc) << meta.dump(2);
    CHECK_THROWS_AS(load_corpus(dir.path), DataError);
  }
}
