#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gridrisk/corpus.hpp"
#include "json.hpp"

namespace gridrisk {

// On-disk corpus layout: corpus.json carries the metadata (ids, bin
// structure, classification, consumption ranges) and each profile matrix
// lives in its own raw binary of little-endian float32, row-major, one row
// per profile of T steps. Values are held as float at the file boundary
// only; in memory everything is double, so a load/save cycle is bit-exact.

namespace detail {

inline void swap_if_big_endian(std::vector<float>& buf) {
  if constexpr (std::endian::native == std::endian::big) {
    for (float& f : buf) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      u = __builtin_bswap32(u);
      std::memcpy(&f, &u, 4);
    }
  }
}

inline void write_f32(const std::filesystem::path& path,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  std::vector<float> buf;
  for (const auto& row : rows) {
    buf.assign(row.begin(), row.end());
    swap_if_big_endian(buf);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!os) throw DataError("short write to '" + path.string() + "'");
}

inline std::vector<std::vector<double>> read_f32(const std::filesystem::path& path,
                                                 std::size_t n_rows,
                                                 std::size_t n_cols) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path.string() + "'");
  is.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::uint64_t>(is.tellg());
  if (bytes != static_cast<std::uint64_t>(n_rows) * n_cols * sizeof(float))
    throw DataError("'" + path.string() + "' has the wrong size for " +
                    std::to_string(n_rows) + " profiles of " +
                    std::to_string(n_cols) + " steps");
  is.seekg(0);
  std::vector<std::vector<double>> rows(n_rows);
  std::vector<float> buf(n_cols);
  for (std::size_t r = 0; r < n_rows; ++r) {
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(n_cols * sizeof(float)));
    if (!is) throw DataError("short read from '" + path.string() + "'");
    swap_if_big_endian(buf);
    rows[r].assign(buf.begin(), buf.end());
  }
  return rows;
}

}  // namespace detail

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["schema_version"] = 1;
  meta["T"] = corpus.T;
  meta["seed"] = corpus.seed;
  meta["q_spiky"] = corpus.q_spiky;

  auto bins = nlohmann::json::array();
  for (const Bin& b : corpus.bins) {
    nlohmann::json bj;
    bj["bin_id"] = b.bin_id;
    bj["category_id"] = b.category_id;
    bj["file"] = b.bin_id + ".bin";
    bj["consumption_range"] = b.consumption_range;
    auto ids = nlohmann::json::array();
    std::vector<std::vector<double>> rows;
    rows.reserve(b.profiles.size());
    for (const Profile& p : b.profiles) {
      ids.push_back(p.id);
      rows.push_back(p.values);
    }
    bj["profile_ids"] = std::move(ids);
    bj["spiky_plus"] = b.spiky_plus;
    bj["spiky_minus"] = b.spiky_minus;
    detail::write_f32(dir / (b.bin_id + ".bin"), rows);
    bins.push_back(std::move(bj));
  }
  meta["bins"] = std::move(bins);

  auto avgs = nlohmann::json::array();
  for (const auto& [id, p] : corpus.average_profiles) {
    avgs.push_back({{"id", id}, {"file", "avg_" + id + ".bin"}});
    detail::write_f32(dir / ("avg_" + id + ".bin"), {p.values});
  }
  meta["average_profiles"] = std::move(avgs);

  auto tels = nlohmann::json::array();
  for (const auto& [id, p] : corpus.telemetry_profiles) {
    tels.push_back({{"id", id}, {"file", "tel_" + id + ".bin"}});
    detail::write_f32(dir / ("tel_" + id + ".bin"), {p.values});
  }
  meta["telemetry_profiles"] = std::move(tels);

  std::ofstream os(dir / "corpus.json", std::ios::trunc);
  if (!os) throw DataError("cannot write corpus.json in '" + dir.string() + "'");
  os << meta.dump(2) << "\n";
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  std::ifstream is(dir / "corpus.json");
  if (!is) throw DataError("'" + dir.string() + "' has no corpus.json");
  nlohmann::json meta;
  try {
    is >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corpus.json is not valid JSON: " + std::string(e.what()));
  }
  if (meta.value("schema_version", 0) != 1)
    throw DataError("corpus.json has an unsupported schema version");

  Corpus corpus;
  corpus.T = meta.at("T").get<std::uint32_t>();
  corpus.seed = meta.value("seed", std::uint64_t{0});
  corpus.q_spiky = meta.at("q_spiky").get<double>();
  if (corpus.T < 1) throw DataError("corpus.json: horizon must be positive");

  for (const auto& bj : meta.at("bins")) {
    Bin b;
    b.bin_id = bj.at("bin_id").get<std::string>();
    b.category_id = bj.at("category_id").get<std::string>();
    b.consumption_range[0] = bj.at("consumption_range").at(0).get<double>();
    b.consumption_range[1] = bj.at("consumption_range").at(1).get<double>();
    const auto ids = bj.at("profile_ids").get<std::vector<std::string>>();
    if (ids.empty()) throw DataError("bin '" + b.bin_id + "' has no profiles");
    auto rows = detail::read_f32(dir / bj.at("file").get<std::string>(),
                                 ids.size(), corpus.T);
    b.profiles.resize(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      b.profiles[i].id = ids[i];
      b.profiles[i].values = std::move(rows[i]);
    }
    b.spiky_plus = bj.at("spiky_plus").get<std::vector<std::uint32_t>>();
    b.spiky_minus = bj.at("spiky_minus").get<std::vector<std::uint32_t>>();
    for (std::uint32_t i : b.spiky_plus)
      if (i >= b.profiles.size())
        throw DataError("bin '" + b.bin_id + "' has an out-of-range spiky index");
    for (std::uint32_t i : b.spiky_minus)
      if (i >= b.profiles.size())
        throw DataError("bin '" + b.bin_id + "' has an out-of-range spiky index");
    b.rebuild_complements();
    corpus.bins.push_back(std::move(b));
  }

  for (const auto& aj : meta.value("average_profiles", nlohmann::json::array())) {
    const auto id = aj.at("id").get<std::string>();
    auto rows = detail::read_f32(dir / aj.at("file").get<std::string>(), 1, corpus.T);
    Profile p;
    p.id = id;
    p.values = std::move(rows[0]);
    corpus.average_profiles[id] = std::move(p);
  }
  for (const auto& tj : meta.value("telemetry_profiles", nlohmann::json::array())) {
    const auto id = tj.at("id").get<std::string>();
    auto rows = detail::read_f32(dir / tj.at("file").get<std::string>(), 1, corpus.T);
    Profile p;
    p.id = id;
    p.values = std::move(rows[0]);
    corpus.telemetry_profiles[id] = std::move(p);
  }

  corpus.rebuild_index();
  return corpus;
}

}  // namespace gridrisk
