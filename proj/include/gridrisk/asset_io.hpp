#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "gridrisk/demand.hpp"
#include "json.hpp"

namespace gridrisk {

inline nlohmann::json asset_to_json(const Asset& a) {
  nlohmann::json j;
  j["asset_id"] = a.asset_id;
  j["d_cap_kw"] = a.d_cap_kw;
  auto customers = nlohmann::json::array();
  for (const Customer& c : a.customers) {
    nlohmann::json cj;
    cj["group"] = to_string(c.group);
    switch (c.group) {
      case CustomerGroup::smart_meter:
        cj["gamma_kwh"] = c.gamma_kwh;
        cj["bin_id"] = c.bin_id;
        break;
      case CustomerGroup::telemetry:
        cj["telemetry_id"] = c.telemetry_id;
        break;
      case CustomerGroup::average:
        cj["gamma_kwh"] = c.gamma_kwh;
        cj["category_id"] = c.category_id;
        break;
    }
    customers.push_back(std::move(cj));
  }
  j["customers"] = std::move(customers);
  return j;
}

inline Asset asset_from_json(const nlohmann::json& j) {
  Asset a;
  a.asset_id = j.at("asset_id").get<std::string>();
  a.d_cap_kw = j.at("d_cap_kw").get<double>();
  for (const auto& cj : j.at("customers")) {
    Customer c;
    c.group = customer_group_from_string(cj.at("group").get<std::string>());
    switch (c.group) {
      case CustomerGroup::smart_meter:
        c.gamma_kwh = cj.at("gamma_kwh").get<double>();
        c.bin_id = cj.at("bin_id").get<std::string>();
        break;
      case CustomerGroup::telemetry:
        c.telemetry_id = cj.at("telemetry_id").get<std::string>();
        break;
      case CustomerGroup::average:
        c.gamma_kwh = cj.at("gamma_kwh").get<double>();
        c.category_id = cj.at("category_id").get<std::string>();
        break;
    }
    a.customers.push_back(std::move(c));
  }
  return a;
}

inline void save_assets(std::span<const Asset> assets,
                        const std::filesystem::path& path) {
  nlohmann::json j;
  j["schema_version"] = 1;
  auto arr = nlohmann::json::array();
  for (const Asset& a : assets) arr.push_back(asset_to_json(a));
  j["assets"] = std::move(arr);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  os << j.dump(2) << "\n";
}

inline std::vector<Asset> load_assets(const std::filesystem::path& path) {
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
  std::vector<Asset> assets;
  for (const auto& aj : j.at("assets")) assets.push_back(asset_from_json(aj));
  if (assets.empty()) throw DataError("'" + path.string() + "' defines no assets");
  return assets;
}

struct ValidationIssue {
  std::string asset_id;
  std::string message;
};

// Check every asset against the corpus without bailing at the first
// problem; the evaluator constructor would throw, this collects.
inline std::vector<ValidationIssue> validate_assets(std::span<const Asset> assets,
                                                    const Corpus& corpus) {
  std::vector<ValidationIssue> issues;
  for (const Asset& a : assets) {
    if (!(a.d_cap_kw > 0.0))
      issues.push_back({a.asset_id, "capacity rating must be positive"});
    for (std::size_t i = 0; i < a.customers.size(); ++i) {
      const Customer& c = a.customers[i];
      const std::string where = "customer " + std::to_string(i) + ": ";
      switch (c.group) {
        case CustomerGroup::smart_meter:
          if (corpus.bin_index.find(c.bin_id) == corpus.bin_index.end())
            issues.push_back({a.asset_id, where + "unknown bin id '" + c.bin_id + "'"});
          if (c.gamma_kwh < 0.0)
            issues.push_back({a.asset_id, where + "negative yearly consumption"});
          break;
        case CustomerGroup::telemetry:
          if (corpus.telemetry_profiles.find(c.telemetry_id) ==
              corpus.telemetry_profiles.end())
            issues.push_back(
                {a.asset_id, where + "unknown telemetry id '" + c.telemetry_id + "'"});
          break;
        case CustomerGroup::average:
          if (corpus.average_profiles.find(c.category_id) ==
              corpus.average_profiles.end())
            issues.push_back({a.asset_id, where + "unknown average-profile category '" +
                                              c.category_id + "'"});
          if (c.gamma_kwh < 0.0)
            issues.push_back({a.asset_id, where + "negative yearly consumption"});
          break;
      }
    }
  }
  return issues;
}

}  // namespace gridrisk
