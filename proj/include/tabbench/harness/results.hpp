#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/metrics.hpp"

namespace tabbench {

/// A run directory read back from disk.
struct ResultSet {
  std::filesystem::path dir;
  std::string dataset;
  Metric metric = Metric::logloss;
  std::map<std::string, std::vector<nlohmann::json>> outcomes;  // protocol -> records
  std::map<std::string, std::vector<nlohmann::json>> trials;    // protocol -> trial records
};

namespace results_detail {

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::vector<nlohmann::json> out;
  std::ifstream in(path);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

}  // namespace results_detail

inline ResultSet load_result_set(const std::filesystem::path& dir) {
  ResultSet r;
  r.dir = dir;
  const auto task_path = dir / "task.json";
  if (!std::filesystem::exists(task_path)) throw ContractError("'" + dir.string() + "' is not a result directory");
  std::ifstream in(task_path);
  const auto task = nlohmann::json::parse(in);
  r.dataset = task.at("dataset_name").get<std::string>();
  r.metric = metric_from_string(task.at("metric").get<std::string>());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() != ".jsonl") continue;
    if (name.rfind("outcomes_", 0) == 0) {
      r.outcomes[name.substr(9, name.size() - 9 - 6)] = results_detail::read_jsonl(entry.path());
    } else if (name.rfind("trials_", 0) == 0) {
      r.trials[name.substr(7, name.size() - 7 - 6)] = results_detail::read_jsonl(entry.path());
    }
  }
  return r;
}

}  // namespace tabbench
