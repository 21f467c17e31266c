#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "tabbench/core/csv.hpp"
#include "tabbench/core/dataset.hpp"
#include "tabbench/harness/results.hpp"

namespace tabbench {

inline constexpr double kDeltaCap = 0.08;

struct ReportOptions {
  std::optional<double> delta_cap = kDeltaCap;
};

/// Sorted test scores of the complete trials of every study, one row per
/// trial with its empirical CDF value.
inline void write_cdf_csv(std::ostream& out, const ResultSet& r) {
  csv::write_record(out, {"protocol", "learner", "repetition", "fold", "position", "test_score", "cdf"});
  for (const auto& [protocol, records] : r.trials) {
    std::map<std::tuple<std::string, std::size_t, std::size_t>, std::vector<double>> studies;
    for (const auto& rec : records) {
      if (rec.value("record", "") != "trial" || rec.value("state", "") != "complete") continue;
      if (!rec.contains("test_score") || rec.at("test_score").is_null()) continue;
      studies[{rec.at("learner").get<std::string>(), rec.at("repetition").get<std::size_t>(),
               rec.at("fold").get<std::size_t>()}]
          .push_back(rec.at("test_score").get<double>());
    }
    for (auto& [key, scores] : studies) {
      std::sort(scores.begin(), scores.end());
      for (std::size_t i = 0; i < scores.size(); ++i) {
        csv::write_record(out, {protocol, std::get<0>(key), std::to_string(std::get<1>(key)),
                                std::to_string(std::get<2>(key)), std::to_string(i + 1), format_number(scores[i]),
                                format_number(static_cast<double>(i + 1) / static_cast<double>(scores.size()))});
      }
    }
  }
}

/// Chosen versus oracle-best test score per study (debug diagnostic).
inline void write_gaps_csv(std::ostream& out, const ResultSet& r) {
  csv::write_record(out, {"protocol", "learner", "repetition", "fold", "chosen_trial_index", "chosen_test_score",
                          "oracle_trial_index", "oracle_test_score", "selection_gap"});
  for (const auto& [protocol, records] : r.outcomes) {
    for (const auto& rec : records) {
      if (rec.value("state", "") != "complete") continue;
      csv::write_record(out, {protocol, rec.at("learner").get<std::string>(),
                              std::to_string(rec.at("repetition").get<std::size_t>()),
                              std::to_string(rec.at("fold").get<std::size_t>()),
                              std::to_string(rec.at("chosen_trial_index").get<std::size_t>()),
                              format_number(rec.at("test_score").get<double>()),
                              std::to_string(rec.at("oracle_trial_index").get<std::size_t>()),
                              format_number(rec.at("oracle_test_score").get<double>()),
                              format_number(rec.at("selection_gap").get<double>())});
    }
  }
}

struct DeltaRow {
  std::string learner;
  std::size_t repetition = 0;
  std::size_t fold = 0;
  double holdout = 0.0;
  double kfold = 0.0;
  double delta = 0.0;  // kfold minus holdout
};

/// Pairs holdout and k-fold outcomes of the same (learner, repetition,
/// fold). Uses the first k-fold protocol present.
inline std::vector<DeltaRow> delta_series(const ResultSet& r) {
  std::vector<DeltaRow> out;
  const auto h = r.outcomes.find("holdout");
  auto k = std::find_if(r.outcomes.begin(), r.outcomes.end(), [](const auto& e) { return e.first.rfind("kfold", 0) == 0; });
  if (h == r.outcomes.end() || k == r.outcomes.end()) return out;
  std::map<std::tuple<std::string, std::size_t, std::size_t>, double> hold;
  for (const auto& rec : h->second) {
    if (rec.value("state", "") != "complete") continue;
    hold[{rec.at("learner").get<std::string>(), rec.at("repetition").get<std::size_t>(),
          rec.at("fold").get<std::size_t>()}] = rec.at("test_score").get<double>();
  }
  for (const auto& rec : k->second) {
    if (rec.value("state", "") != "complete") continue;
    const std::tuple<std::string, std::size_t, std::size_t> key{
        rec.at("learner").get<std::string>(), rec.at("repetition").get<std::size_t>(), rec.at("fold").get<std::size_t>()};
    const auto it = hold.find(key);
    if (it == hold.end()) continue;
    DeltaRow d{std::get<0>(key), std::get<1>(key), std::get<2>(key), it->second, rec.at("test_score").get<double>(), 0.0};
    d.delta = d.kfold - d.holdout;
    out.push_back(d);
  }
  return out;
}

inline void write_delta_csv(std::ostream& out, const ResultSet& r, const ReportOptions& opt = {}) {
  csv::write_record(out, {"dataset", "learner", "repetition", "fold", "holdout", "kfold", "delta", "delta_capped"});
  for (const auto& d : delta_series(r)) {
    const double capped = opt.delta_cap ? std::clamp(d.delta, -*opt.delta_cap, *opt.delta_cap) : d.delta;
    csv::write_record(out, {r.dataset, d.learner, std::to_string(d.repetition), std::to_string(d.fold),
                            format_number(d.holdout), format_number(d.kfold), format_number(d.delta),
                            format_number(capped)});
  }
}

}  // namespace tabbench
