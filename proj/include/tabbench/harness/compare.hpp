#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "tabbench/core/csv.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/harness/results.hpp"
#include "tabbench/metrics.hpp"
#include "tabbench/stats.hpp"

namespace tabbench {

struct ModelComparison {
  std::string model;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
  bool best = false;
  std::optional<double> p_value;  // vs the best model; none for the best itself
  bool significant = false;       // Holm-rejected at alpha
};

struct DatasetComparison {
  std::string dataset;
  std::string protocol;
  Metric metric = Metric::logloss;
  std::vector<ModelComparison> models;
};

struct Comparison {
  std::vector<DatasetComparison> datasets;
  std::map<std::string, std::vector<SummaryRow>> aggregate;  // protocol -> table
};

namespace compare_detail {

using Grid = std::map<std::pair<std::size_t, std::size_t>, double>;  // (repetition, fold) -> score

inline std::string describe(const std::pair<std::size_t, std::size_t>& k) {
  return "(repetition " + std::to_string(k.first) + ", fold " + std::to_string(k.second) + ")";
}

}  // namespace compare_detail

/// Per dataset and protocol: mean and std per model, and a Wilcoxon
/// signed-rank test of every model against the best one over the shared
/// fold grid with Holm correction. Also a global average-rank table.
inline Comparison compare_results(const std::vector<ResultSet>& sets, double alpha = 0.05) {
  using compare_detail::Grid;
  if (sets.size() < 2) throw ContractError("compare: needs at least 2 result directories, got " + std::to_string(sets.size()));

  // (dataset, protocol) -> model -> grid; models in first-seen order.
  std::map<std::pair<std::string, std::string>, std::vector<std::pair<std::string, Grid>>> groups;
  std::map<std::string, Metric> metric_of;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> learner_count;
  for (const auto& s : sets)
    for (const auto& [protocol, records] : s.outcomes) {
      std::set<std::string> seen;
      for (const auto& rec : records) seen.insert(rec.at("learner").get<std::string>());
      for (const auto& l : seen) ++learner_count[{s.dataset, protocol, l}];
    }
  for (const auto& s : sets) {
    if (metric_of.contains(s.dataset) && metric_of[s.dataset] != s.metric) {
      throw ContractError("compare: dataset '" + s.dataset + "' appears with different metrics");
    }
    metric_of[s.dataset] = s.metric;
    for (const auto& [protocol, records] : s.outcomes) {
      auto& models = groups[{s.dataset, protocol}];
      for (const auto& rec : records) {
        if (rec.value("state", "") != "complete") continue;
        const auto learner = rec.at("learner").get<std::string>();
        const std::string label = learner_count[{s.dataset, protocol, learner}] > 1
                                      ? s.dir.filename().string() + ":" + learner
                                      : learner;
        auto it = std::find_if(models.begin(), models.end(), [&](const auto& m) { return m.first == label; });
        if (it == models.end()) {
          models.emplace_back(label, Grid{});
          it = std::prev(models.end());
        }
        it->second[{rec.at("repetition").get<std::size_t>(), rec.at("fold").get<std::size_t>()}] =
            rec.at("test_score").get<double>();
      }
    }
  }

  Comparison out;
  std::map<std::string, std::vector<std::pair<std::string, std::vector<double>>>> columns;  // protocol -> model -> scores
  for (const auto& [key, models] : groups) {
    const auto& [dataset, protocol] = key;
    if (models.empty()) continue;
    const Metric metric = metric_of[dataset];
    const Direction dir = direction_of(metric);
    const Grid& ref = models.front().second;
    for (const auto& [name, grid] : models) {
      std::vector<std::string> diff;
      for (const auto& [k, _] : ref)
        if (!grid.contains(k)) diff.push_back(name + " lacks " + compare_detail::describe(k));
      for (const auto& [k, _] : grid)
        if (!ref.contains(k)) diff.push_back(models.front().first + " lacks " + compare_detail::describe(k));
      if (!diff.empty()) {
        std::string list;
        for (const auto& d : diff) list += "\n  " + d;
        throw ContractError("compare: fold grids differ on dataset '" + dataset + "' (" + protocol + "):" + list);
      }
    }
    DatasetComparison dc{dataset, protocol, metric, {}};
    std::vector<std::vector<double>> scores;
    for (const auto& [name, grid] : models) {
      std::vector<double> v;
      for (const auto& [_, s] : grid) v.push_back(s);
      ModelComparison mc;
      mc.model = name;
      mc.n = v.size();
      for (double x : v) mc.mean += x;
      mc.mean /= static_cast<double>(v.size());
      for (double x : v) mc.std += (x - mc.mean) * (x - mc.mean);
      mc.std = v.size() > 1 ? std::sqrt(mc.std / static_cast<double>(v.size() - 1)) : 0.0;
      dc.models.push_back(mc);
      scores.push_back(std::move(v));
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < dc.models.size(); ++i) {
      if (better(dc.models[i].mean, dc.models[best].mean, dir)) best = i;
    }
    dc.models[best].best = true;
    std::vector<double> pvals;
    std::vector<std::size_t> who;
    for (std::size_t i = 0; i < dc.models.size(); ++i) {
      if (i == best) continue;
      const auto w = wilcoxon_signed_rank(scores[i], scores[best]);
      dc.models[i].p_value = w.p_value;
      pvals.push_back(w.p_value);
      who.push_back(i);
    }
    if (!pvals.empty()) {
      const auto reject = holm_bonferroni(pvals, alpha);
      for (std::size_t t = 0; t < who.size(); ++t) dc.models[who[t]].significant = reject[t];
    }
    auto& cols = columns[protocol];
    for (std::size_t i = 0; i < models.size(); ++i) {
      auto it = std::find_if(cols.begin(), cols.end(), [&](const auto& c) { return c.first == models[i].first; });
      if (it == cols.end()) {
        cols.emplace_back(models[i].first, std::vector<double>{});
        it = std::prev(cols.end());
      }
      it->second.insert(it->second.end(), scores[i].begin(), scores[i].end());
    }
    out.datasets.push_back(std::move(dc));
  }

  // Global table over models present on every dataset of the protocol.
  for (auto& [protocol, cols] : columns) {
    std::size_t width = 0;
    for (const auto& c : cols) width = std::max(width, c.second.size());
    FoldScoreMatrix m;
    m.metric = out.datasets.empty() ? Metric::logloss : out.datasets.front().metric;
    m.direction = direction_of(m.metric);
    std::vector<const std::vector<double>*> keep;
    for (const auto& c : cols) {
      if (c.second.size() == width) {
        m.models.push_back(c.first);
        keep.push_back(&c.second);
      }
    }
    m.scores = Matrix(keep.size(), width);
    for (std::size_t i = 0; i < keep.size(); ++i)
      for (std::size_t f = 0; f < width; ++f) m.scores(i, f) = (*keep[i])[f];
    out.aggregate[protocol] = aggregate_table(m);
  }
  return out;
}

inline void write_comparison_csv(std::ostream& out, const Comparison& c) {
  csv::write_record(out, {"dataset", "protocol", "metric", "model", "mean", "std", "n", "p_value", "significant",
                          "best_or_tied"});
  for (const auto& d : c.datasets) {
    for (const auto& m : d.models) {
      csv::write_record(out, {d.dataset, d.protocol, std::string(to_string(d.metric)), m.model, format_number(m.mean),
                              format_number(m.std), std::to_string(m.n),
                              m.p_value ? format_number(*m.p_value) : "", m.significant ? "1" : "0",
                              !m.significant ? "1" : "0"});
    }
  }
}

/// Human-readable report; '*' marks the best model and those not
/// significantly different from it.
inline void write_comparison_text(std::ostream& out, const Comparison& c) {
  char buf[256];
  for (const auto& d : c.datasets) {
    out << d.dataset << " [" << d.protocol << ", " << to_string(d.metric) << "]\n";
    for (const auto& m : d.models) {
      std::snprintf(buf, sizeof buf, "  %c %-24s %.4f +- %.4f", m.significant ? ' ' : '*', m.model.c_str(), m.mean,
                    m.std);
      out << buf;
      if (m.p_value) {
        std::snprintf(buf, sizeof buf, "  p = %.4g", *m.p_value);
        out << buf;
      } else {
        out << "  (best)";
      }
      out << '\n';
    }
  }
  for (const auto& [protocol, rows] : c.aggregate) {
    out << "\naggregate [" << protocol << "]\n";
    write_summary_text(out, rows, c.datasets.empty() ? Metric::logloss : c.datasets.front().metric);
  }
}

}  // namespace tabbench
