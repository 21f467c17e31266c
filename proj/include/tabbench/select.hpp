#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/core/matrix.hpp"
#include "tabbench/hpo/study.hpp"
#include "tabbench/metrics.hpp"
#include "tabbench/task.hpp"

namespace tabbench {

struct SelectionOutcome {
  ValidationProtocol protocol = ValidationProtocol::holdout();
  std::size_t chosen_trial_index = 0;
  double validation_score = 0.0;
  std::optional<double> test_score;
};

inline json to_json(const SelectionOutcome& s) {
  return {{"record", "selection"},
          {"protocol", s.protocol.name()},
          {"chosen_trial_index", s.chosen_trial_index},
          {"validation_score", s.validation_score},
          {"test_score", s.test_score ? json(*s.test_score) : json(nullptr)}};
}

namespace select_detail {

template <typename Score>
SelectionOutcome argmin(const std::vector<Trial>& trials, Score score, ValidationProtocol protocol) {
  std::optional<std::size_t> best;
  double best_value = 0.0;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (trials[i].state != TrialState::complete) continue;
    const double v = score(trials[i]);
    if (!best || v < best_value) {
      best = i;
      best_value = v;
    }
  }
  if (!best) throw SelectionError("no complete trials to select from");
  return {protocol, trials[*best].index, best_value, trials[*best].test_score};
}

}  // namespace select_detail

/// Trial with the lowest validation objective; ties go to the lowest index.
inline SelectionOutcome holdout_select(const std::vector<Trial>& trials) {
  return select_detail::argmin(trials, [](const Trial& t) { return t.objective; }, ValidationProtocol::holdout());
}

/// Trial with the lowest mean of its k fold validation scores. Its test
/// score is the one recorded for the fold-averaged predictions.
inline SelectionOutcome cv_select(const std::vector<Trial>& trials, std::size_t k) {
  for (const auto& t : trials) {
    if (t.state == TrialState::complete && t.per_fold_scores.size() < k) {
      throw ContractError("cv_select: trial " + std::to_string(t.index) + " has " +
                          std::to_string(t.per_fold_scores.size()) + " fold scores, expected " + std::to_string(k));
    }
  }
  return select_detail::argmin(
      trials,
      [k](const Trial& t) {
        return std::accumulate(t.per_fold_scores.begin(), t.per_fold_scores.begin() + static_cast<long>(k), 0.0) /
               static_cast<double>(k);
      },
      ValidationProtocol{ValidationProtocol::Kind::kfold, k});
}

inline SelectionOutcome select_trial(const std::vector<Trial>& trials, const ValidationProtocol& protocol) {
  return protocol.kind == ValidationProtocol::Kind::holdout ? holdout_select(trials) : cv_select(trials, protocol.k);
}

/// Element-wise mean of equally shaped prediction matrices.
inline PredictionMatrix average_predictions(const std::vector<PredictionMatrix>& preds) {
  if (preds.empty()) throw ContractError("average_predictions: no predictions");
  PredictionMatrix out(preds.front().rows(), preds.front().cols());
  for (const auto& p : preds) {
    if (p.rows() != out.rows() || p.cols() != out.cols()) {
      throw ContractError("average_predictions: prediction shapes differ");
    }
    for (std::size_t i = 0; i < p.data().size(); ++i) out.data()[i] += p.data()[i];
  }
  for (double& v : out.data()) v /= static_cast<double>(preds.size());
  return out;
}

/// Debug diagnostic: how far the selected trial's test score is from the
/// best test score any trial reached, with the empirical test-score CDF.
struct SelectionGap {
  double chosen_test = 0.0;
  double oracle_test = 0.0;
  std::size_t oracle_trial_index = 0;
  double gap = 0.0;  // >= 0, in the metric's "worse" direction
  std::vector<double> sorted_scores;
  std::vector<double> cdf;
};

inline SelectionGap selection_gap_report(const std::vector<Trial>& trials, const SelectionOutcome& outcome,
                                         Direction direction) {
  SelectionGap g;
  std::optional<std::size_t> oracle;
  for (const auto& t : trials) {
    if (t.state != TrialState::complete || !t.test_score) continue;
    g.sorted_scores.push_back(*t.test_score);
    if (!oracle || better(*t.test_score, g.oracle_test, direction)) {
      oracle = t.index;
      g.oracle_test = *t.test_score;
    }
  }
  if (!oracle || !outcome.test_score) throw SelectionError("selection gap: no recorded test scores");
  g.oracle_trial_index = *oracle;
  g.chosen_test = *outcome.test_score;
  g.gap = direction == Direction::lower_better ? g.chosen_test - g.oracle_test : g.oracle_test - g.chosen_test;
  std::sort(g.sorted_scores.begin(), g.sorted_scores.end());
  const auto m = static_cast<double>(g.sorted_scores.size());
  for (std::size_t i = 0; i < g.sorted_scores.size(); ++i) g.cdf.push_back(static_cast<double>(i + 1) / m);
  return g;
}

}  // namespace tabbench
