#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabbench/core/error.hpp"
#include "tabbench/core/matrix.hpp"

namespace tabbench {

enum class Metric { logloss, auc, rmse, r2, accuracy, mse };
enum class Direction { lower_better, higher_better };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::logloss: return "logloss";
    case Metric::auc: return "auc";
    case Metric::rmse: return "rmse";
    case Metric::r2: return "r2";
    case Metric::accuracy: return "accuracy";
    case Metric::mse: return "mse";
  }
  return "?";
}

inline Metric metric_from_string(std::string_view s) {
  for (auto m : {Metric::logloss, Metric::auc, Metric::rmse, Metric::r2, Metric::accuracy,
                 Metric::mse}) {
    if (to_string(m) == s) return m;
  }
  throw SchemaError("unknown metric '" + std::string(s) + "'");
}

inline std::string_view to_string(Direction d) {
  return d == Direction::lower_better ? "lower_better" : "higher_better";
}

inline Direction direction_of(Metric m) {
  switch (m) {
    case Metric::logloss:
    case Metric::rmse:
    case Metric::mse:
      return Direction::lower_better;
    default:
      return Direction::higher_better;
  }
}

inline bool is_classification_metric(Metric m) {
  return m == Metric::logloss || m == Metric::auc || m == Metric::accuracy;
}

/// True when `a` is strictly better than `b`.
inline bool better(double a, double b, Direction d) {
  return d == Direction::lower_better ? a < b : a > b;
}

inline constexpr double kProbabilityClip = 1e-15;

namespace metrics {

inline void check_rows(std::span<const double> y, const PredictionMatrix& pred) {
  if (pred.rows() != y.size()) {
    throw ContractError("prediction has " + std::to_string(pred.rows()) + " rows, target has " +
                        std::to_string(y.size()));
  }
}

inline std::size_t class_of(double code, std::size_t n_classes) {
  const auto c = static_cast<long long>(code);
  if (c < 0 || static_cast<std::size_t>(c) >= n_classes || static_cast<double>(c) != code) {
    throw ContractError("class code " + std::to_string(code) + " outside prediction columns");
  }
  return static_cast<std::size_t>(c);
}

inline double logloss(std::span<const double> y, const PredictionMatrix& pred) {
  check_rows(y, pred);
  if (pred.cols() < 2) throw ContractError("logloss needs one probability column per class");
  double total = 0.0;
  for (std::size_t r = 0; r < y.size(); ++r) {
    const double p = std::clamp(pred(r, class_of(y[r], pred.cols())), kProbabilityClip,
                                1.0 - kProbabilityClip);
    total -= std::log(p);
  }
  return total / static_cast<double>(y.size());
}

/// Binary AUC from positive-class scores: Mann-Whitney statistic with
/// average ranks, so tied (positive, negative) pairs count one half.
inline double auc_from_scores(std::span<const double> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw ContractError("auc: label/score length mismatch");
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] != 0.0) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("auc: only one class present");
  const double np = static_cast<double>(n_pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

inline double auc(std::span<const double> y, const PredictionMatrix& pred) {
  check_rows(y, pred);
  if (pred.cols() > 2) throw MetricError("auc: multiclass AUC is not supported");
  std::vector<double> scores(y.size());
  const std::size_t col = pred.cols() == 2 ? 1 : 0;
  for (std::size_t r = 0; r < y.size(); ++r) scores[r] = pred(r, col);
  return auc_from_scores(y, scores);
}

inline double accuracy(std::span<const double> y, const PredictionMatrix& pred) {
  check_rows(y, pred);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < y.size(); ++r) {
    const auto row = pred.row(r);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == class_of(y[r], pred.cols())) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

inline double mse(std::span<const double> y, const PredictionMatrix& pred) {
  check_rows(y, pred);
  if (pred.cols() != 1) throw ContractError("regression metrics need a single prediction column");
  double s = 0.0;
  for (std::size_t r = 0; r < y.size(); ++r) s += (pred(r, 0) - y[r]) * (pred(r, 0) - y[r]);
  return s / static_cast<double>(y.size());
}

inline double r2(std::span<const double> y, const PredictionMatrix& pred) {
  const double sse = mse(y, pred) * static_cast<double>(y.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double sst = 0.0;
  for (double v : y) sst += (v - mean) * (v - mean);
  if (sst == 0.0) throw MetricError("r2: target has zero variance");
  return 1.0 - sse / sst;
}

}  // namespace metrics

/// Scores predictions against targets (class codes for classification).
inline double score(Metric metric, std::span<const double> y, const PredictionMatrix& pred) {
  if (y.empty()) throw ContractError("score: empty target");
  switch (metric) {
    case Metric::logloss: return metrics::logloss(y, pred);
    case Metric::auc: return metrics::auc(y, pred);
    case Metric::accuracy: return metrics::accuracy(y, pred);
    case Metric::mse: return metrics::mse(y, pred);
    case Metric::rmse: return std::sqrt(metrics::mse(y, pred));
    case Metric::r2: return metrics::r2(y, pred);
  }
  return 0.0;
}

/// Per-fold affine normalisation: best -> 0, worst -> 1. A fold where every
/// model scores the same maps to all zeros.
inline std::vector<double> adtm_normalize(std::span<const double> column, Direction direction) {
  std::vector<double> out(column.size(), 0.0);
  if (column.empty()) return out;
  const auto [lo, hi] = std::minmax_element(column.begin(), column.end());
  const double best = direction == Direction::lower_better ? *lo : *hi;
  const double worst = direction == Direction::lower_better ? *hi : *lo;
  if (best == worst) return out;
  for (std::size_t i = 0; i < column.size(); ++i) {
    out[i] = (column[i] - best) / (worst - best);
  }
  return out;
}

/// Rank 1 = best; ties share the average of their positions.
inline std::vector<double> fold_ranks(std::span<const double> column, Direction direction) {
  const std::size_t m = column.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return direction == Direction::lower_better ? column[a] < column[b] : column[a] > column[b];
  });
  std::vector<double> ranks(m);
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j < m && column[order[j]] == column[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = avg;
    i = j;
  }
  return ranks;
}

/// models x folds matrix of a single metric.
struct FoldScoreMatrix {
  std::vector<std::string> models;
  Matrix scores;  // rows = models, cols = folds
  Metric metric = Metric::logloss;
  Direction direction = Direction::lower_better;
};

struct SummaryRow {
  std::string model;
  double avg_rank = 0.0;
  double avg_normalized = 0.0;
  double avg_raw = 0.0;
};

/// Mean per-fold rank, mean per-fold ADTM value and mean raw score per
/// model, sorted by average rank (stable on model order).
inline std::vector<SummaryRow> aggregate_table(const FoldScoreMatrix& m) {
  const std::size_t n_models = m.scores.rows(), n_folds = m.scores.cols();
  if (n_models != m.models.size()) throw ContractError("aggregate_table: model names/rows mismatch");
  std::vector<SummaryRow> rows(n_models);
  for (std::size_t i = 0; i < n_models; ++i) rows[i].model = m.models[i];
  std::vector<double> column(n_models);
  for (std::size_t f = 0; f < n_folds; ++f) {
    for (std::size_t i = 0; i < n_models; ++i) {
      column[i] = m.scores(i, f);
      if (!std::isfinite(column[i])) throw ContractError("aggregate_table: non-finite score");
    }
    const auto ranks = fold_ranks(column, m.direction);
    const auto norm = adtm_normalize(column, m.direction);
    for (std::size_t i = 0; i < n_models; ++i) {
      rows[i].avg_rank += ranks[i];
      rows[i].avg_normalized += norm[i];
      rows[i].avg_raw += column[i];
    }
  }
  if (n_folds > 0) {
    for (auto& r : rows) {
      r.avg_rank /= static_cast<double>(n_folds);
      r.avg_normalized /= static_cast<double>(n_folds);
      r.avg_raw /= static_cast<double>(n_folds);
    }
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const SummaryRow& a, const SummaryRow& b) { return a.avg_rank < b.avg_rank; });
  return rows;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows, Metric metric) {
  out << "model,avg_rank,avg_norm_" << to_string(metric) << ",avg_" << to_string(metric) << '\n';
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f", r.avg_rank, r.avg_normalized, r.avg_raw);
    out << r.model << ',' << buf << '\n';
  }
}

inline void write_summary_text(std::ostream& out, const std::vector<SummaryRow>& rows, Metric metric) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.model.size());
  const std::string norm = "Avg. norm. " + std::string(to_string(metric));
  const std::string raw = "Avg. " + std::string(to_string(metric));
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %*s  %*s\n", static_cast<int>(width), "Model",
                "Avg. Rank", static_cast<int>(norm.size()), norm.c_str(),
                static_cast<int>(std::max<std::size_t>(raw.size(), 9)), raw.c_str());
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %9.2f  %*.3f  %*.4f\n", static_cast<int>(width),
                  r.model.c_str(), r.avg_rank, static_cast<int>(norm.size()), r.avg_normalized,
                  static_cast<int>(std::max<std::size_t>(raw.size(), 9)), r.avg_raw);
    out << buf;
  }
}

}  // namespace tabbench
