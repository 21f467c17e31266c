#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "tabbench/core/dataset.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/learners/gbdt.hpp"
#include "tabbench/metrics.hpp"
#include "tabbench/preprocess/pipeline.hpp"
#include "tabbench/split.hpp"
#include "tabbench/stats.hpp"
#include "tabbench/task.hpp"

namespace tabbench {

enum class Severity { error, warning };

inline std::string_view to_string(Severity s) { return s == Severity::error ? "error" : "warning"; }

struct AuditFinding {
  std::string check;  // near_perfect, single_feature_leak, linear_composition, id_feature,
                      // duplicate_rows, constant_feature, unscanned_metadata
  Severity severity = Severity::warning;
  std::vector<std::string> columns;
  json evidence = json::object();
};

inline json to_json(const AuditFinding& f) {
  return {{"check", f.check}, {"severity", to_string(f.severity)}, {"columns", f.columns}, {"evidence", f.evidence}};
}

struct AuditThresholds {
  double error = 0.999;
  double warning = 0.99;
};

/// Probe score on one split: AUC (binary), accuracy (multiclass) or R^2.
struct ProbeResult {
  std::string metric;
  double score = 0.0;
};

namespace audit_detail {

inline ProbeResult probe_score(const DatasetTable& table, std::span<const double> y, const PredictionMatrix& pred) {
  switch (table.task_kind()) {
    case TaskKind::binary: return {"auc", metrics::auc(y, pred)};
    case TaskKind::multiclass: return {"accuracy", metrics::accuracy(y, pred)};
    default: return {"r2", metrics::r2(y, pred)};
  }
}

inline bool integer_like(const Column& c) {
  for (std::size_t r = 0; r < c.cells.size(); ++r) {
    if (!c.missing(r) && c.number(r) != std::floor(c.number(r))) return false;
  }
  return true;
}

}  // namespace audit_detail

/// Trains the built-in GBDT on one grinsztajn holdout split and scores the
/// test partition.
inline ProbeResult probe_test_score(const DatasetTable& table, std::uint64_t seed,
                                    const GbdtConfig& config = GbdtConfig{}) {
  const auto split = grinsztajn_holdout(table.rows(), seed);
  const auto pipe = FittedPipeline::fit(table, split.train, PipelinePolicy::tree, false);
  const auto xt = pipe.transform(table, split.train);
  const auto xv = pipe.transform(table, split.val);
  const auto xs = pipe.transform(table, split.test);
  const auto yt = pipe.target(table, split.train);
  const auto yv = pipe.target(table, split.val);
  const auto ys = pipe.target(table, split.test);
  try {
    const auto model = gbdt_fit(xt.numeric, yt, &xv.numeric, yv, table.task_kind(), table.n_classes(), config,
                                derive_seed(seed, "audit-probe"));
    return audit_detail::probe_score(table, ys, model.predict(xs.numeric));
  } catch (const Error& e) {
    throw DataError(std::string("audit probe failed: ") + e.what());
  }
}

/// Flags data on which the default probe is close to perfect.
inline std::vector<AuditFinding> near_perfect_probe(const DatasetTable& table, std::uint64_t seed,
                                                    const GbdtConfig& config = GbdtConfig{},
                                                    AuditThresholds th = {}) {
  const auto probe = probe_test_score(table, seed, config);
  std::vector<AuditFinding> out;
  if (probe.score >= th.warning) {
    out.push_back({"near_perfect", probe.score >= th.error ? Severity::error : Severity::warning, {},
                   {{"metric", probe.metric}, {"score", probe.score}, {"seed", seed}}});
  }
  return out;
}

/// Per input feature: a depth-3 single-feature tree scored in-sample (AUC
/// for binary, accuracy for multiclass), or |Pearson| for regression.
inline std::vector<AuditFinding> single_feature_scan(const DatasetTable& table, AuditThresholds th = {}) {
  std::vector<AuditFinding> out;
  const auto y = table.target_values();
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    if (!std::isnan(y[r])) rows.push_back(r);
  }
  std::vector<double> yr;
  for (auto r : rows) yr.push_back(y[r]);
  GbdtConfig tree;
  tree.n_estimators = 1;
  tree.max_depth = 3;
  tree.learning_rate = 1.0;
  tree.min_child_weight = 1e-6;
  tree.reg_lambda = 1e-6;
  for (const auto& name : table.input_names()) {
    const Column& c = table.column(name);
    double score = 0.0;
    std::string metric;
    if (table.task_kind() == TaskKind::regression && is_numeric_storage(c.spec.kind)) {
      std::vector<double> x;
      for (auto r : rows) x.push_back(c.missing(r) ? std::nan("") : c.number(r));
      score = std::fabs(pearson(x, yr).value_or(0.0));
      metric = "abs_pearson";
    } else {
      const auto pipe = FittedPipeline::fit(table, rows, PipelinePolicy::tree, false, {name});
      const auto x = pipe.transform(table, rows);
      if (x.numeric.cols() == 0) continue;
      const auto model = gbdt_fit(x.numeric, yr, nullptr, {}, table.task_kind(), table.n_classes(), tree, 0);
      const auto pred = model.predict(x.numeric);
      if (table.task_kind() == TaskKind::regression) {
        score = std::sqrt(std::max(0.0, metrics::r2(yr, pred)));
        metric = "correlation_ratio";
      } else {
        const auto p = audit_detail::probe_score(table, yr, pred);
        score = p.score;
        metric = p.metric;
      }
    }
    if (score >= th.error) {
      out.push_back({"single_feature_leak", Severity::error, {name}, {{"metric", metric}, {"score", score}}});
    }
  }
  return out;
}

inline constexpr std::size_t kCompositionMaxFeatures = 40;
inline constexpr std::size_t kCompositionRestricted = 20;

/// Regression only: least squares of the target on every subset of up to
/// `max_subset` numeric inputs (with intercept). Reports minimal subsets
/// reaching R^2 >= the error threshold.
inline std::vector<AuditFinding> linear_composition_scan(const DatasetTable& table, std::size_t max_subset = 3,
                                                         AuditThresholds th = {}) {
  std::vector<AuditFinding> out;
  if (table.task_kind() != TaskKind::regression) return out;
  std::vector<std::size_t> cand;
  for (auto i : table.input_indices()) {
    if (is_numeric_storage(table.column(i).spec.kind)) cand.push_back(i);
  }
  const auto y = table.target_values();
  auto complete = [&](std::size_t r) {
    if (std::isnan(y[r])) return false;
    for (auto i : cand)
      if (table.column(i).missing(r)) return false;
    return true;
  };
  if (cand.size() > kCompositionMaxFeatures) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (auto i : cand) {
      std::vector<double> x;
      for (std::size_t r = 0; r < table.rows(); ++r) x.push_back(table.column(i).missing(r) ? std::nan("") : table.column(i).number(r));
      scored.emplace_back(std::fabs(pearson(x, y).value_or(0.0)), i);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    cand.clear();
    for (std::size_t k = 0; k < kCompositionRestricted; ++k) cand.push_back(scored[k].second);
    std::sort(cand.begin(), cand.end());
  }
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < table.rows(); ++r)
    if (complete(r)) rows.push_back(r);
  const std::size_t d = cand.size();
  if (rows.size() < 3 || d == 0) return out;

  // Centered cross products.
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(d));
  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = rows[static_cast<std::size_t>(i)];
    yv(i) = y[r];
    for (std::size_t j = 0; j < d; ++j) x(i, static_cast<Eigen::Index>(j)) = table.column(cand[j]).number(r);
  }
  x.rowwise() -= x.colwise().mean();
  yv.array() -= yv.mean();
  const Eigen::MatrixXd gram = x.transpose() * x;
  const Eigen::VectorXd xty = x.transpose() * yv;
  const double syy = yv.squaredNorm();
  if (syy <= 0.0) return out;

  std::vector<std::vector<std::size_t>> flagged;
  auto covered = [&](const std::vector<std::size_t>& s) {
    for (const auto& f : flagged) {
      if (std::includes(s.begin(), s.end(), f.begin(), f.end())) return true;
    }
    return false;
  };
  auto r2_of = [&](const std::vector<std::size_t>& s) {
    const auto m = static_cast<Eigen::Index>(s.size());
    Eigen::MatrixXd g(m, m);
    Eigen::VectorXd b(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      b(a) = xty(static_cast<Eigen::Index>(s[static_cast<std::size_t>(a)]));
      for (Eigen::Index c = 0; c < m; ++c)
        g(a, c) = gram(static_cast<Eigen::Index>(s[static_cast<std::size_t>(a)]),
                       static_cast<Eigen::Index>(s[static_cast<std::size_t>(c)]));
    }
    const Eigen::VectorXd beta = g.completeOrthogonalDecomposition().solve(b);
    return std::clamp(b.dot(beta) / syy, 0.0, 1.0);
  };

  std::vector<std::size_t> subset;
  for (std::size_t size = 1; size <= std::min(max_subset, d); ++size) {
    // Enumerate size-combinations of 0..d-1 in lexicographic order.
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    while (true) {
      if (!covered(idx)) {
        const double r2 = r2_of(idx);
        if (r2 >= th.error) {
          flagged.push_back(idx);
          AuditFinding f{"linear_composition", Severity::error, {}, {{"r2", r2}, {"subset_size", size}}};
          for (auto j : idx) f.columns.push_back(table.column(cand[j]).spec.name);
          out.push_back(std::move(f));
        }
      }
      std::size_t pos = size;
      while (pos > 0 && idx[pos - 1] == d - size + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t t = pos; t < size; ++t) idx[t] = idx[t - 1] + 1;
    }
  }
  return out;
}

/// Identifier-like columns, constant columns and input-identical rows
/// shared between the train (train + validation) and test partitions.
inline std::vector<AuditFinding> structural_scan(const DatasetTable& table, const SplitAssignment& split) {
  std::vector<AuditFinding> out;
  const std::size_t n = table.rows();
  const auto inputs = table.input_indices();
  for (std::size_t i = 0; i < table.cols(); ++i) {
    const Column& c = table.column(i);
    if (c.spec.role == FeatureRole::target) continue;
    const std::size_t distinct = c.distinct_count();
    const bool id_candidate = c.spec.kind == FeatureKind::identifier || c.spec.kind == FeatureKind::categorical ||
                              (is_numeric_storage(c.spec.kind) && audit_detail::integer_like(c));
    if (c.spec.role == FeatureRole::input && id_candidate && n > 1 && distinct == n) {
      out.push_back({"id_feature", Severity::warning, {c.spec.name}, {{"distinct", distinct}, {"rows", n}}});
    }
    if (c.spec.role == FeatureRole::input && distinct <= 1) {
      out.push_back({"constant_feature", Severity::warning, {c.spec.name}, {{"distinct", distinct}}});
    }
  }
  auto row_key = [&](std::size_t r) {
    std::string key;
    for (auto i : inputs) {
      const Column& c = table.column(i);
      key += c.missing(r) ? std::string("\x01") : c.key(r);
      key += '\x1f';
    }
    return key;
  };
  std::unordered_set<std::string> seen;
  for (auto r : split.pool()) seen.insert(row_key(r));
  std::size_t dup = 0;
  std::vector<std::size_t> examples;
  for (auto r : split.test) {
    if (seen.contains(row_key(r))) {
      ++dup;
      if (examples.size() < 10) examples.push_back(r);
    }
  }
  if (dup > 0) {
    out.push_back({"duplicate_rows", Severity::error, {}, {{"count", dup}, {"test_rows", examples}}});
  }
  return out;
}

struct AuditReport {
  std::vector<AuditFinding> findings;
  std::optional<ProbeResult> probe;

  bool has_errors() const {
    return std::any_of(findings.begin(), findings.end(),
                       [](const AuditFinding& f) { return f.severity == Severity::error; });
  }
};

struct AuditOptions {
  std::uint64_t seed = 0;
  GbdtConfig probe = GbdtConfig{};
  AuditThresholds thresholds;
  std::size_t max_subset = 3;
  TaskMetadata metadata;
};

/// Runs every check. The probe score is kept as an informational statistic
/// even when it raises no finding.
inline AuditReport run_audit(const DatasetTable& table, const AuditOptions& opt = {}) {
  AuditReport report;
  auto append = [&](std::vector<AuditFinding> f) {
    report.findings.insert(report.findings.end(), std::make_move_iterator(f.begin()), std::make_move_iterator(f.end()));
  };
  const auto probe = probe_test_score(table, opt.seed, opt.probe);
  report.probe = probe;
  if (probe.score >= opt.thresholds.warning) {
    report.findings.push_back({"near_perfect", probe.score >= opt.thresholds.error ? Severity::error : Severity::warning,
                               {}, {{"metric", probe.metric}, {"score", probe.score}, {"seed", opt.seed}}});
  }
  append(single_feature_scan(table, opt.thresholds));
  append(linear_composition_scan(table, opt.max_subset, opt.thresholds));
  append(structural_scan(table, grinsztajn_holdout(table.rows(), opt.seed)));
  for (const auto& [kind, col] : {std::pair{"group_column", opt.metadata.group_column},
                                  std::pair{"time_column", opt.metadata.time_column}}) {
    if (col) {
      report.findings.push_back({"unscanned_metadata", Severity::warning, {*col},
                                 {{"metadata", kind}, {"detail", "grouped or temporal leakage is not scanned"}}});
    }
  }
  return report;
}

inline void write_audit_jsonl(std::ostream& out, const AuditReport& report) {
  for (const auto& f : report.findings) out << to_json(f).dump() << '\n';
}

inline void write_audit_text(std::ostream& out, const AuditReport& report) {
  if (report.probe) out << "probe " << report.probe->metric << " = " << format_number(report.probe->score) << '\n';
  if (report.findings.empty()) {
    out << "no findings\n";
    return;
  }
  for (const auto& f : report.findings) {
    out << to_string(f.severity) << "  " << f.check;
    if (!f.columns.empty()) {
      out << "  [";
      for (std::size_t i = 0; i < f.columns.size(); ++i) out << (i ? ", " : "") << f.columns[i];
      out << ']';
    }
    out << "  " << f.evidence.dump() << '\n';
  }
}

}  // namespace tabbench
