#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tabbench/core/csv.hpp"
#include "tabbench/core/dataset.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/preprocess/normal.hpp"

namespace tabbench {

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;
  double w_minus = 0.0;
  std::size_t n = 0;  // nonzero differences
  bool exact = true;
  bool degenerate = false;  // no nonzero differences
};

inline constexpr std::size_t kWilcoxonExactMax = 25;

/// Average ranks (1-based) of |values|.
inline std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = r;
    i = j;
  }
  return ranks;
}

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped. Exact null distribution for n <= 25 (counting sign
/// assignments over doubled ranks), otherwise a normal approximation with
/// tie correction and continuity correction.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ContractError("wilcoxon: samples must be non-empty and paired");
  std::vector<double> d, abs_d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    if (diff != 0.0) {
      d.push_back(diff);
      abs_d.push_back(std::fabs(diff));
    }
  }
  WilcoxonResult r;
  r.n = d.size();
  if (d.empty()) {
    r.degenerate = true;
    return r;
  }
  const auto ranks = average_ranks(abs_d);
  for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? r.w_plus : r.w_minus) += ranks[i];
  const double w = std::min(r.w_plus, r.w_minus);
  const double n = static_cast<double>(r.n);

  if (r.n <= kWilcoxonExactMax) {
    // Doubled ranks are integers even with ties.
    std::vector<std::size_t> doubled(r.n);
    std::size_t total = 0;
    for (std::size_t i = 0; i < r.n; ++i) {
      doubled[i] = static_cast<std::size_t>(std::lround(2.0 * ranks[i]));
      total += doubled[i];
    }
    std::vector<double> counts(total + 1, 0.0);
    counts[0] = 1.0;
    std::size_t reach = 0;
    for (auto v : doubled) {
      reach += v;
      for (std::size_t s = reach; s >= v; --s) {
        counts[s] += counts[s - v];
        if (s == v) break;
      }
    }
    const auto w2 = static_cast<std::size_t>(std::lround(2.0 * w));
    double tail = 0.0;
    for (std::size_t s = 0; s <= w2; ++s) tail += counts[s];
    r.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(r.n)));
    r.exact = true;
    return r;
  }

  r.exact = false;
  const double mean = n * (n + 1.0) / 4.0;
  double tie_term = 0.0;
  std::map<double, std::size_t> tie_sizes;
  for (double x : abs_d) ++tie_sizes[x];
  for (const auto& [_, t] : tie_sizes) {
    const double tt = static_cast<double>(t);
    tie_term += tt * tt * tt - tt;
  }
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) {
    r.p_value = 1.0;
    return r;
  }
  const double z = (std::fabs(w - mean) - 0.5) / std::sqrt(var);
  r.p_value = std::min(1.0, 2.0 * (1.0 - normal_cdf(std::max(z, 0.0))));
  return r;
}

namespace stats_detail {
inline void check_p(std::span<const double> p) {
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("p-values must lie in [0, 1]");
  }
}
}  // namespace stats_detail

/// Holm step-down: reject sorted p_(i) while p_(i) <= alpha / (m - i + 1).
/// Flags are returned in input order.
inline std::vector<bool> holm_bonferroni(std::span<const double> p, double alpha = 0.05) {
  stats_detail::check_p(p);
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
  std::vector<bool> reject(m, false);
  for (std::size_t i = 0; i < m; ++i) {
    if (p[order[i]] > alpha / static_cast<double>(m - i)) break;
    reject[order[i]] = true;
  }
  return reject;
}

/// Single-step Bonferroni: reject p <= alpha / m.
inline std::vector<bool> bonferroni(std::span<const double> p, double alpha = 0.05) {
  stats_detail::check_p(p);
  std::vector<bool> reject(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) reject[i] = p[i] <= alpha / static_cast<double>(p.size());
  return reject;
}

struct MetaFeatureVector {
  double log_n_instances = 0.0;
  double size_to_features_ratio = 0.0;
  double log_median_canonical_corr = 0.0;
  std::optional<double> log_min_class_freq;
};

inline const std::vector<std::string>& metafeature_names() {
  static const std::vector<std::string> names{"log_n_instances", "size_to_features_ratio",
                                              "log_median_canonical_corr", "log_min_class_freq"};
  return names;
}

inline std::vector<std::optional<double>> as_vector(const MetaFeatureVector& m) {
  return {m.log_n_instances, m.size_to_features_ratio, m.log_median_canonical_corr, m.log_min_class_freq};
}

/// Correlation ratio sqrt(SS_between / SS_total) of `values` grouped by
/// `groups`; 0 when `values` is constant.
inline double correlation_ratio(std::span<const double> values, std::span<const std::size_t> groups) {
  const double n = static_cast<double>(values.size());
  if (values.empty()) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  std::map<std::size_t, std::pair<double, double>> g;  // sum, count
  double ss_total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& [s, c] = g[groups[i]];
    s += values[i];
    c += 1.0;
    ss_total += (values[i] - mean) * (values[i] - mean);
  }
  if (ss_total <= 0.0) return 0.0;
  double ss_between = 0.0;
  for (const auto& [_, sc] : g) {
    const double gm = sc.first / sc.second;
    ss_between += sc.second * (gm - mean) * (gm - mean);
  }
  return std::sqrt(std::clamp(ss_between / ss_total, 0.0, 1.0));
}

inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isfinite(x[i]) && std::isfinite(y[i])) pts.emplace_back(x[i], y[i]);
  }
  if (pts.size() < 2) return std::nullopt;
  const double n = static_cast<double>(pts.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [a, b] : pts) {
    mx += a;
    my += b;
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (const auto& [a, b] : pts) {
    sxy += (a - mx) * (b - my);
    sxx += (a - mx) * (a - mx);
    syy += (b - my) * (b - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Dataset statistics over the raw table (natural logs). Canonical
/// correlation of a numeric feature with a class target is the correlation
/// ratio; with a numeric target it is |Pearson|. Categorical features are
/// grouped by category against a numeric target, and coded by sorted
/// category order against a class target.
inline MetaFeatureVector compute_metafeatures(const DatasetTable& table) {
  const auto inputs = table.input_indices();
  if (inputs.empty()) throw DataError("meta-features: table has no input features");
  const std::size_t n = table.rows();
  MetaFeatureVector m;
  m.log_n_instances = std::log(static_cast<double>(n));
  m.size_to_features_ratio = static_cast<double>(n) / static_cast<double>(inputs.size());

  const bool cls = is_classification(table.task_kind());
  const auto y = table.target_values();
  std::vector<double> corr;
  for (auto idx : inputs) {
    const Column& c = table.column(idx);
    std::vector<double> xv, yv;
    std::vector<std::size_t> xg;
    std::map<std::string, std::size_t> codes;
    if (!is_numeric_storage(c.spec.kind)) {
      for (std::size_t r = 0; r < n; ++r) {
        if (!c.missing(r)) codes.emplace(c.key(r), 0);
      }
      std::size_t next = 0;
      for (auto& [_, code] : codes) code = next++;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (c.missing(r) || std::isnan(y[r])) continue;
      yv.push_back(y[r]);
      if (is_numeric_storage(c.spec.kind)) {
        xv.push_back(c.number(r));
      } else {
        const std::size_t code = codes.at(c.key(r));
        xv.push_back(static_cast<double>(code));
        xg.push_back(code);
      }
    }
    double rho = 0.0;
    if (cls) {
      std::vector<std::size_t> yg(yv.begin(), yv.end());
      rho = correlation_ratio(xv, yg);
    } else if (!xg.empty()) {
      rho = correlation_ratio(yv, xg);
    } else {
      rho = std::fabs(pearson(xv, yv).value_or(0.0));
    }
    corr.push_back(rho);
  }
  std::sort(corr.begin(), corr.end());
  const std::size_t k = corr.size();
  const double median = k % 2 == 1 ? corr[k / 2] : 0.5 * (corr[k / 2 - 1] + corr[k / 2]);
  m.log_median_canonical_corr = std::log(std::max(median, 1e-10));

  if (cls) {
    std::map<std::size_t, std::size_t> counts;
    std::size_t total = 0;
    for (double v : y) {
      if (std::isnan(v)) continue;
      ++counts[static_cast<std::size_t>(v)];
      ++total;
    }
    std::size_t least = total;
    for (const auto& [_, c] : counts) least = std::min(least, c);
    m.log_min_class_freq = std::log(static_cast<double>(least) / static_cast<double>(total));
  }
  return m;
}

/// Pearson correlation of each meta-feature with the per-dataset gaps;
/// nullopt when undefined (fewer than 3 finite pairs or zero variance).
inline std::vector<std::optional<double>> metafeature_correlation(std::span<const MetaFeatureVector> features,
                                                                  std::span<const double> gaps) {
  if (features.size() != gaps.size()) throw ContractError("meta-feature correlation: length mismatch");
  if (features.size() < 3) throw ContractError("meta-feature correlation: needs at least 3 datasets");
  std::vector<std::optional<double>> out;
  for (std::size_t f = 0; f < metafeature_names().size(); ++f) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < features.size(); ++i) {
      const auto v = as_vector(features[i])[f];
      x.push_back(v ? *v : std::nan(""));
      y.push_back(gaps[i]);
    }
    std::size_t finite = 0;
    for (std::size_t i = 0; i < x.size(); ++i) finite += std::isfinite(x[i]) && std::isfinite(y[i]);
    out.push_back(finite >= 3 ? pearson(x, y) : std::nullopt);
  }
  return out;
}

/// One row per meta-feature, one column per condition; undefined cells are
/// written as "undefined".
inline void write_metafeature_correlation_csv(std::ostream& out, const std::vector<std::string>& conditions,
                                              const std::vector<std::vector<std::optional<double>>>& columns) {
  std::vector<std::string> header{"meta_feature"};
  header.insert(header.end(), conditions.begin(), conditions.end());
  csv::write_record(out, header);
  for (std::size_t f = 0; f < metafeature_names().size(); ++f) {
    std::vector<std::string> row{metafeature_names()[f]};
    for (const auto& col : columns) row.push_back(col[f] ? format_number(*col[f]) : "undefined");
    csv::write_record(out, row);
  }
}

}  // namespace tabbench
