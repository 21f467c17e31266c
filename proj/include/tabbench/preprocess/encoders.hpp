#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "tabbench/core/dataset.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/preprocess/normal.hpp"

namespace tabbench {

inline constexpr double kQuantileClip = 1e-7;

/// Mean imputation followed by a rank-to-normal map: a value with
/// interpolated midrank r among m training values goes to
/// inverse_normal_cdf((r - 0.5) / m), clipped to [1e-7, 1 - 1e-7].
class QuantileNormalizer {
 public:
  QuantileNormalizer() = default;

  /// Fits on the non-missing entries of `values` (NaN = missing).
  static QuantileNormalizer fit(std::span<const double> values, const std::string& column = "column") {
    std::vector<double> v;
    v.reserve(values.size());
    for (double x : values) {
      if (!std::isnan(x)) v.push_back(x);
    }
    if (v.empty()) throw FitError("quantile transform: column '" + column + "' has no training values");
    std::sort(v.begin(), v.end());
    QuantileNormalizer q;
    q.count_ = v.size();
    q.mean_ = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    for (std::size_t i = 0; i < v.size();) {
      std::size_t j = i;
      while (j < v.size() && v[j] == v[i]) ++j;
      q.values_.push_back(v[i]);
      q.ranks_.push_back(0.5 * static_cast<double>(i + 1 + j));  // average of 1-based ranks i+1..j
      i = j;
    }
    return q;
  }

  double mean() const noexcept { return mean_; }
  std::size_t count() const noexcept { return count_; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Interpolated midrank; 0.5 below the minimum and m + 0.5 above the
  /// maximum (both land on a clip bound).
  double rank(double x) const {
    if (std::isnan(x)) x = mean_;
    const auto it = std::lower_bound(values_.begin(), values_.end(), x);
    if (it == values_.end()) return static_cast<double>(count_) + 0.5;
    const auto k = static_cast<std::size_t>(it - values_.begin());
    if (*it == x) return ranks_[k];
    if (k == 0) return 0.5;
    const double t = (x - values_[k - 1]) / (values_[k] - values_[k - 1]);
    return ranks_[k - 1] + t * (ranks_[k] - ranks_[k - 1]);
  }

  double operator()(double x) const {
    const double p = (rank(x) - 0.5) / static_cast<double>(count_);
    return inverse_normal_cdf(std::clamp(p, kQuantileClip, 1.0 - kQuantileClip));
  }

  nlohmann::json to_json() const { return {{"mean", mean_}, {"count", count_}, {"values", values_}, {"ranks", ranks_}}; }

  friend bool operator==(const QuantileNormalizer&, const QuantileNormalizer&) = default;

 private:
  double mean_ = 0.0;
  std::size_t count_ = 0;
  std::vector<double> values_;
  std::vector<double> ranks_;
};

/// Training-mean imputation without rescaling.
class MeanImputer {
 public:
  static MeanImputer fit(std::span<const double> values, const std::string& column = "column") {
    double sum = 0.0;
    std::size_t n = 0;
    for (double x : values) {
      if (!std::isnan(x)) {
        sum += x;
        ++n;
      }
    }
    if (n == 0) throw FitError("mean imputation: column '" + column + "' has no training values");
    MeanImputer m;
    m.mean_ = sum / static_cast<double>(n);
    return m;
  }
  double mean() const noexcept { return mean_; }
  double operator()(double x) const { return std::isnan(x) ? mean_ : x; }
  friend bool operator==(const MeanImputer&, const MeanImputer&) = default;

 private:
  double mean_ = 0.0;
};

/// Vocabulary in first-appearance order over the training rows. Ordinal
/// code of an unseen category is c; its one-hot row is all zeros.
class CategoricalEncoder {
 public:
  CategoricalEncoder() = default;

  static CategoricalEncoder fit(const Column& column, std::span<const std::size_t> train_rows) {
    CategoricalEncoder e;
    e.policy_ = column.spec.missing_policy;
    std::unordered_map<std::string, std::size_t> counts;
    for (auto r : train_rows) {
      if (column.missing(r)) {
        if (e.policy_ == CategoricalMissing::mode) continue;
        e.add(std::string(kMissingCategory), counts);
      } else {
        e.add(column.key(r), counts);
      }
    }
    if (e.policy_ == CategoricalMissing::mode && !e.vocabulary_.empty()) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < e.vocabulary_.size(); ++i) {
        if (counts[e.vocabulary_[i]] > counts[e.vocabulary_[best]]) best = i;
      }
      e.mode_ = static_cast<int>(best);
    }
    return e;
  }

  std::size_t size() const noexcept { return vocabulary_.size(); }
  const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }

  int code(const Column& column, std::size_t row) const {
    if (column.missing(row)) {
      if (policy_ == CategoricalMissing::mode) return mode_ >= 0 ? mode_ : static_cast<int>(size());
      return lookup(std::string(kMissingCategory));
    }
    return lookup(column.key(row));
  }

  std::vector<int> encode_ordinal(const Column& column, std::span<const std::size_t> rows) const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(code(column, r));
    return out;
  }

  /// rows x c indicator block, row-major.
  std::vector<double> encode_one_hot(const Column& column, std::span<const std::size_t> rows) const {
    std::vector<double> out(rows.size() * size(), 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto c = static_cast<std::size_t>(code(column, rows[i]));
      if (c < size()) out[i * size() + c] = 1.0;
    }
    return out;
  }

  nlohmann::json to_json() const { return {{"vocabulary", vocabulary_}, {"mode", mode_}}; }

  friend bool operator==(const CategoricalEncoder&, const CategoricalEncoder&) = default;

 private:
  void add(const std::string& key, std::unordered_map<std::string, std::size_t>& counts) {
    if (index_.emplace(key, vocabulary_.size()).second) vocabulary_.push_back(key);
    ++counts[key];
  }

  int lookup(const std::string& key) const {
    const auto it = index_.find(key);
    return it == index_.end() ? static_cast<int>(size()) : static_cast<int>(it->second);
  }

  std::vector<std::string> vocabulary_;
  std::unordered_map<std::string, std::size_t> index_;
  CategoricalMissing policy_ = CategoricalMissing::own_category;
  int mode_ = -1;
};

/// y -> (y - mean) / std with population std of the training target.
class TargetScaler {
 public:
  static TargetScaler fit(std::span<const double> y) {
    if (y.empty()) throw FitError("target standardization: empty training target");
    const double n = static_cast<double>(y.size());
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : y) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / n);
    if (!(sd > 0.0) || !std::isfinite(sd)) throw FitError("target standardization: training target has zero variance");
    TargetScaler s;
    s.mean_ = mean;
    s.std_ = sd;
    return s;
  }

  double mean() const noexcept { return mean_; }
  double std() const noexcept { return std_; }
  double forward(double y) const { return (y - mean_) / std_; }
  double inverse(double z) const { return z * std_ + mean_; }

  std::vector<double> forward(std::span<const double> y) const {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = forward(y[i]);
    return out;
  }

  friend bool operator==(const TargetScaler&, const TargetScaler&) = default;

 private:
  double mean_ = 0.0;
  double std_ = 1.0;
};

}  // namespace tabbench
