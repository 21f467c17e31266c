#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "tabbench/core/dataset.hpp"
#include "tabbench/core/matrix.hpp"
#include "tabbench/metrics.hpp"

namespace tabbench::loss {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// In-place softmax over a row of logits.
inline void softmax(std::span<double> row) {
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : row) v /= sum;
}

/// Mean loss of raw scores: binary logistic (1 column), softmax
/// cross-entropy (c columns) or squared error.
inline double from_raw(TaskKind task, std::span<const double> y, const Matrix& raw) {
  double total = 0.0;
  const std::size_t n = y.size();
  if (task == TaskKind::binary) {
    for (std::size_t r = 0; r < n; ++r) {
      const double p = std::clamp(sigmoid(raw(r, 0)), kProbabilityClip, 1.0 - kProbabilityClip);
      total -= y[r] != 0.0 ? std::log(p) : std::log(1.0 - p);
    }
  } else if (task == TaskKind::multiclass) {
    std::vector<double> row(raw.cols());
    for (std::size_t r = 0; r < n; ++r) {
      const auto src = raw.row(r);
      std::copy(src.begin(), src.end(), row.begin());
      softmax(row);
      total -= std::log(std::clamp(row[static_cast<std::size_t>(y[r])], kProbabilityClip, 1.0));
    }
  } else {
    for (std::size_t r = 0; r < n; ++r) total += (raw(r, 0) - y[r]) * (raw(r, 0) - y[r]);
  }
  return total / static_cast<double>(n);
}

/// Raw scores to a prediction matrix: (1-p, p) for binary, softmax rows for
/// multiclass, identity for regression.
inline PredictionMatrix to_predictions(TaskKind task, const Matrix& raw) {
  if (task == TaskKind::regression) return raw;
  if (task == TaskKind::binary) {
    PredictionMatrix out(raw.rows(), 2);
    for (std::size_t r = 0; r < raw.rows(); ++r) {
      const double p = sigmoid(raw(r, 0));
      out(r, 0) = 1.0 - p;
      out(r, 1) = p;
    }
    return out;
  }
  PredictionMatrix out = raw;
  for (std::size_t r = 0; r < out.rows(); ++r) softmax(out.row(r));
  return out;
}

}  // namespace tabbench::loss
