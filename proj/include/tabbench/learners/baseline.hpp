#pragma once

#include <span>
#include <vector>

#include "tabbench/core/error.hpp"
#include "tabbench/learners/types.hpp"

namespace tabbench {

/// Class priors (classification) or the training mean (regression) for
/// every row.
class ConstantModel {
 public:
  static ConstantModel fit(std::span<const double> y, TaskKind task, std::size_t n_classes) {
    if (y.empty()) throw FitError("constant baseline: empty training target");
    ConstantModel m;
    if (is_classification(task)) {
      m.row_.assign(n_classes, 0.0);
      for (double v : y) m.row_.at(static_cast<std::size_t>(v)) += 1.0;
      for (double& p : m.row_) p /= static_cast<double>(y.size());
    } else {
      double s = 0.0;
      for (double v : y) s += v;
      m.row_ = {s / static_cast<double>(y.size())};
    }
    return m;
  }

  PredictionMatrix predict(std::size_t rows) const {
    PredictionMatrix out(rows, row_.size());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < row_.size(); ++c) out(r, c) = row_[c];
    return out;
  }

  const std::vector<double>& row() const noexcept { return row_; }

 private:
  std::vector<double> row_;
};

}  // namespace tabbench
