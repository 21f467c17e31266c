#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tabbench/core/dataset.hpp"
#include "tabbench/core/matrix.hpp"

namespace tabbench {

/// Training metadata shared by every learner.
struct FitInfo {
  std::size_t best_iteration = 0;  // boosting round or epoch, 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::vector<double> train_loss_history;
  std::vector<double> val_loss_history;
};

/// Output width of a prediction matrix for a task.
inline std::size_t prediction_width(TaskKind task, std::size_t n_classes) {
  return is_classification(task) ? n_classes : 1;
}

}  // namespace tabbench

namespace tabbench {

/// Model-ready features: a dense numeric block plus ordinal codes for
/// columns that a learner embeds. Code `cardinalities[j] - 1` is the
/// reserved unseen-category slot of column j.
struct ModelInputs {
  Matrix numeric;
  std::vector<int> codes;  // rows x n_cat, row-major
  std::size_t n_cat = 0;
  std::vector<std::size_t> cardinalities;
  std::vector<std::string> numeric_names;
  std::vector<std::string> categorical_names;

  std::size_t rows() const noexcept {
    return n_cat > 0 ? codes.size() / n_cat : numeric.rows();
  }

  std::span<const int> code_row(std::size_t r) const { return {codes.data() + r * n_cat, n_cat}; }

  friend bool operator==(const ModelInputs&, const ModelInputs&) = default;
};

}  // namespace tabbench
