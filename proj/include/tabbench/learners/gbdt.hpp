#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/core/matrix.hpp"
#include "tabbench/core/rng.hpp"
#include "tabbench/learners/losses.hpp"
#include "tabbench/learners/types.hpp"

namespace tabbench {

/// Second-order boosting hyperparameters. Defaults follow the XGBoost
/// column of the search-space tables; `max_leaves` and `min_data_in_leaf`
/// carry the LightGBM vocabulary.
struct GbdtConfig {
  std::size_t n_estimators = 4000;
  std::size_t patience = 200;
  double learning_rate = 0.3;
  int max_depth = 6;  // -1: unlimited (then max_leaves should bound the tree)
  double colsample_bytree = 1.0;
  double subsample = 1.0;
  double min_child_weight = 1.0;
  double reg_alpha = 0.0;
  double reg_lambda = 1.0;
  double gamma = 0.0;
  std::size_t max_leaves = 0;  // 0: unlimited
  std::size_t min_data_in_leaf = 1;

  void validate() const {
    auto fail = [](const std::string& what) { throw ContractError("gbdt config: " + what); };
    if (n_estimators < 1) fail("n_estimators must be >= 1");
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (max_depth == 0 || max_depth < -1) fail("max_depth must be >= 1 or -1");
    if (!(colsample_bytree > 0.0 && colsample_bytree <= 1.0)) fail("colsample_bytree must be in (0, 1]");
    if (!(subsample > 0.0 && subsample <= 1.0)) fail("subsample must be in (0, 1]");
    if (!(min_child_weight >= 0.0)) fail("min_child_weight must be >= 0");
    if (!(reg_alpha >= 0.0) || !(reg_lambda >= 0.0) || !(gamma >= 0.0)) {
      fail("reg_alpha, reg_lambda and gamma must be >= 0");
    }
    if (max_depth == -1 && max_leaves == 0) fail("unlimited depth needs num_leaves");
    if (max_leaves == 1) fail("num_leaves must be >= 2");
  }

  /// Reads XGBoost names and their LightGBM aliases. Unknown keys are a
  /// contract error.
  static GbdtConfig from_json(const nlohmann::json& j) {
    GbdtConfig c;
    for (const auto& [key, v] : j.items()) {
      if (key == "n_estimators" || key == "iterations") {
        c.n_estimators = v.get<std::size_t>();
      } else if (key == "patience") {
        c.patience = v.get<std::size_t>();
      } else if (key == "learning_rate") {
        c.learning_rate = v.get<double>();
      } else if (key == "max_depth") {
        c.max_depth = static_cast<int>(std::lround(v.get<double>()));
      } else if (key == "colsample_bytree" || key == "feature_fraction") {
        c.colsample_bytree = v.get<double>();
      } else if (key == "subsample" || key == "bagging_fraction") {
        c.subsample = v.get<double>();
      } else if (key == "min_child_weight" || key == "min_sum_hessian_in_leaf") {
        c.min_child_weight = v.get<double>();
      } else if (key == "reg_alpha" || key == "lambda_l1") {
        c.reg_alpha = v.get<double>();
      } else if (key == "reg_lambda" || key == "lambda_l2") {
        c.reg_lambda = v.get<double>();
      } else if (key == "gamma") {
        c.gamma = v.get<double>();
      } else if (key == "num_leaves") {
        c.max_leaves = static_cast<std::size_t>(std::lround(v.get<double>()));
      } else if (key == "min_data_in_leaf") {
        c.min_data_in_leaf = static_cast<std::size_t>(std::lround(v.get<double>()));
      } else {
        throw ContractError("gbdt config: unknown hyperparameter '" + key + "'");
      }
    }
    // A depth-limited tree cannot hold more than 2^depth leaves.
    if (c.max_depth >= 1 && c.max_leaves > 0 && c.max_depth < 31) {
      c.max_leaves = std::min<std::size_t>(c.max_leaves, std::size_t{1} << c.max_depth);
    }
    c.validate();
    return c;
  }
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // rows with x < threshold go left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output, already scaled by the learning rate
  double gain = 0.0;
};

class RegressionTree {
 public:
  double predict(std::span<const double> row) const {
    int i = 0;
    while (nodes_[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes_[static_cast<std::size_t>(i)];
      i = row[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
    }
    return nodes_[static_cast<std::size_t>(i)].value;
  }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::vector<TreeNode>& nodes() noexcept { return nodes_; }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.feature < 0; }));
  }

 private:
  std::vector<TreeNode> nodes_;
};

namespace gbdt_detail {

inline double soft_threshold(double g, double alpha) {
  if (g > alpha) return g - alpha;
  if (g < -alpha) return g + alpha;
  return 0.0;
}

/// Structure score of a leaf with gradient sum G and Hessian sum H.
inline double leaf_score(double g, double h, double alpha, double lambda) {
  const double t = soft_threshold(g, alpha);
  return t * t / (h + lambda);
}

inline double leaf_weight(double g, double h, double alpha, double lambda) {
  return -soft_threshold(g, alpha) / (h + lambda);
}

/// Split gain: half the structure-score improvement minus gamma.
inline double split_gain(double gl, double hl, double gr, double hr, const GbdtConfig& c) {
  return 0.5 * (leaf_score(gl, hl, c.reg_alpha, c.reg_lambda) +
                leaf_score(gr, hr, c.reg_alpha, c.reg_lambda) -
                leaf_score(gl + gr, hl + hr, c.reg_alpha, c.reg_lambda)) -
         c.gamma;
}

/// Threshold strictly between two adjacent distinct values.
inline double midpoint(double a, double b) {
  const double t = a + (b - a) / 2.0;
  return a < t ? t : b;
}

struct Candidate {
  double gain = -std::numeric_limits<double>::infinity();
  int feature = -1;
  double threshold = 0.0;
};

/// Exact greedy tree growth over presorted row orders. Every per-feature
/// order array holds the same row set inside a node's [begin, end) range.
class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const double> grad, std::span<const double> hess,
              std::span<const std::size_t> rows, std::span<const std::size_t> features,
              const std::vector<std::vector<std::uint32_t>>& global_order, const GbdtConfig& config)
      : x_(x), grad_(grad), hess_(hess), features_(features), config_(config) {
    std::vector<std::uint8_t> in_sample(x.rows(), 0);
    for (auto r : rows) in_sample[r] = 1;
    order_.resize(features.size());
    for (std::size_t f = 0; f < features.size(); ++f) {
      auto& o = order_[f];
      o.reserve(rows.size());
      for (auto r : global_order[features[f]]) {
        if (in_sample[r]) o.push_back(r);
      }
    }
    go_left_.assign(x.rows(), 0);
    buffer_.resize(rows.size());
  }

  RegressionTree build() {
    RegressionTree tree;
    auto& nodes = tree.nodes();
    const std::size_t m = order_.empty() ? 0 : order_[0].size();
    double g = 0.0, h = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      g += grad_[order_[0][i]];
      h += hess_[order_[0][i]];
    }
    nodes.push_back(make_leaf(g, h));
    std::vector<Range> ranges{{0, m, 0, g, h}};

    using Entry = std::tuple<double, long, std::size_t>;  // gain, -node id, node id
    std::priority_queue<Entry> queue;
    std::vector<Candidate> candidates{find_split(ranges[0])};
    if (candidates[0].feature >= 0) queue.emplace(candidates[0].gain, 0L, 0);

    std::size_t leaves = 1;
    while (!queue.empty()) {
      if (config_.max_leaves > 0 && leaves >= config_.max_leaves) break;
      const auto [gain, neg_id, id] = queue.top();
      queue.pop();
      const Candidate cand = candidates[id];
      const Range range = ranges[id];
      const auto [left_range, right_range] = partition(range, cand);

      const auto left_id = nodes.size();
      nodes.push_back(make_leaf(left_range.g, left_range.h));
      nodes.push_back(make_leaf(right_range.g, right_range.h));
      auto& parent = nodes[id];
      parent.feature = static_cast<int>(features_[static_cast<std::size_t>(cand.feature)]);
      parent.threshold = cand.threshold;
      parent.left = static_cast<int>(left_id);
      parent.right = static_cast<int>(left_id + 1);
      parent.gain = cand.gain;
      parent.value = 0.0;
      ++leaves;

      ranges.push_back(left_range);
      ranges.push_back(right_range);
      for (std::size_t child = left_id; child < left_id + 2; ++child) {
        candidates.push_back(find_split(ranges[child]));
        if (candidates[child].feature >= 0) {
          queue.emplace(candidates[child].gain, -static_cast<long>(child), child);
        }
      }
    }
    return tree;
  }

 private:
  struct Range {
    std::size_t begin, end;
    int depth;
    double g, h;
  };

  TreeNode make_leaf(double g, double h) const {
    TreeNode n;
    n.value = config_.learning_rate * leaf_weight(g, h, config_.reg_alpha, config_.reg_lambda);
    return n;
  }

  Candidate find_split(const Range& range) const {
    Candidate best;
    if (config_.max_depth > 0 && range.depth >= config_.max_depth) return best;
    const std::size_t count = range.end - range.begin;
    if (count < 2 * std::max<std::size_t>(config_.min_data_in_leaf, 1)) return best;
    for (std::size_t f = 0; f < features_.size(); ++f) {
      const auto& o = order_[f];
      const std::size_t col = features_[f];
      double gl = 0.0, hl = 0.0;
      for (std::size_t i = range.begin; i + 1 < range.end; ++i) {
        const auto r = o[i];
        gl += grad_[r];
        hl += hess_[r];
        const double v = x_(r, col);
        const double next = x_(o[i + 1], col);
        if (!(v < next)) continue;
        const std::size_t n_left = i + 1 - range.begin;
        if (n_left < config_.min_data_in_leaf || count - n_left < config_.min_data_in_leaf) continue;
        const double hr = range.h - hl;
        if (hl < config_.min_child_weight || hr < config_.min_child_weight) continue;
        const double gain = split_gain(gl, hl, range.g - gl, hr, config_);
        if (gain > best.gain) {
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.threshold = midpoint(v, next);
        }
      }
    }
    if (!(best.gain > 0.0)) best.feature = -1;
    return best;
  }

  std::pair<Range, Range> partition(const Range& range, const Candidate& cand) {
    const std::size_t col = features_[static_cast<std::size_t>(cand.feature)];
    const auto& split_order = order_[static_cast<std::size_t>(cand.feature)];
    double gl = 0.0, hl = 0.0;
    std::size_t n_left = 0;
    for (std::size_t i = range.begin; i < range.end; ++i) {
      const auto r = split_order[i];
      const bool left = x_(r, col) < cand.threshold;
      go_left_[r] = left;
      if (left) {
        gl += grad_[r];
        hl += hess_[r];
        ++n_left;
      }
    }
    for (auto& o : order_) {
      std::size_t li = range.begin, ri = 0;
      for (std::size_t i = range.begin; i < range.end; ++i) {
        const auto r = o[i];
        if (go_left_[r]) {
          o[li++] = r;
        } else {
          buffer_[ri++] = r;
        }
      }
      std::copy(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(ri),
                o.begin() + static_cast<std::ptrdiff_t>(li));
    }
    const std::size_t mid = range.begin + n_left;
    return {Range{range.begin, mid, range.depth + 1, gl, hl},
            Range{mid, range.end, range.depth + 1, range.g - gl, range.h - hl}};
  }

  const Matrix& x_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  std::span<const std::size_t> features_;
  const GbdtConfig& config_;
  std::vector<std::vector<std::uint32_t>> order_;
  std::vector<std::uint8_t> go_left_;
  std::vector<std::uint32_t> buffer_;
};

}  // namespace gbdt_detail

/// Boosted ensemble: `n_outputs` trees per round (c for multiclass, else 1).
class GbdtModel {
 public:
  TaskKind task() const noexcept { return task_; }
  std::size_t n_classes() const noexcept { return n_classes_; }
  std::size_t n_features() const noexcept { return n_features_; }
  std::size_t n_outputs() const noexcept { return base_score_.size(); }
  std::size_t rounds() const noexcept { return trees_.size() / std::max<std::size_t>(n_outputs(), 1); }
  const std::vector<RegressionTree>& trees() const noexcept { return trees_; }
  const std::vector<double>& base_score() const noexcept { return base_score_; }
  const FitInfo& info() const noexcept { return info_; }
  /// Total split gain per input feature over the kept rounds.
  const std::vector<double>& feature_gain() const noexcept { return feature_gain_; }

  Matrix raw_scores(const Matrix& x) const {
    check_schema(x);
    const std::size_t k = n_outputs();
    Matrix raw(x.rows(), k);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const auto row = x.row(r);
      for (std::size_t j = 0; j < k; ++j) raw(r, j) = base_score_[j];
      for (std::size_t t = 0; t < trees_.size(); ++t) raw(r, t % k) += trees_[t].predict(row);
    }
    return raw;
  }

  PredictionMatrix predict(const Matrix& x) const { return loss::to_predictions(task_, raw_scores(x)); }

 private:
  friend GbdtModel gbdt_fit(const Matrix&, std::span<const double>, const Matrix*, std::span<const double>,
                            TaskKind, std::size_t, const GbdtConfig&, std::uint64_t);

  void check_schema(const Matrix& x) const {
    if (x.cols() != n_features_) {
      throw ContractError("gbdt predict: model expects " + std::to_string(n_features_) +
                          " feature columns, got " + std::to_string(x.cols()));
    }
  }

  TaskKind task_ = TaskKind::regression;
  std::size_t n_classes_ = 1;
  std::size_t n_features_ = 0;
  std::vector<double> base_score_;
  std::vector<RegressionTree> trees_;
  std::vector<double> feature_gain_;
  FitInfo info_;
};

namespace gbdt_detail {

inline void check_finite(const Matrix& x, const char* which) {
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw FitError(std::string("gbdt: non-finite feature value in ") + which);
  }
}

inline std::vector<double> initial_scores(TaskKind task, std::span<const double> y, std::size_t n_classes) {
  const auto n = static_cast<double>(y.size());
  if (task == TaskKind::regression) {
    return {std::accumulate(y.begin(), y.end(), 0.0) / n};
  }
  std::vector<double> counts(n_classes, 0.0);
  for (double v : y) counts[static_cast<std::size_t>(v)] += 1.0;
  if (task == TaskKind::binary) {
    const double p = std::clamp(counts[1] / n, 1e-12, 1.0 - 1e-12);
    return {std::log(p / (1.0 - p))};
  }
  std::vector<double> base(n_classes);
  for (std::size_t k = 0; k < n_classes; ++k) base[k] = std::log(std::max(counts[k] / n, 1e-12));
  return base;
}

/// Per-row gradients and Hessians for output `k`.
inline void gradients(TaskKind task, std::span<const double> y, const Matrix& raw, std::size_t k,
                      std::vector<double>& grad, std::vector<double>& hess) {
  constexpr double kMinHessian = 1e-16;
  const std::size_t n = y.size();
  if (task == TaskKind::regression) {
    for (std::size_t r = 0; r < n; ++r) {
      grad[r] = raw(r, 0) - y[r];
      hess[r] = 1.0;
    }
  } else if (task == TaskKind::binary) {
    for (std::size_t r = 0; r < n; ++r) {
      const double p = loss::sigmoid(raw(r, 0));
      grad[r] = p - y[r];
      hess[r] = std::max(p * (1.0 - p), kMinHessian);
    }
  } else {
    std::vector<double> row(raw.cols());
    for (std::size_t r = 0; r < n; ++r) {
      const auto src = raw.row(r);
      std::copy(src.begin(), src.end(), row.begin());
      loss::softmax(row);
      const double p = row[k];
      grad[r] = p - (static_cast<std::size_t>(y[r]) == k ? 1.0 : 0.0);
      hess[r] = std::max(p * (1.0 - p), kMinHessian);
    }
  }
}

inline std::vector<std::size_t> sample_indices(std::size_t n, double fraction, SplitMix64& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (fraction >= 1.0) return all;
  const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n))));
  for (std::size_t i = 0; i < m; ++i) {  // partial Fisher-Yates
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(all[i], all[j]);
  }
  all.resize(m);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace gbdt_detail

/// Fits a second-order gradient-boosted tree ensemble. Classification
/// targets are class codes 0..n_classes-1. With a validation set, training
/// stops after `patience` rounds without improvement and the model keeps the
/// best round count.
inline GbdtModel gbdt_fit(const Matrix& x_train, std::span<const double> y_train, const Matrix* x_val,
                          std::span<const double> y_val, TaskKind task, std::size_t n_classes,
                          const GbdtConfig& config, std::uint64_t seed) {
  using namespace gbdt_detail;
  config.validate();
  const std::size_t n = x_train.rows(), d = x_train.cols();
  if (n < 2) throw FitError("gbdt: need at least 2 training rows");
  if (y_train.size() != n) throw ContractError("gbdt: target length differs from row count");
  check_finite(x_train, "training data");
  const bool has_val = x_val != nullptr && x_val->rows() > 0;
  if (has_val) {
    if (x_val->cols() != d || y_val.size() != x_val->rows()) throw ContractError("gbdt: validation shape mismatch");
    check_finite(*x_val, "validation data");
  }
  if (is_classification(task)) {
    if (n_classes < 2) throw FitError("gbdt: classification needs at least 2 classes");
    std::vector<std::size_t> counts(n_classes, 0);
    for (double v : y_train) ++counts[metrics::class_of(v, n_classes)];
    for (std::size_t k = 0; k < n_classes; ++k) {
      if (counts[k] == 0) throw FitError("gbdt: class " + std::to_string(k) + " is empty in the training rows");
    }
    if (task == TaskKind::binary && n_classes != 2) throw FitError("gbdt: binary task needs exactly 2 classes");
  } else {
    n_classes = 1;
  }

  GbdtModel model;
  model.task_ = task;
  model.n_classes_ = n_classes;
  model.n_features_ = d;
  model.base_score_ = initial_scores(task, y_train, n_classes);
  model.feature_gain_.assign(d, 0.0);
  const std::size_t k_out = model.base_score_.size();

  std::vector<std::vector<std::uint32_t>> global_order(d);
  for (std::size_t f = 0; f < d; ++f) {
    auto& o = global_order[f];
    o.resize(n);
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(), [&](auto a, auto b) { return x_train(a, f) < x_train(b, f); });
  }

  Matrix raw_train(n, k_out), raw_val(has_val ? x_val->rows() : 0, k_out);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < k_out; ++k) raw_train(r, k) = model.base_score_[k];
  for (std::size_t r = 0; r < raw_val.rows(); ++r)
    for (std::size_t k = 0; k < k_out; ++k) raw_val(r, k) = model.base_score_[k];

  SplitMix64 rng(seed);
  std::vector<double> grad(n), hess(n);
  std::vector<std::vector<double>> round_gain;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_round = 0;
  FitInfo& info = model.info_;

  for (std::size_t round = 1; round <= config.n_estimators; ++round) {
    const auto rows = sample_indices(n, config.subsample, rng);
    const auto features = sample_indices(d, config.colsample_bytree, rng);
    std::vector<double> gain_this_round(d, 0.0);
    std::vector<RegressionTree> round_trees;
    for (std::size_t k = 0; k < k_out; ++k) {
      gradients(task, y_train, raw_train, k, grad, hess);
      TreeBuilder builder(x_train, grad, hess, rows, features, global_order, config);
      round_trees.push_back(builder.build());
    }
    // Apply all outputs of the round together so multiclass gradients see
    // the same scores.
    for (std::size_t k = 0; k < k_out; ++k) {
      const auto& tree = round_trees[k];
      for (std::size_t r = 0; r < n; ++r) raw_train(r, k) += tree.predict(x_train.row(r));
      for (std::size_t r = 0; r < raw_val.rows(); ++r) raw_val(r, k) += tree.predict(x_val->row(r));
      for (const auto& node : tree.nodes()) {
        if (node.feature >= 0) gain_this_round[static_cast<std::size_t>(node.feature)] += node.gain;
      }
      model.trees_.push_back(tree);
    }
    round_gain.push_back(std::move(gain_this_round));

    info.train_loss_history.push_back(loss::from_raw(task, y_train, raw_train));
    if (has_val) {
      const double v = loss::from_raw(task, y_val, raw_val);
      if (!std::isfinite(v)) throw FitError("gbdt: non-finite validation loss at round " + std::to_string(round));
      info.val_loss_history.push_back(v);
      if (v < best_val) {
        best_val = v;
        best_round = round;
      } else if (round - best_round >= config.patience) {
        break;
      }
    } else {
      best_round = round;
    }
  }

  model.trees_.resize(best_round * k_out);
  for (std::size_t r = 0; r < best_round; ++r)
    for (std::size_t f = 0; f < d; ++f) model.feature_gain_[f] += round_gain[r][f];
  info.best_iteration = best_round;
  info.train_loss = info.train_loss_history[best_round - 1];
  info.val_loss = has_val ? best_val : std::nan("");
  return model;
}

}  // namespace tabbench
