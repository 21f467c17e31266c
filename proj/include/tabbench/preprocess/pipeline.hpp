#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tabbench/core/dataset.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/learners/gbdt.hpp"
#include "tabbench/learners/types.hpp"
#include "tabbench/preprocess/encoders.hpp"

namespace tabbench {

/// How a learner wants its features.
///  - tree: mean-imputed raw numbers; categoricals one-hot up to
///    kOneHotMaxCardinality levels, ordinal codes (as numbers) above.
///  - network: quantile-normalized numbers; categoricals as ordinal codes
///    for embedding tables.
enum class PipelinePolicy { tree, network };

inline constexpr std::size_t kOneHotMaxCardinality = 16;

inline std::vector<double> numeric_values(const Column& c, std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(c.missing(r) ? std::nan("") : c.number(r));
  return out;
}

/// Preprocessing fitted on training rows only. Immutable after fit.
class FittedPipeline {
 public:
  struct OneHot {
    CategoricalEncoder encoder;
  };
  struct Ordinal {
    CategoricalEncoder encoder;
    bool as_embedding = false;
  };
  using Step = std::variant<MeanImputer, QuantileNormalizer, OneHot, Ordinal>;

  struct Source {
    std::string name;
    FeatureKind kind;
    Step step;
  };

  FittedPipeline() = default;

  /// Fits on `train_rows` of `table`. When `inputs` is non-empty only those
  /// columns are used (in table order).
  static FittedPipeline fit(const DatasetTable& table, std::span<const std::size_t> train_rows, PipelinePolicy policy,
                            bool standardize_target, const std::vector<std::string>& inputs = {}) {
    FittedPipeline p;
    p.policy_ = policy;
    for (auto i : table.input_indices()) {
      const Column& c = table.column(i);
      if (!inputs.empty() && std::find(inputs.begin(), inputs.end(), c.spec.name) == inputs.end()) continue;
      Source s{c.spec.name, c.spec.kind, MeanImputer{}};
      if (is_numeric_storage(c.spec.kind)) {
        const auto v = numeric_values(c, train_rows);
        if (policy == PipelinePolicy::network) s.step = QuantileNormalizer::fit(v, c.spec.name);
        else s.step = MeanImputer::fit(v, c.spec.name);
      } else {
        auto enc = CategoricalEncoder::fit(c, train_rows);
        if (policy == PipelinePolicy::network) s.step = Ordinal{std::move(enc), true};
        else if (enc.size() <= kOneHotMaxCardinality) s.step = OneHot{std::move(enc)};
        else s.step = Ordinal{std::move(enc), false};
      }
      p.sources_.push_back(std::move(s));
    }
    if (standardize_target && table.task_kind() == TaskKind::regression) {
      const auto y = table.target_values();
      std::vector<double> yt;
      yt.reserve(train_rows.size());
      for (auto r : train_rows) yt.push_back(y[r]);
      p.target_ = TargetScaler::fit(yt);
    }
    return p;
  }

  const std::vector<Source>& sources() const noexcept { return sources_; }
  PipelinePolicy policy() const noexcept { return policy_; }
  const std::optional<TargetScaler>& target_scaler() const noexcept { return target_; }

  ModelInputs transform(const DatasetTable& table, std::span<const std::size_t> rows) const {
    check_schema(table);
    ModelInputs out;
    std::vector<std::vector<double>> numeric_cols;
    std::vector<std::vector<int>> code_cols;
    for (const auto& s : sources_) {
      const Column& c = table.column(s.name);
      std::visit(
          [&](const auto& step) {
            using T = std::decay_t<decltype(step)>;
            if constexpr (std::is_same_v<T, MeanImputer> || std::is_same_v<T, QuantileNormalizer>) {
              auto v = numeric_values(c, rows);
              for (double& x : v) x = step(x);
              numeric_cols.push_back(std::move(v));
              out.numeric_names.push_back(s.name);
            } else if constexpr (std::is_same_v<T, OneHot>) {
              const auto block = step.encoder.encode_one_hot(c, rows);
              const std::size_t k = step.encoder.size();
              for (std::size_t j = 0; j < k; ++j) {
                std::vector<double> col(rows.size());
                for (std::size_t i = 0; i < rows.size(); ++i) col[i] = block[i * k + j];
                numeric_cols.push_back(std::move(col));
                out.numeric_names.push_back(s.name + "=" + step.encoder.vocabulary()[j]);
              }
            } else {
              auto codes = step.encoder.encode_ordinal(c, rows);
              if (step.as_embedding) {
                code_cols.push_back(std::move(codes));
                out.cardinalities.push_back(step.encoder.size() + 1);
                out.categorical_names.push_back(s.name);
              } else {
                numeric_cols.push_back(std::vector<double>(codes.begin(), codes.end()));
                out.numeric_names.push_back(s.name);
              }
            }
          },
          s.step);
    }
    out.numeric = Matrix(rows.size(), numeric_cols.size());
    for (std::size_t j = 0; j < numeric_cols.size(); ++j)
      for (std::size_t i = 0; i < rows.size(); ++i) out.numeric(i, j) = numeric_cols[j][i];
    out.n_cat = code_cols.size();
    out.codes.resize(rows.size() * out.n_cat);
    for (std::size_t j = 0; j < out.n_cat; ++j)
      for (std::size_t i = 0; i < rows.size(); ++i) out.codes[i * out.n_cat + j] = code_cols[j][i];
    return out;
  }

  /// Target of `rows` as the learner sees it (standardized when a scaler
  /// is attached).
  std::vector<double> target(const DatasetTable& table, std::span<const std::size_t> rows) const {
    const auto y = table.target_values();
    std::vector<double> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(target_ ? target_->forward(y[r]) : y[r]);
    return out;
  }

  /// Restores regression predictions to original target units.
  PredictionMatrix inverse_predictions(PredictionMatrix pred) const {
    if (!target_) return pred;
    for (double& v : pred.data()) v = target_->inverse(v);
    return pred;
  }

  /// Source column of every numeric output column of transform().
  std::vector<std::size_t> numeric_sources() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < sources_.size(); ++i) {
      const auto& step = sources_[i].step;
      if (const auto* oh = std::get_if<OneHot>(&step)) {
        out.insert(out.end(), oh->encoder.size(), i);
      } else if (const auto* ord = std::get_if<Ordinal>(&step); ord && ord->as_embedding) {
        continue;
      } else {
        out.push_back(i);
      }
    }
    return out;
  }

 private:
  void check_schema(const DatasetTable& table) const {
    std::vector<std::string> problems;
    for (const auto& s : sources_) {
      const auto i = table.find(s.name);
      if (!i) problems.push_back(s.name + " (missing)");
      else if (table.column(*i).spec.kind != s.kind) problems.push_back(s.name + " (kind changed)");
    }
    if (!problems.empty()) {
      std::string list;
      for (const auto& p : problems) list += (list.empty() ? "" : ", ") + p;
      throw ContractError("input schema differs from the fitted pipeline: " + list);
    }
  }

  PipelinePolicy policy_ = PipelinePolicy::tree;
  std::vector<Source> sources_;
  std::optional<TargetScaler> target_;
};

/// Probe configuration for importance selection: the reference library's
/// out-of-the-box settings (100 rounds, rate 0.1, 31 leaves).
inline GbdtConfig importance_probe_config() {
  GbdtConfig c;
  c.n_estimators = 100;
  c.patience = 100;
  c.learning_rate = 0.1;
  c.max_depth = -1;
  c.max_leaves = 31;
  c.min_child_weight = 1e-3;
  c.min_data_in_leaf = 20;
  c.reg_lambda = 0.0;
  return c;
}

struct FeatureSelection {
  std::vector<std::string> selected;  // table order
  std::vector<double> gain;           // per input column, table order
  std::optional<std::string> warning;
};

/// Ranks input columns by the probe's total split gain (one-hot gains are
/// summed back to their source column) and keeps the top k, ties broken by
/// column order.
inline FeatureSelection importance_feature_selection(const DatasetTable& table, std::span<const std::size_t> train_rows,
                                                     std::size_t k, std::uint64_t seed,
                                                     const GbdtConfig& probe = importance_probe_config()) {
  if (k < 1) throw ContractError("select_features: k must be >= 1");
  const auto pipe = FittedPipeline::fit(table, train_rows, PipelinePolicy::tree, false);
  FeatureSelection out;
  const auto names = table.input_names();
  if (k >= names.size()) {
    out.selected = names;
    out.gain.assign(names.size(), 0.0);
    if (k > names.size()) {
      out.warning = "select_features: k = " + std::to_string(k) + " exceeds the " + std::to_string(names.size()) +
                    " input features; keeping all";
    }
    return out;
  }
  const auto x = pipe.transform(table, train_rows);
  const auto y = pipe.target(table, train_rows);
  const auto model = gbdt_fit(x.numeric, y, nullptr, {}, table.task_kind(), table.n_classes(), probe, seed);
  const auto sources = pipe.numeric_sources();
  out.gain.assign(names.size(), 0.0);
  for (std::size_t j = 0; j < sources.size(); ++j) out.gain[sources[j]] += model.feature_gain()[j];
  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return out.gain[a] > out.gain[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  for (auto i : order) out.selected.push_back(names[i]);
  return out;
}

}  // namespace tabbench
