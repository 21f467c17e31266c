#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabbench/core/dataset.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/core/rng.hpp"
#include "tabbench/hpo/space.hpp"
#include "tabbench/learners/baseline.hpp"
#include "tabbench/learners/external.hpp"
#include "tabbench/learners/gbdt.hpp"
#include "tabbench/learners/mlp.hpp"
#include "tabbench/preprocess/pipeline.hpp"

namespace tabbench {

/// One fit: training rows, early-stopping rows, and the row sets to predict.
struct FitRequest {
  const DatasetTable* table = nullptr;
  std::span<const std::size_t> train;
  std::span<const std::size_t> val;
  std::vector<std::span<const std::size_t>> predict;
  json config = json::object();
  std::uint64_t seed = 0;
  std::optional<std::size_t> select_k;  // importance-based feature selection
};

struct FitOutcome {
  FitInfo info;
  std::vector<PredictionMatrix> predictions;  // original target units
};

class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::string id() const = 0;
  virtual SearchSpace space() const = 0;
  /// Fixed settings merged under every trial config (serialized with runs).
  virtual json fixed() const { return json::object(); }
  virtual FitOutcome fit_predict(const FitRequest& request) const = 0;
};

namespace learner_detail {

struct Prepared {
  FittedPipeline pipeline;
  ModelInputs train, val;
  std::vector<ModelInputs> predict;
  std::vector<double> y_train, y_val;
};

inline Prepared prepare(const FitRequest& req, PipelinePolicy policy, bool standardize_target) {
  const DatasetTable& t = *req.table;
  std::vector<std::string> inputs;
  if (req.select_k) inputs = importance_feature_selection(t, req.train, *req.select_k, req.seed).selected;
  Prepared p;
  p.pipeline = FittedPipeline::fit(t, req.train, policy, standardize_target, inputs);
  p.train = p.pipeline.transform(t, req.train);
  p.val = p.pipeline.transform(t, req.val);
  for (auto rows : req.predict) p.predict.push_back(p.pipeline.transform(t, rows));
  p.y_train = p.pipeline.target(t, req.train);
  p.y_val = p.pipeline.target(t, req.val);
  return p;
}

inline json merged(const json& base, const json& config) {
  json out = base;
  for (const auto& [k, v] : config.items()) out[k] = v;
  return out;
}

}  // namespace learner_detail

/// Built-in boosted trees. `space` selects the XGBoost-style or leaf-wise
/// vocabulary; `fixed` holds settings outside the search space.
class GbdtLearner : public Learner {
 public:
  GbdtLearner(std::string id, SearchSpace space, json fixed) : id_(std::move(id)), space_(std::move(space)), fixed_(std::move(fixed)) {}

  std::string id() const override { return id_; }
  SearchSpace space() const override { return space_; }
  json fixed() const override { return fixed_; }

  FitOutcome fit_predict(const FitRequest& req) const override {
    const auto config = GbdtConfig::from_json(learner_detail::merged(fixed_, req.config));
    auto p = learner_detail::prepare(req, PipelinePolicy::tree, false);
    const auto model = gbdt_fit(p.train.numeric, p.y_train, &p.val.numeric, p.y_val, req.table->task_kind(),
                                req.table->n_classes(), config, req.seed);
    FitOutcome out{model.info(), {}};
    for (const auto& x : p.predict) out.predictions.push_back(model.predict(x.numeric));
    return out;
  }

 private:
  std::string id_;
  SearchSpace space_;
  json fixed_;
};

/// Built-in MLP on quantile-normalized numbers and embedded categoricals;
/// regression targets are standardized during training.
class MlpLearner : public Learner {
 public:
  explicit MlpLearner(json fixed = json::object()) : fixed_(std::move(fixed)) {}

  std::string id() const override { return "mlp"; }
  SearchSpace space() const override { return spaces::mlp(); }
  json fixed() const override { return fixed_; }

  FitOutcome fit_predict(const FitRequest& req) const override {
    const auto config = MlpConfig::from_json(learner_detail::merged(fixed_, req.config));
    auto p = learner_detail::prepare(req, PipelinePolicy::network, true);
    const auto model = mlp_fit(p.train, p.y_train, &p.val, p.y_val, req.table->task_kind(), req.table->n_classes(),
                               config, req.seed);
    FitOutcome out{model.info(), {}};
    for (const auto& x : p.predict) out.predictions.push_back(p.pipeline.inverse_predictions(model.predict(x)));
    return out;
  }

 private:
  json fixed_;
};

/// Class priors or target mean; nothing to tune.
class ConstantLearner : public Learner {
 public:
  std::string id() const override { return "baseline"; }
  SearchSpace space() const override { return {}; }

  FitOutcome fit_predict(const FitRequest& req) const override {
    const auto y = req.table->target_values();
    std::vector<double> yt;
    for (auto r : req.train) yt.push_back(y[r]);
    const auto model = ConstantModel::fit(yt, req.table->task_kind(), req.table->n_classes());
    FitOutcome out;
    out.info.best_iteration = 1;
    for (auto rows : req.predict) out.predictions.push_back(model.predict(rows.size()));
    return out;
  }
};

/// External learner over the subprocess protocol. Partitions are written as
/// CSV (input columns and target) into a scratch directory per fit.
class ExternalLearner : public Learner {
 public:
  ExternalLearner(std::string id, AdapterSpec spec, SearchSpace space = spaces::lightgbm(), json fixed = json::object())
      : id_(std::move(id)), spec_(std::move(spec)), space_(std::move(space)), fixed_(std::move(fixed)) {}

  std::string id() const override { return id_; }
  SearchSpace space() const override { return space_; }
  json fixed() const override { return fixed_; }

  FitOutcome fit_predict(const FitRequest& req) const override {
    const DatasetTable& t = *req.table;
    std::vector<Column> cols;
    for (const auto& c : t.columns()) {
      if (c.spec.role == FeatureRole::input || c.spec.role == FeatureRole::target) cols.push_back(c);
    }
    const DatasetTable slim(std::move(cols), t.task_kind());
    const auto dir = std::filesystem::temp_directory_path() /
                     ("tabbench-" + std::to_string(::getpid()) + "-" + std::to_string(mix64(req.seed ^ counter()++)));
    std::filesystem::create_directories(dir);
    struct Cleanup {
      std::filesystem::path dir;
      ~Cleanup() {
        std::error_code ec;
        std::filesystem::remove_all(dir, ec);
      }
    } cleanup{dir};
    const std::vector<std::string> markers{""};
    auto write = [&](const std::string& name, std::span<const std::size_t> rows) {
      const auto path = dir / name;
      write_csv(path, slim.select_rows(rows), markers);
      return path;
    };
    const auto train = write("train.csv", req.train);
    const auto val = write("val.csv", req.val);
    std::vector<std::filesystem::path> preds;
    for (std::size_t i = 0; i < req.predict.size(); ++i) preds.push_back(write("predict_" + std::to_string(i) + ".csv", req.predict[i]));
    auto r = external_fit_predict(spec_, train, val, preds, t.task_kind(), t.target().spec.name, t.n_classes(),
                                  learner_detail::merged(fixed_, req.config), req.seed);
    FitOutcome out;
    out.info.best_iteration = r.best_iter;
    out.info.val_loss = r.val_loss;
    out.predictions = std::move(r.predictions);
    return out;
  }

 private:
  static std::atomic<std::uint64_t>& counter() {
    static std::atomic<std::uint64_t> c{0};
    return c;
  }
  std::string id_;
  AdapterSpec spec_;
  SearchSpace space_;
  json fixed_;
};

/// Settings applied to the tree learners unless overridden: the reference
/// library defaults for the leaf-wise variant.
inline json leafwise_defaults() {
  return {{"learning_rate", 0.1}, {"max_depth", -1},     {"num_leaves", 31},
          {"min_data_in_leaf", 20}, {"lambda_l2", 0.0}, {"min_sum_hessian_in_leaf", 1e-3}};
}

/// Built-in learners by id: gbdt (XGBoost-style space), gbdt_leafwise
/// (LightGBM-style space), mlp, baseline. "external:<cmd> <args...>"
/// launches an adapter. `fixed` overrides settings outside the search space
/// (e.g. n_estimators, patience, epochs).
inline std::unique_ptr<Learner> make_learner(const std::string& id, const json& fixed = json::object()) {
  if (id == "gbdt") return std::make_unique<GbdtLearner>("gbdt", spaces::xgboost(), fixed);
  if (id == "gbdt_leafwise") {
    return std::make_unique<GbdtLearner>("gbdt_leafwise", spaces::lightgbm(), learner_detail::merged(leafwise_defaults(), fixed));
  }
  if (id == "mlp") return std::make_unique<MlpLearner>(fixed);
  if (id == "baseline") return std::make_unique<ConstantLearner>();
  if (id.rfind("external:", 0) == 0) {
    AdapterSpec spec;
    std::string rest = id.substr(9), word;
    std::istringstream in(rest);
    while (in >> word) spec.argv.push_back(word);
    if (spec.argv.empty()) throw ContractError("external learner: empty command");
    return std::make_unique<ExternalLearner>(id, std::move(spec), spaces::lightgbm(), fixed);
  }
  throw ContractError("unknown learner '" + id + "' (known: gbdt, gbdt_leafwise, mlp, baseline, external:<cmd>)");
}

}  // namespace tabbench
