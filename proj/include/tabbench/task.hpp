#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "tabbench/core/dataset.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/metrics.hpp"
#include "tabbench/split.hpp"

namespace tabbench {

using json = nlohmann::json;

/// Model-selection protocol used during hyperparameter optimisation.
struct ValidationProtocol {
  enum class Kind { holdout, kfold };
  Kind kind = Kind::holdout;
  std::size_t k = 0;

  static ValidationProtocol holdout() { return {Kind::holdout, 0}; }
  static ValidationProtocol kfold(std::size_t k) {
    if (k < 2) throw SchemaError("validation: kfold requires k >= 2, got " + std::to_string(k));
    return {Kind::kfold, k};
  }

  std::string name() const { return kind == Kind::holdout ? "holdout" : "kfold" + std::to_string(k); }

  friend bool operator==(const ValidationProtocol&, const ValidationProtocol&) = default;
};

/// Parses "holdout" or "kfold:k".
inline ValidationProtocol parse_validation_protocol(std::string_view s) {
  if (s == "holdout") return ValidationProtocol::holdout();
  if (s.rfind("kfold:", 0) == 0) {
    std::size_t k = 0;
    const auto digits = s.substr(6);
    auto res = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    if (res.ec != std::errc{} || res.ptr != digits.data() + digits.size()) {
      throw SchemaError("validation: cannot parse fold count in '" + std::string(s) + "'");
    }
    return ValidationProtocol::kfold(k);
  }
  throw SchemaError("validation: expected 'holdout' or 'kfold:k', got '" + std::string(s) + "'");
}

inline json to_json(const ValidationProtocol& v) {
  if (v.kind == ValidationProtocol::Kind::holdout) return {{"kind", "holdout"}};
  return {{"kind", "kfold"}, {"k", v.k}};
}

inline ValidationProtocol validation_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw SchemaError("validation: expected {kind, k?}");
  for (const auto& [key, _] : j.items()) {
    if (key != "kind" && key != "k") throw SchemaError("validation: unknown key '" + key + "'");
  }
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "holdout") return ValidationProtocol::holdout();
  if (kind == "kfold") {
    if (!j.contains("k")) throw SchemaError("validation: kfold requires 'k'");
    const auto k = j.at("k").get<long long>();
    if (k < 2) throw SchemaError("validation: kfold requires k >= 2, got " + std::to_string(k));
    return ValidationProtocol::kfold(static_cast<std::size_t>(k));
  }
  throw SchemaError("validation: unknown kind '" + kind + "'");
}

/// One named transform with its parameters, e.g. {"op": "drop_features",
/// "params": {"names": ["total_amount"]}}.
struct TransformSpec {
  std::string op;
  json params = json::object();

  friend bool operator==(const TransformSpec&, const TransformSpec&) = default;
};

inline const std::vector<std::string>& known_transforms() {
  static const std::vector<std::string> ops{"drop_features",       "datetime_difference",
                                            "pairwise_ratios",     "ordinal_as_categorical",
                                            "select_features"};
  return ops;
}

struct BaselineRecord {
  std::string learner_id;
  std::size_t n_trials = 1;
  ValidationProtocol validation = ValidationProtocol::kfold(5);
  std::string metric_name;
  double score_mean = 0.0;
  double score_std = 0.0;
  std::vector<std::int64_t> seed_set;
  std::string timestamp;  // ISO-8601

  void validate() const {
    if (n_trials < 1) throw SchemaError("baseline: n_trials must be >= 1");
    if (!(score_std >= 0.0)) throw SchemaError("baseline: score_std must be >= 0");
  }

  friend bool operator==(const BaselineRecord&, const BaselineRecord&) = default;
};

inline json to_json(const BaselineRecord& b) {
  return {{"learner_id", b.learner_id},   {"n_trials", b.n_trials},
          {"validation", to_json(b.validation)}, {"metric_name", b.metric_name},
          {"score_mean", b.score_mean},   {"score_std", b.score_std},
          {"seed_set", b.seed_set},       {"timestamp", b.timestamp}};
}

inline BaselineRecord baseline_from_json(const json& j) {
  static const std::vector<std::string> required{"learner_id", "n_trials",  "validation",
                                                 "metric_name", "score_mean", "score_std",
                                                 "seed_set",   "timestamp"};
  if (!j.is_object()) throw SchemaError("baseline: expected an object or null");
  for (const auto& key : required) {
    if (!j.contains(key)) throw SchemaError("baseline: missing required field '" + key + "'");
  }
  for (const auto& [key, _] : j.items()) {
    if (std::find(required.begin(), required.end(), key) == required.end()) {
      throw SchemaError("baseline: unknown key '" + key + "'");
    }
  }
  BaselineRecord b;
  b.learner_id = j.at("learner_id").get<std::string>();
  const auto trials = j.at("n_trials").get<long long>();
  if (trials < 1) throw SchemaError("baseline: n_trials must be >= 1");
  b.n_trials = static_cast<std::size_t>(trials);
  b.validation = validation_from_json(j.at("validation"));
  b.metric_name = j.at("metric_name").get<std::string>();
  b.score_mean = j.at("score_mean").get<double>();
  b.score_std = j.at("score_std").get<double>();
  b.seed_set = j.at("seed_set").get<std::vector<std::int64_t>>();
  b.timestamp = j.at("timestamp").get<std::string>();
  b.validate();
  return b;
}

/// Dataset metadata that only some checks can use.
struct TaskMetadata {
  std::optional<std::string> group_column;
  std::optional<std::string> time_column;
  friend bool operator==(const TaskMetadata&, const TaskMetadata&) = default;
};

/// A dataset's default task: target, preprocessing, estimation and
/// validation protocols, metric, post-processing and the strong baseline.
struct DefaultTask {
  std::string dataset_name;
  std::optional<std::filesystem::path> data;  // CSV path, relative to the manifest
  TableSchema schema;                         // target, task type, column kinds/roles
  std::vector<TransformSpec> preprocessing;
  SplitSpec estimation;
  ValidationProtocol validation = ValidationProtocol::kfold(5);
  Metric metric = Metric::logloss;
  std::vector<TransformSpec> postprocessing;
  std::optional<BaselineRecord> baseline;
  TaskMetadata metadata;

  const std::string& target() const { return schema.target; }
  Direction direction() const { return direction_of(metric); }

  friend bool operator==(const DefaultTask&, const DefaultTask&) = default;
};

namespace detail {

inline std::vector<TransformSpec> transforms_from_json(const json& j, const std::string& field,
                                                       bool check_names) {
  if (!j.is_array()) throw SchemaError(field + ": expected an array");
  std::vector<TransformSpec> out;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("op")) {
      throw SchemaError(field + ": every entry needs an 'op'");
    }
    for (const auto& [key, _] : item.items()) {
      if (key != "op" && key != "params") throw SchemaError(field + ": unknown key '" + key + "'");
    }
    TransformSpec t{item.at("op").get<std::string>(), item.value("params", json::object())};
    if (check_names) {
      const auto& ops = known_transforms();
      if (std::find(ops.begin(), ops.end(), t.op) == ops.end()) {
        throw SchemaError(field + ": unknown transform '" + t.op + "'");
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

inline json transforms_to_json(const std::vector<TransformSpec>& ts) {
  json arr = json::array();
  for (const auto& t : ts) arr.push_back({{"op", t.op}, {"params", t.params}});
  return arr;
}

}  // namespace detail

inline DefaultTask task_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("manifest: expected a JSON object");
  // Required keys, paired with the schema field they populate.
  static const std::vector<std::pair<std::string, std::string>> required{
      {"dataset_name", "dataset_name"},
      {"target", "target"},
      {"preprocessing", "preprocessing_protocol"},
      {"estimation", "estimation_protocol"},
      {"validation", "validation_protocol"},
      {"metric", "default_metric"},
      {"postprocessing", "postprocessing"},
      {"baseline", "baseline"}};
  static const std::vector<std::string> optional_keys{"data",           "task_type", "columns",
                                                      "missing_markers", "merge_rare_classes",
                                                      "metadata"};
  for (const auto& [key, field] : required) {
    if (!j.contains(key)) {
      throw SchemaError(field + ": missing required manifest key '" + key + "'");
    }
  }
  for (const auto& [key, _] : j.items()) {
    const bool known =
        std::any_of(required.begin(), required.end(), [&](const auto& p) { return p.first == key; }) ||
        std::find(optional_keys.begin(), optional_keys.end(), key) != optional_keys.end();
    if (!known) throw SchemaError("manifest: unknown key '" + key + "'");
  }

  DefaultTask t;
  try {
    t.dataset_name = j.at("dataset_name").get<std::string>();
    t.schema.target = j.at("target").get<std::string>();
    if (j.contains("data")) t.data = j.at("data").get<std::string>();
    t.preprocessing = detail::transforms_from_json(j.at("preprocessing"), "preprocessing", true);
    t.estimation = split_spec_from_json(j.at("estimation"));
    t.validation = validation_from_json(j.at("validation"));
    t.metric = metric_from_string(j.at("metric").get<std::string>());
    if (t.metric == Metric::mse) throw SchemaError("default_metric: 'mse' is not a report metric");
    t.postprocessing = detail::transforms_from_json(j.at("postprocessing"), "postprocessing", false);
    if (!j.at("baseline").is_null()) t.baseline = baseline_from_json(j.at("baseline"));

    if (j.contains("task_type")) {
      t.schema.task_kind = task_kind_from_string(j.at("task_type").get<std::string>());
    }
    t.schema.classification = is_classification_metric(t.metric);
    if (t.schema.task_kind && is_classification(*t.schema.task_kind) != *t.schema.classification) {
      throw SchemaError("task_type '" + std::string(to_string(*t.schema.task_kind)) +
                        "' is incompatible with metric '" + std::string(to_string(t.metric)) + "'");
    }
    if (j.contains("columns")) {
      for (const auto& c : j.at("columns")) {
        for (const auto& [key, _] : c.items()) {
          if (key != "name" && key != "kind" && key != "role") {
            throw SchemaError("columns: unknown key '" + key + "'");
          }
        }
        ColumnDecl d;
        d.name = c.at("name").get<std::string>();
        d.kind = feature_kind_from_string(c.value("kind", std::string("numeric")));
        const bool has_role = c.contains("role");
        d.role = has_role ? feature_role_from_string(c.at("role").get<std::string>())
                 : d.kind == FeatureKind::identifier ? FeatureRole::non_predictive
                                                     : FeatureRole::input;
        if (d.name == t.schema.target) d.role = FeatureRole::target;
        t.schema.columns.push_back(std::move(d));
      }
    }
    if (j.contains("missing_markers")) {
      t.schema.missing_markers = j.at("missing_markers").get<std::vector<std::string>>();
    }
    t.schema.merge_rare_classes = j.value("merge_rare_classes", false);
    if (j.contains("metadata")) {
      const auto& m = j.at("metadata");
      for (const auto& [key, _] : m.items()) {
        if (key != "group_column" && key != "time_column") {
          throw SchemaError("metadata: unknown key '" + key + "'");
        }
      }
      if (m.contains("group_column")) t.metadata.group_column = m.at("group_column").get<std::string>();
      if (m.contains("time_column")) t.metadata.time_column = m.at("time_column").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("manifest: ") + e.what());
  }
  return t;
}

inline json to_json(const DefaultTask& t) {
  json j;
  j["dataset_name"] = t.dataset_name;
  j["target"] = t.schema.target;
  if (t.data) j["data"] = t.data->generic_string();
  if (t.schema.task_kind) j["task_type"] = std::string(to_string(*t.schema.task_kind));
  if (!t.schema.columns.empty()) {
    json cols = json::array();
    for (const auto& c : t.schema.columns) {
      cols.push_back({{"name", c.name},
                      {"kind", std::string(to_string(c.kind))},
                      {"role", std::string(to_string(c.role))}});
    }
    j["columns"] = cols;
  }
  if (t.schema.missing_markers != default_missing_markers()) j["missing_markers"] = t.schema.missing_markers;
  if (t.schema.merge_rare_classes) j["merge_rare_classes"] = true;
  if (t.metadata.group_column || t.metadata.time_column) {
    json m = json::object();
    if (t.metadata.group_column) m["group_column"] = *t.metadata.group_column;
    if (t.metadata.time_column) m["time_column"] = *t.metadata.time_column;
    j["metadata"] = m;
  }
  j["preprocessing"] = detail::transforms_to_json(t.preprocessing);
  j["estimation"] = to_json(t.estimation);
  j["validation"] = to_json(t.validation);
  j["metric"] = std::string(to_string(t.metric));
  j["postprocessing"] = detail::transforms_to_json(t.postprocessing);
  j["baseline"] = t.baseline ? to_json(*t.baseline) : json(nullptr);
  return j;
}

inline DefaultTask parse_task_manifest_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  return task_from_json(j);
}

inline DefaultTask parse_task_manifest(const std::filesystem::path& path) {
  auto task = parse_task_manifest_text(csv::read_file(path));
  if (task.data && task.data->is_relative()) task.data = path.parent_path() / *task.data;
  return task;
}

inline void write_task_manifest(const std::filesystem::path& path, const DefaultTask& task,
                                const std::optional<std::filesystem::path>& relative_to = std::nullopt) {
  json j = to_json(task);
  if (task.data && relative_to) {
    j["data"] = std::filesystem::relative(*task.data, *relative_to).generic_string();
  }
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write '" + tmp + "'");
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

/// Resolved CSV location for a task parsed from `manifest_path`.
inline std::filesystem::path task_data_path(const DefaultTask& task,
                                            const std::filesystem::path& manifest_path) {
  if (task.data) return *task.data;
  return manifest_path.parent_path() / (task.dataset_name + ".csv");
}

inline DatasetTable load_task_table(const DefaultTask& task, const std::filesystem::path& manifest_path) {
  return load_csv_dataset(task_data_path(task, manifest_path), task.schema);
}

/// Append-only JSON-lines history of every baseline candidate.
class BaselineLog {
 public:
  BaselineLog() = default;
  explicit BaselineLog(std::filesystem::path path) : path_(std::move(path)) {}

  /// Conventional location beside a manifest.
  static BaselineLog beside(const std::filesystem::path& manifest) {
    return BaselineLog(manifest.parent_path() / (manifest.stem().string() + ".baseline_log.jsonl"));
  }

  void append(const BaselineRecord& record) {
    entries_.push_back(record);
    if (path_) {
      std::ofstream out(*path_, std::ios::binary | std::ios::app);
      if (!out) throw Error("cannot append to '" + path_->string() + "'");
      out << to_json(record).dump() << '\n';
    }
  }

  const std::vector<BaselineRecord>& entries() const noexcept { return entries_; }
  const std::optional<std::filesystem::path>& path() const noexcept { return path_; }

  static std::vector<BaselineRecord> read(const std::filesystem::path& path) {
    std::vector<BaselineRecord> out;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) out.push_back(baseline_from_json(json::parse(line)));
    }
    return out;
  }

 private:
  std::optional<std::filesystem::path> path_;
  std::vector<BaselineRecord> entries_;
};

/// Installs `candidate` when it improves on the stored baseline in
/// `direction` (or nothing is stored). The candidate is logged either way.
inline DefaultTask update_baseline(const DefaultTask& task, const BaselineRecord& candidate,
                                   Direction direction, BaselineLog& log) {
  if (candidate.metric_name != to_string(task.metric)) {
    throw ContractError("update_baseline: candidate metric '" + candidate.metric_name +
                        "' differs from the task metric '" + std::string(to_string(task.metric)) + "'");
  }
  candidate.validate();
  log.append(candidate);
  DefaultTask out = task;
  if (!task.baseline || better(candidate.score_mean, task.baseline->score_mean, direction)) {
    out.baseline = candidate;
  }
  return out;
}

inline DefaultTask update_baseline(const DefaultTask& task, const BaselineRecord& candidate,
                                   BaselineLog& log) {
  return update_baseline(task, candidate, task.direction(), log);
}

struct Finding {
  std::string code;
  std::string detail;
};

struct VerificationReport {
  bool verifiable = true;
  std::vector<Finding> findings;
  bool has(std::string_view code) const {
    return std::any_of(findings.begin(), findings.end(), [&](const Finding& f) { return f.code == code; });
  }
};

namespace detail {

/// Column names a transform reads, and the names it adds or removes.
struct TransformColumns {
  std::vector<std::string> reads;
  std::vector<std::string> adds;
  std::vector<std::string> removes;
};

inline std::vector<std::string> string_list(const json& params, const char* key) {
  if (!params.contains(key)) return {};
  return params.at(key).get<std::vector<std::string>>();
}

inline TransformColumns transform_columns(const TransformSpec& t) {
  TransformColumns c;
  if (t.op == "drop_features") {
    c.reads = string_list(t.params, "names");
    c.removes = c.reads;
  } else if (t.op == "datetime_difference") {
    const auto a = t.params.value("a", std::string());
    const auto b = t.params.value("b", std::string());
    c.reads = {a, b};
    c.adds = {t.params.value("name", a + "_minus_" + b)};
  } else if (t.op == "pairwise_ratios") {
    c.reads = string_list(t.params, "columns");
  } else if (t.op == "ordinal_as_categorical") {
    c.reads = string_list(t.params, "columns");
  }
  return c;
}

}  // namespace detail

/// Checks that a task is executable on `table`: target present, transforms
/// reference live columns, splits feasible for the row count.
inline VerificationReport verify_task(const DefaultTask& task, const DatasetTable& table) {
  VerificationReport report;
  auto add = [&](std::string code, std::string detail) {
    report.findings.push_back({std::move(code), std::move(detail)});
  };

  if (!table.find(task.target())) add("missing-target", "target '" + task.target() + "' not in table");

  std::set<std::string> live;
  for (const auto& c : table.columns()) live.insert(c.spec.name);
  for (std::size_t i = 0; i < task.preprocessing.size(); ++i) {
    const auto& t = task.preprocessing[i];
    try {
      const auto cols = detail::transform_columns(t);
      for (const auto& name : cols.reads) {
        if (!live.contains(name)) {
          add("dangling-column", "preprocessing[" + std::to_string(i) + "] (" + t.op +
                                     ") references missing column '" + name + "'");
        }
      }
      for (const auto& name : cols.removes) live.erase(name);
      for (const auto& name : cols.adds) live.insert(name);
    } catch (const json::exception& e) {
      add("bad-params", "preprocessing[" + std::to_string(i) + "] (" + t.op + "): " + e.what());
    }
  }

  const std::size_t n = table.rows();
  const auto& est = task.estimation;
  std::size_t pool = 0;
  if (est.kind == SplitKind::grinsztajn_holdout) {
    const std::size_t n_train = 7 * n / 10;
    const std::size_t n_val = 3 * (n - n_train) / 10;
    if (n < 10 || n_val == 0 || n - n_train - n_val == 0) {
      add("infeasible-split", "grinsztajn_holdout needs every partition non-empty; n = " + std::to_string(n));
    }
    pool = std::min(n_train, est.train_cap) + std::min(n_val, est.eval_cap);
  } else {
    if (n < est.k) {
      add("infeasible-split", "outer_kfold with k = " + std::to_string(est.k) + " on n = " + std::to_string(n));
    }
    pool = n - n / std::max<std::size_t>(est.k, 1);
  }
  if (task.validation.kind == ValidationProtocol::Kind::kfold && pool < task.validation.k) {
    add("infeasible-split", "validation kfold with k = " + std::to_string(task.validation.k) +
                                " on a training pool of " + std::to_string(pool) + " rows");
  }
  if (!task.postprocessing.empty()) {
    add("unsupported-postprocessing",
        std::to_string(task.postprocessing.size()) + " post-processing step(s) declared; none are built in");
  }
  report.verifiable = report.findings.empty();
  return report;
}

}  // namespace tabbench
