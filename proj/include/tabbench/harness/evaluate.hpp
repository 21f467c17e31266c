#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "tabbench/core/datetime.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/core/rng.hpp"
#include "tabbench/hpo/study.hpp"
#include "tabbench/learners/learner.hpp"
#include "tabbench/metrics.hpp"
#include "tabbench/preprocess/transforms.hpp"
#include "tabbench/select.hpp"
#include "tabbench/split.hpp"
#include "tabbench/task.hpp"

namespace tabbench {

/// Effective settings of an evaluation run. Everything but the manifest has
/// a default; the whole struct is persisted next to the results.
struct RunConfig {
  std::filesystem::path manifest;
  std::vector<std::string> learners{"gbdt", "mlp", "baseline"};
  std::size_t n_trials = 100;
  std::size_t n_startup = 20;
  std::vector<ValidationProtocol> validations;  // empty: the task's protocol
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> split_seed;   // overrides the manifest estimation seed
  std::optional<std::size_t> repetitions;    // overrides the manifest repetitions
  std::filesystem::path output_dir;
  std::size_t workers = 1;
  json learner_settings = json::object();  // learner id -> fixed settings
  bool allow_flagged = false;
  bool record_baseline = false;
};

inline json to_json(const RunConfig& c) {
  json v = json::array();
  for (const auto& p : c.validations) v.push_back(p.name());
  return {{"manifest", c.manifest.generic_string()},
          {"learners", c.learners},
          {"n_trials", c.n_trials},
          {"n_startup", c.n_startup},
          {"validations", v},
          {"seed", c.seed},
          {"split_seed", c.split_seed ? json(*c.split_seed) : json(nullptr)},
          {"repetitions", c.repetitions ? json(*c.repetitions) : json(nullptr)},
          {"output_dir", c.output_dir.generic_string()},
          {"workers", c.workers},
          {"learner_settings", c.learner_settings},
          {"allow_flagged", c.allow_flagged},
          {"record_baseline", c.record_baseline}};
}

/// Protocol text form: "holdout" or "kfold:k" (also accepts "kfoldK").
inline ValidationProtocol protocol_from_name(std::string_view s) {
  if (s.rfind("kfold", 0) == 0 && s.size() > 5 && s[5] != ':') {
    return parse_validation_protocol("kfold:" + std::string(s.substr(5)));
  }
  return parse_validation_protocol(s);
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.manifest = j.at("manifest").get<std::string>();
  if (j.contains("learners")) c.learners = j.at("learners").get<std::vector<std::string>>();
  c.n_trials = j.value("n_trials", c.n_trials);
  c.n_startup = j.value("n_startup", c.n_startup);
  if (j.contains("validations")) {
    for (const auto& p : j.at("validations")) c.validations.push_back(protocol_from_name(p.get<std::string>()));
  }
  c.seed = j.value("seed", c.seed);
  if (j.contains("split_seed") && !j.at("split_seed").is_null()) c.split_seed = j.at("split_seed").get<std::uint64_t>();
  if (j.contains("repetitions") && !j.at("repetitions").is_null()) c.repetitions = j.at("repetitions").get<std::size_t>();
  c.output_dir = j.value("output_dir", std::string());
  c.workers = j.value("workers", c.workers);
  c.learner_settings = j.value("learner_settings", json::object());
  c.allow_flagged = j.value("allow_flagged", false);
  c.record_baseline = j.value("record_baseline", false);
  return c;
}

/// Loss used for selection: logloss for classification, MSE for
/// regression, whatever the reported metric.
inline Metric selection_metric(TaskKind task) { return is_classification(task) ? Metric::logloss : Metric::mse; }

/// One (learner, repetition, fold) study under one validation protocol.
struct UnitResult {
  ValidationProtocol protocol;
  std::string learner;
  std::size_t repetition = 0;
  std::size_t fold = 0;
  bool failed = false;
  std::string error;
  Study study;
  std::optional<SelectionOutcome> outcome;
  std::optional<SelectionGap> gap;
  std::string started, finished;  // wall clock, sidecar only
};

struct EvaluationResult {
  std::vector<ValidationProtocol> protocols;
  std::vector<std::string> learners;
  Metric metric = Metric::logloss;
  std::vector<UnitResult> units;  // protocol-major, then learner, then split
  bool failed() const {
    return std::any_of(units.begin(), units.end(), [](const UnitResult& u) { return u.failed; });
  }
};

inline std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  return datetime::format_iso8601(static_cast<double>(secs));
}

/// Objective of one trial: fits under the protocol, returns the validation
/// loss, per-fold losses (k-fold) and the test score of the protocol's
/// predictions (single model, or the fold-average ensemble).
inline TrialResult evaluate_trial(const Learner& learner, const DatasetTable& table, const SplitAssignment& split,
                                  const ValidationProtocol& protocol, const std::vector<InnerFold>& inner,
                                  Metric metric, const json& config, std::uint64_t seed,
                                  std::optional<std::size_t> select_k) {
  const auto y = table.target_values();
  const Metric sel = selection_metric(table.task_kind());
  auto pick = [&](std::span<const std::size_t> rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(y[r]);
    return out;
  };
  const auto y_test = pick(split.test);
  TrialResult result;
  if (protocol.kind == ValidationProtocol::Kind::holdout) {
    FitRequest req{&table, split.train, split.val, {split.val, split.test}, config, seed, select_k};
    auto fit = learner.fit_predict(req);
    result.objective = score(sel, pick(split.val), fit.predictions[0]);
    result.best_iteration = fit.info.best_iteration;
    result.test_score = score(metric, y_test, fit.predictions[1]);
    result.test_predictions = std::make_shared<const PredictionMatrix>(std::move(fit.predictions[1]));
    return result;
  }
  std::vector<PredictionMatrix> test_preds;
  for (std::size_t f = 0; f < inner.size(); ++f) {
    FitRequest req{&table, inner[f].fit, inner[f].holdout, {inner[f].holdout, split.test}, config,
                   derive_seed(seed, "fold", f), select_k};
    auto fit = learner.fit_predict(req);
    result.per_fold_scores.push_back(score(sel, pick(inner[f].holdout), fit.predictions[0]));
    test_preds.push_back(std::move(fit.predictions[1]));
  }
  double sum = 0.0;
  for (double s : result.per_fold_scores) sum += s;
  result.objective = sum / static_cast<double>(result.per_fold_scores.size());
  auto ensemble = average_predictions(test_preds);
  result.test_score = score(metric, y_test, ensemble);
  result.test_predictions = std::make_shared<const PredictionMatrix>(std::move(ensemble));
  return result;
}

struct EvaluationOptions {
  std::size_t n_trials = 100;
  std::size_t n_startup = 20;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

/// Runs every (protocol, learner, split) study. Units are independent and
/// seeded from their labels, so the result does not depend on `workers`.
inline EvaluationResult evaluate_task(const DefaultTask& task, const DatasetTable& raw_table,
                                      const std::vector<const Learner*>& learners,
                                      const std::vector<ValidationProtocol>& protocols, const SplitSpec& estimation,
                                      const EvaluationOptions& opt) {
  const DatasetTable table = apply_table_transforms(raw_table, task.preprocessing);
  const auto select_k = selected_feature_count(task.preprocessing);
  const auto labels = table.target_values();
  const auto splits = make_splits(estimation, table.rows(), std::span<const double>(labels));

  EvaluationResult result;
  result.protocols = protocols;
  result.metric = task.metric;
  for (const auto* l : learners) result.learners.push_back(l->id());
  struct Job {
    const Learner* learner;
    ValidationProtocol protocol;
    const LabeledSplit* split;
  };
  std::vector<Job> jobs;
  for (const auto& p : protocols)
    for (const auto* l : learners)
      for (const auto& s : splits) jobs.push_back({l, p, &s});
  result.units.resize(jobs.size());

  auto run_job = [&](std::size_t j) {
    const auto& job = jobs[j];
    UnitResult& u = result.units[j];
    u.protocol = job.protocol;
    u.learner = job.learner->id();
    u.repetition = job.split->repetition;
    u.fold = job.split->fold;
    u.started = now_iso8601();
    const std::uint64_t unit_seed = derive_seed(opt.seed, u.learner, u.repetition, u.fold);
    try {
      std::vector<InnerFold> inner;
      if (job.protocol.kind == ValidationProtocol::Kind::kfold) {
        inner = inner_kfold(job.split->assignment.pool(), job.protocol.k, derive_seed(job.split->seed, "inner", u.fold));
      }
      const auto space = job.learner->space();
      StudyOptions so;
      so.n_trials = space.empty() ? 1 : opt.n_trials;
      so.n_startup = opt.n_startup;
      so.seed = derive_seed(unit_seed, "study");
      Objective objective = [&](const json& config, std::size_t trial) {
        return evaluate_trial(*job.learner, table, job.split->assignment, job.protocol, inner, task.metric, config,
                              derive_seed(unit_seed, "fit", trial), select_k);
      };
      u.study = run_study(objective, space, so);
      u.outcome = select_trial(u.study.trials, job.protocol);
      u.gap = selection_gap_report(u.study.trials, *u.outcome, direction_of(task.metric));
    } catch (const std::exception& e) {
      u.failed = true;
      u.error = e.what();
    }
    for (auto& t : u.study.trials) t.test_predictions.reset();
    u.finished = now_iso8601();
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(opt.workers, jobs.size()));
  if (workers == 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) run_job(j);
      });
    }
    for (auto& t : pool) t.join();
  }
  return result;
}

/// Units of one protocol as a models x (repetition, fold) matrix of test
/// scores. Failed units are skipped model-wide.
inline FoldScoreMatrix fold_score_matrix(const EvaluationResult& r, const ValidationProtocol& protocol) {
  FoldScoreMatrix m;
  m.metric = r.metric;
  m.direction = direction_of(r.metric);
  std::vector<std::vector<double>> rows;
  for (const auto& learner : r.learners) {
    std::vector<double> row;
    bool ok = true;
    for (const auto& u : r.units) {
      if (u.protocol != protocol || u.learner != learner) continue;
      if (u.failed || !u.outcome || !u.outcome->test_score) {
        ok = false;
        break;
      }
      row.push_back(*u.outcome->test_score);
    }
    if (ok && !row.empty()) {
      m.models.push_back(learner);
      rows.push_back(std::move(row));
    }
  }
  m.scores = Matrix(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t f = 0; f < rows[i].size(); ++f) m.scores(i, f) = rows[i][f];
  return m;
}

inline json unit_labels(const UnitResult& u) {
  return {{"learner", u.learner}, {"repetition", u.repetition}, {"fold", u.fold}, {"protocol", u.protocol.name()}};
}

inline json outcome_record(const UnitResult& u, Metric metric) {
  json j = unit_labels(u);
  j["metric"] = std::string(to_string(metric));
  std::size_t complete = 0;
  for (const auto& t : u.study.trials) complete += t.state == TrialState::complete;
  j["n_trials"] = u.study.trials.size();
  j["n_complete"] = complete;
  if (u.failed) {
    j["state"] = "failed";
    j["error"] = u.error;
    return j;
  }
  j["state"] = "complete";
  j["chosen_trial_index"] = u.outcome->chosen_trial_index;
  j["validation_score"] = u.outcome->validation_score;
  j["test_score"] = *u.outcome->test_score;
  j["oracle_trial_index"] = u.gap->oracle_trial_index;
  j["oracle_test_score"] = u.gap->oracle_test;
  j["selection_gap"] = u.gap->gap;
  return j;
}

namespace harness_detail {

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write '" + tmp + "'");
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace harness_detail

/// Harness version: the configured git description.
inline std::string harness_version() {
#ifdef TABBENCH_VERSION_STRING
  return TABBENCH_VERSION_STRING;
#else
  return "unknown";
#endif
}

/// Writes the run directory: config.json, version.txt, per-protocol
/// trials_*.jsonl (each study followed by its selection record),
/// outcomes_*.jsonl, summary_*.csv/txt, scores.csv and the timestamps.json
/// sidecar (the only file with wall-clock content).
inline void write_evaluation(const std::filesystem::path& dir, const RunConfig& config, const DefaultTask& task,
                             const EvaluationResult& r) {
  using harness_detail::write_atomic;
  std::filesystem::create_directories(dir);
  write_atomic(dir / "config.json", to_json(config).dump(2) + "\n");
  write_atomic(dir / "version.txt", harness_version() + "\n");
  json task_info{{"dataset_name", task.dataset_name},
                 {"metric", std::string(to_string(r.metric))},
                 {"direction", std::string(to_string(direction_of(r.metric)))}};
  write_atomic(dir / "task.json", task_info.dump(2) + "\n");

  std::ostringstream scores;
  scores << "protocol,learner,repetition,fold,test_score\n";
  json stamps = json::array();
  for (const auto& p : r.protocols) {
    std::ostringstream trials, outcomes;
    for (const auto& u : r.units) {
      if (u.protocol != p) continue;
      for (const auto& t : u.study.trials) {
        json j = to_json(t);
        j.update(unit_labels(u));
        trials << j.dump() << '\n';
      }
      if (u.outcome) {
        json sel = to_json(*u.outcome);
        sel.update(unit_labels(u));
        trials << sel.dump() << '\n';
        scores << p.name() << ',' << u.learner << ',' << u.repetition << ',' << u.fold << ','
               << format_number(*u.outcome->test_score) << '\n';
      }
      outcomes << outcome_record(u, r.metric).dump() << '\n';
      json s = unit_labels(u);
      s["started"] = u.started;
      s["finished"] = u.finished;
      s["completion_order"] = u.study.completion_order;
      s["workers"] = u.study.workers;
      stamps.push_back(s);
    }
    write_atomic(dir / ("trials_" + p.name() + ".jsonl"), trials.str());
    write_atomic(dir / ("outcomes_" + p.name() + ".jsonl"), outcomes.str());
    const auto m = fold_score_matrix(r, p);
    if (!m.models.empty()) {
      const auto rows = aggregate_table(m);
      std::ostringstream csv_out, txt_out;
      write_summary_csv(csv_out, rows, r.metric);
      write_summary_text(txt_out, rows, r.metric);
      write_atomic(dir / ("summary_" + p.name() + ".csv"), csv_out.str());
      write_atomic(dir / ("summary_" + p.name() + ".txt"), txt_out.str());
    }
  }
  write_atomic(dir / "scores.csv", scores.str());
  write_atomic(dir / "timestamps.json", stamps.dump(2) + "\n");
}

/// Baseline candidate for `learner` from its selected test scores under
/// `protocol`.
inline std::optional<BaselineRecord> baseline_candidate(const EvaluationResult& r, const std::string& learner,
                                                        const ValidationProtocol& protocol, std::size_t n_trials,
                                                        const SplitSpec& estimation) {
  std::vector<double> s;
  for (const auto& u : r.units) {
    if (u.protocol == protocol && u.learner == learner && !u.failed) s.push_back(*u.outcome->test_score);
  }
  if (s.empty()) return std::nullopt;
  BaselineRecord b;
  b.learner_id = learner;
  b.n_trials = n_trials;
  b.validation = protocol;
  b.metric_name = std::string(to_string(r.metric));
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= static_cast<double>(s.size());
  double ss = 0.0;
  for (double v : s) ss += (v - mean) * (v - mean);
  b.score_mean = mean;
  b.score_std = s.size() > 1 ? std::sqrt(ss / static_cast<double>(s.size() - 1)) : 0.0;
  for (std::size_t rep = 0; rep < estimation.repetitions; ++rep) {
    b.seed_set.push_back(static_cast<std::int64_t>(estimation.seed + rep));
  }
  b.timestamp = now_iso8601();
  return b;
}

}  // namespace tabbench
