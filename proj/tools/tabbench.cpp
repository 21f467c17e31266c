#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tabbench/tabbench.hpp"

namespace fs = std::filesystem;
using namespace tabbench;

namespace {

constexpr int kExitClean = 0;
constexpr int kExitAuditRefusal = 2;
constexpr int kExitRunFailure = 3;

fs::path output_root() {
  if (const char* env = std::getenv("TABBENCH_OUTPUT_ROOT"); env && *env) return env;
  return "tabbench-results";
}

struct Loaded {
  DefaultTask task;
  DatasetTable table;
};

Loaded load(const fs::path& manifest) {
  auto task = parse_task_manifest(manifest);
  auto table = load_task_table(task, manifest);
  const auto report = verify_task(task, table);
  if (!report.verifiable) {
    std::ostringstream msg;
    msg << "task is not executable:";
    for (const auto& f : report.findings) msg << "\n  " << f.code << ": " << f.detail;
    throw ContractError(msg.str());
  }
  return {std::move(task), std::move(table)};
}

std::vector<ValidationProtocol> parse_protocols(const std::vector<std::string>& values) {
  std::vector<ValidationProtocol> out;
  for (const auto& v : values) {
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(protocol_from_name(item));
    }
  }
  return out;
}

// "learner.key=value", value parsed as JSON when possible.
void apply_setting(json& settings, const std::string& assignment) {
  const auto dot = assignment.find('.');
  const auto eq = assignment.find('=');
  if (dot == std::string::npos || eq == std::string::npos || dot > eq) {
    throw ContractError("--set expects learner.key=value, got '" + assignment + "'");
  }
  const auto learner = assignment.substr(0, dot);
  const auto key = assignment.substr(dot + 1, eq - dot - 1);
  const auto raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  settings[learner][key] = value;
}

SplitSpec effective_estimation(const DefaultTask& task, const RunConfig& config) {
  SplitSpec spec = task.estimation;
  if (config.split_seed) spec.seed = *config.split_seed;
  if (config.repetitions) spec.repetitions = *config.repetitions;
  return spec;
}

int cmd_audit(const fs::path& manifest, std::optional<std::uint64_t> seed, std::optional<std::size_t> probe_rounds,
              const std::string& jsonl) {
  auto [task, raw] = load(manifest);
  const auto table = apply_table_transforms(raw, task.preprocessing);
  AuditOptions opt;
  opt.seed = seed.value_or(task.estimation.seed);
  if (probe_rounds) opt.probe.n_estimators = *probe_rounds;
  opt.metadata = task.metadata;
  const auto report = run_audit(table, opt);
  write_audit_text(std::cout, report);
  if (!jsonl.empty()) {
    std::ofstream out(jsonl, std::ios::binary);
    write_audit_jsonl(out, report);
  }
  return report.has_errors() ? kExitAuditRefusal : kExitClean;
}

int cmd_split(const fs::path& manifest, std::optional<std::uint64_t> seed, const std::string& out_path) {
  auto [task, table] = load(manifest);
  SplitSpec spec = task.estimation;
  if (seed) spec.seed = *seed;
  const auto labels = table.target_values();
  json out = json::array();
  for (const auto& s : make_splits(spec, table.rows(), std::span<const double>(labels))) {
    json j = to_json(s.assignment);
    j["repetition"] = s.repetition;
    j["fold"] = s.fold;
    j["seed"] = s.seed;
    out.push_back(j);
  }
  if (out_path.empty()) {
    std::cout << out.dump() << '\n';
  } else {
    std::ofstream f(out_path, std::ios::binary);
    f << out.dump() << '\n';
  }
  return kExitClean;
}

/// Shared by tune and evaluate: runs studies and writes the run directory.
int run_evaluation(RunConfig config, bool gate, std::ostream* trials_out) {
  auto [task, raw] = load(config.manifest);
  if (config.validations.empty()) config.validations.push_back(task.validation);
  if (config.output_dir.empty()) config.output_dir = output_root() / task.dataset_name;
  const auto estimation = effective_estimation(task, config);

  if (gate) {
    const auto table = apply_table_transforms(raw, task.preprocessing);
    AuditOptions opt;
    opt.seed = estimation.seed;
    opt.metadata = task.metadata;
    const auto report = run_audit(table, opt);
    if (report.has_errors() && !config.allow_flagged) {
      std::cerr << "refusing to evaluate a flagged dataset (override with --allow-flagged)\n";
      write_audit_text(std::cerr, report);
      return kExitAuditRefusal;
    }
  }

  std::vector<std::unique_ptr<Learner>> owned;
  std::vector<const Learner*> learners;
  for (const auto& id : config.learners) {
    owned.push_back(make_learner(id, config.learner_settings.value(id, json::object())));
    learners.push_back(owned.back().get());
  }
  EvaluationOptions opt;
  opt.n_trials = config.n_trials;
  opt.n_startup = config.n_startup;
  opt.seed = config.seed;
  opt.workers = config.workers;
  const auto result = evaluate_task(task, raw, learners, config.validations, estimation, opt);
  write_evaluation(config.output_dir, config, task, result);

  if (trials_out) {
    for (const auto& u : result.units) {
      for (const auto& t : u.study.trials) {
        json j = to_json(t);
        j.update(unit_labels(u));
        *trials_out << j.dump() << '\n';
      }
      if (u.outcome) {
        json sel = to_json(*u.outcome);
        sel.update(unit_labels(u));
        *trials_out << sel.dump() << '\n';
      }
    }
  }
  for (const auto& p : config.validations) {
    const auto m = fold_score_matrix(result, p);
    if (m.models.empty()) continue;
    std::cerr << "[" << p.name() << "]\n";
    write_summary_text(std::cerr, aggregate_table(m), result.metric);
  }

  if (config.record_baseline) {
    auto log = BaselineLog::beside(config.manifest);
    DefaultTask updated = task;
    for (const auto& id : config.learners) {
      if (id == "baseline") continue;
      const auto candidate = baseline_candidate(result, id, config.validations.front(), config.n_trials, estimation);
      if (candidate) updated = update_baseline(updated, *candidate, log);
    }
    if (!(updated == task)) {
      write_task_manifest(config.manifest, updated,
                          updated.data ? std::optional<fs::path>(config.manifest.parent_path()) : std::nullopt);
    }
  }

  for (const auto& u : result.units) {
    if (u.failed) {
      std::cerr << "unit failed: " << u.learner << " " << u.protocol.name() << " repetition " << u.repetition
                << " fold " << u.fold << ": " << u.error << '\n';
    }
  }
  std::cerr << "results written to " << config.output_dir.string() << '\n';
  return result.failed() ? kExitRunFailure : kExitClean;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out_dir) {
  std::vector<ResultSet> sets;
  for (const auto& d : dirs) sets.push_back(load_result_set(d));
  const auto comparison = compare_results(sets);
  write_comparison_text(std::cout, comparison);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream csv_out(fs::path(out_dir) / "comparison.csv", std::ios::binary);
    write_comparison_csv(csv_out, comparison);
    for (const auto& [protocol, rows] : comparison.aggregate) {
      std::ofstream agg(fs::path(out_dir) / ("aggregate_" + protocol + ".csv"), std::ios::binary);
      write_summary_csv(agg, rows, comparison.datasets.front().metric);
    }
  }
  return kExitClean;
}

int cmd_report(const fs::path& dir, const std::string& out_dir, bool uncapped) {
  const auto r = load_result_set(dir);
  const fs::path out = out_dir.empty() ? dir : fs::path(out_dir);
  fs::create_directories(out);
  ReportOptions opt;
  if (uncapped) opt.delta_cap.reset();
  {
    std::ofstream f(out / "cdf.csv", std::ios::binary);
    write_cdf_csv(f, r);
  }
  {
    std::ofstream f(out / "gaps.csv", std::ios::binary);
    write_gaps_csv(f, r);
  }
  {
    std::ofstream f(out / "delta.csv", std::ios::binary);
    write_delta_csv(f, r, opt);
  }
  std::cout << "wrote cdf.csv, gaps.csv and delta.csv to " << out.string() << '\n';
  return kExitClean;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabbench: tabular learner benchmarking harness"};
  app.set_version_flag("--version", harness_version());
  app.require_subcommand(1);

  std::string manifest;
  std::optional<std::uint64_t> seed;

  auto* audit = app.add_subcommand("audit", "Scan a task's dataset for leaks and structural problems");
  std::optional<std::size_t> probe_rounds;
  std::string audit_jsonl;
  audit->add_option("manifest", manifest, "Task manifest")->required()->check(CLI::ExistingFile);
  audit->add_option("--seed", seed, "Probe split seed (default: the estimation seed)");
  audit->add_option("--probe-rounds", probe_rounds, "Cap on probe boosting rounds");
  audit->add_option("--jsonl", audit_jsonl, "Also write findings as JSON lines to this file");

  auto* split = app.add_subcommand("split", "Print the estimation splits as JSON");
  std::string split_out;
  split->add_option("manifest", manifest, "Task manifest")->required()->check(CLI::ExistingFile);
  split->add_option("--seed", seed, "Estimation seed override");
  split->add_option("--out", split_out, "Write to this file instead of stdout");

  RunConfig config;
  std::vector<std::string> validations, settings;
  std::string learner_settings, out_dir;
  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("manifest", config.manifest, "Task manifest")->required()->check(CLI::ExistingFile);
    cmd->add_option("--validation", validations, "holdout | kfold:k (repeatable or comma separated)");
    cmd->add_option("--trials", config.n_trials, "Trials per study")->capture_default_str();
    cmd->add_option("--startup", config.n_startup, "Random startup trials")->capture_default_str();
    cmd->add_option("--seed", config.seed, "Base seed for studies and fits")->capture_default_str();
    cmd->add_option("--split-seed", config.split_seed, "Estimation seed override");
    cmd->add_option("--repetitions", config.repetitions, "Estimation repetitions override");
    cmd->add_option("--workers", config.workers, "Parallel (learner, split) units")->capture_default_str();
    cmd->add_option("--out", out_dir, "Output directory (default: $TABBENCH_OUTPUT_ROOT/<dataset>)");
    cmd->add_option("--set", settings, "Fixed learner setting, learner.key=value (repeatable)");
    cmd->add_option("--learner-settings", learner_settings, "Fixed learner settings as a JSON object");
  };

  auto* tune = app.add_subcommand("tune", "Run one learner's studies and print the trials as JSON lines");
  std::string tune_learner = "gbdt";
  add_run_options(tune);
  tune->add_option("--learner", tune_learner, "Learner id")->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "Tune, select and score learners on a task");
  std::string learners_csv;
  add_run_options(evaluate);
  evaluate->add_option("--learners", learners_csv, "Comma-separated learner ids (default gbdt,mlp,baseline)");
  evaluate->add_flag("--record-baseline", config.record_baseline, "Update the manifest's strong baseline");
  evaluate->add_flag("--allow-flagged", config.allow_flagged, "Evaluate even when the audit reports errors");

  auto* compare = app.add_subcommand("compare", "Significance-tested comparison of result directories");
  std::vector<std::string> dirs;
  std::string compare_out;
  compare->add_option("dirs", dirs, "Result directories")->required()->check(CLI::ExistingDirectory);
  compare->add_option("--out", compare_out, "Write comparison.csv and aggregate tables here");

  auto* report = app.add_subcommand("report", "Write CDF, selection-gap and delta CSVs for a result directory");
  std::string report_dir, report_out;
  bool uncapped = false;
  report->add_option("dir", report_dir, "Result directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", report_out, "Output directory (default: the result directory)");
  report->add_flag("--uncapped", uncapped, "Do not clamp the delta series at +-0.08");

  CLI11_PARSE(app, argc, argv);

  try {
    auto finish_run_config = [&] {
      config.validations = parse_protocols(validations);
      if (!learner_settings.empty()) config.learner_settings = json::parse(learner_settings);
      for (const auto& s : settings) apply_setting(config.learner_settings, s);
      if (!out_dir.empty()) config.output_dir = out_dir;
    };
    if (audit->parsed()) return cmd_audit(manifest, seed, probe_rounds, audit_jsonl);
    if (split->parsed()) return cmd_split(manifest, seed, split_out);
    if (tune->parsed()) {
      finish_run_config();
      config.learners = {tune_learner};
      return run_evaluation(config, false, &std::cout);
    }
    if (evaluate->parsed()) {
      finish_run_config();
      if (!learners_csv.empty()) {
        config.learners.clear();
        std::stringstream ss(learners_csv);
        std::string id;
        while (std::getline(ss, id, ',')) {
          if (!id.empty()) config.learners.push_back(id);
        }
      }
      return run_evaluation(config, true, nullptr);
    }
    if (compare->parsed()) return cmd_compare(dirs, compare_out);
    if (report->parsed()) return cmd_report(report_dir, report_out, uncapped);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRunFailure;
  }
  return kExitClean;
}
