#pragma once

#include <condition_variable>
#include <cmath>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "tabbench/core/error.hpp"
#include "tabbench/core/matrix.hpp"
#include "tabbench/core/rng.hpp"
#include "tabbench/hpo/space.hpp"
#include "tabbench/hpo/tpe.hpp"

namespace tabbench {

enum class TrialState { complete, failed };

inline std::string_view to_string(TrialState s) { return s == TrialState::complete ? "complete" : "failed"; }

/// What an objective evaluation returns. A non-finite objective or an
/// exception marks the trial failed.
struct TrialResult {
  double objective = 0.0;
  std::vector<double> per_fold_scores;
  std::optional<double> test_score;
  std::optional<std::size_t> best_iteration;
  std::shared_ptr<const PredictionMatrix> test_predictions;
};

struct Trial {
  std::size_t index = 0;
  json config;
  double objective = 0.0;
  std::vector<double> per_fold_scores;
  std::optional<double> test_score;
  std::optional<std::size_t> best_iteration;
  TrialState state = TrialState::complete;
  std::string error;
  std::shared_ptr<const PredictionMatrix> test_predictions;  // not serialized
};

inline json to_json(const Trial& t) {
  json j{{"record", "trial"}, {"index", t.index}, {"config", t.config}, {"state", to_string(t.state)}};
  j["objective"] = t.state == TrialState::complete ? json(t.objective) : json(nullptr);
  if (!t.per_fold_scores.empty()) j["per_fold_scores"] = t.per_fold_scores;
  j["test_score"] = t.test_score ? json(*t.test_score) : json(nullptr);
  if (t.best_iteration) j["best_iteration"] = *t.best_iteration;
  if (!t.error.empty()) j["error"] = t.error;
  return j;
}

inline Trial trial_from_json(const json& j) {
  Trial t;
  t.index = j.at("index").get<std::size_t>();
  t.config = j.at("config");
  t.state = j.at("state").get<std::string>() == "complete" ? TrialState::complete : TrialState::failed;
  if (!j.at("objective").is_null()) t.objective = j.at("objective").get<double>();
  if (j.contains("per_fold_scores")) t.per_fold_scores = j.at("per_fold_scores").get<std::vector<double>>();
  if (j.contains("test_score") && !j.at("test_score").is_null()) t.test_score = j.at("test_score").get<double>();
  if (j.contains("best_iteration")) t.best_iteration = j.at("best_iteration").get<std::size_t>();
  if (j.contains("error")) t.error = j.at("error").get<std::string>();
  return t;
}

using Objective = std::function<TrialResult(const json& config, std::size_t trial_index)>;

struct StudyOptions {
  std::size_t n_trials = 100;
  std::size_t n_startup = 20;
  std::uint64_t seed = 0;
  std::size_t workers = 1;  // > 1: concurrent evaluations, order-dependent
  TpeOptions tpe;
};

struct Study {
  std::vector<Trial> trials;                 // index order
  std::vector<std::size_t> completion_order;  // trial indices as they finished
  std::size_t workers = 1;
};

namespace study_detail {

inline Trial evaluate(const Objective& objective, json config, std::size_t index) {
  Trial t;
  t.index = index;
  t.config = std::move(config);
  try {
    auto r = objective(t.config, index);
    t.objective = r.objective;
    t.per_fold_scores = std::move(r.per_fold_scores);
    t.test_score = r.test_score;
    t.best_iteration = r.best_iteration;
    t.test_predictions = std::move(r.test_predictions);
    if (!std::isfinite(t.objective)) {
      t.state = TrialState::failed;
      t.error = "non-finite objective";
    }
  } catch (const std::exception& e) {
    t.state = TrialState::failed;
    t.error = e.what();
  }
  return t;
}

inline json suggest(const std::vector<Trial>& done, const SearchSpace& space, std::size_t index,
                    const StudyOptions& opt) {
  SplitMix64 rng(derive_seed(opt.seed, "trial", index));
  std::vector<Observation> history;
  for (const auto& t : done) {
    if (t.state == TrialState::complete) history.push_back({t.config, t.objective});
  }
  if (index < opt.n_startup || history.empty() || space.empty()) return sample_random(space, rng);
  return tpe_suggest(history, space, rng, opt.tpe);
}

}  // namespace study_detail

/// Trials 0..n_startup-1 are random, later ones come from TPE over the
/// complete history. Each trial's sampler is seeded from (seed, index).
inline Study run_study(const Objective& objective, const SearchSpace& space, const StudyOptions& opt) {
  if (opt.n_trials < 1) throw ContractError("run_study: n_trials must be >= 1");
  Study study;
  study.workers = std::max<std::size_t>(1, opt.workers);
  study.trials.resize(opt.n_trials);

  if (study.workers == 1) {
    std::vector<Trial> done;
    for (std::size_t i = 0; i < opt.n_trials; ++i) {
      auto t = study_detail::evaluate(objective, study_detail::suggest(done, space, i, opt), i);
      study.completion_order.push_back(i);
      done.push_back(t);
      study.trials[i] = std::move(t);
    }
  } else {
    std::mutex mu;
    std::condition_variable cv;
    std::vector<Trial> done;
    std::size_t next = 0;
    std::size_t running = 0;
    std::vector<std::thread> threads;
    std::unique_lock lock(mu);
    while (next < opt.n_trials) {
      cv.wait(lock, [&] { return running < study.workers; });
      const std::size_t i = next++;
      json config = study_detail::suggest(done, space, i, opt);
      ++running;
      threads.emplace_back([&, i, config = std::move(config)]() mutable {
        auto t = study_detail::evaluate(objective, std::move(config), i);
        std::lock_guard g(mu);
        study.completion_order.push_back(i);
        done.push_back(t);
        study.trials[i] = std::move(t);
        --running;
        cv.notify_all();
      });
    }
    cv.wait(lock, [&] { return running == 0; });
    lock.unlock();
    for (auto& th : threads) th.join();
  }

  const bool any = std::any_of(study.trials.begin(), study.trials.end(),
                               [](const Trial& t) { return t.state == TrialState::complete; });
  if (!any) {
    throw StudyError("all " + std::to_string(opt.n_trials) + " trials failed; first error: " +
                     study.trials.front().error);
  }
  return study;
}

inline void write_trials_jsonl(std::ostream& out, const std::vector<Trial>& trials) {
  for (const auto& t : trials) out << to_json(t).dump() << '\n';
}

}  // namespace tabbench
