#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "tabbench/tabbench.hpp"

using namespace tabbench;
using D = ParamDistribution;

namespace {

SearchSpace random_space(SplitMix64& rng) {
  SearchSpace s;
  const std::size_t n = 1 + rng.below(4);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = "p" + std::to_string(i);
    const double lo = rng.uniform(-5, 5);
    switch (rng.below(5)) {
      case 0: s.add(name, D::uniform(lo, lo + rng.uniform(0.01, 10))); break;
      case 1: s.add(name, D::loguniform(std::exp(lo), std::exp(lo + rng.uniform(0.1, 8)))); break;
      case 2: {
        const auto a = static_cast<long long>(std::floor(lo));
        s.add(name, D::int_uniform(a, a + 1 + static_cast<long long>(rng.below(20))));
        break;
      }
      case 3: s.add(name, D::categorical({"a", 2, 3.5, "d"})); break;
      default: s.add(name, D::mixture(-1, D::int_uniform(1, 11)));
    }
  }
  return s;
}

std::vector<Observation> random_history(const SearchSpace& space, SplitMix64& rng, std::size_t n) {
  std::vector<Observation> h;
  for (std::size_t i = 0; i < n; ++i) h.push_back({sample_random(space, rng), rng.normal()});
  return h;
}

Trial complete_trial(std::size_t index, double objective, std::optional<double> test = std::nullopt) {
  Trial t;
  t.index = index;
  t.config = json::object();
  t.objective = objective;
  t.test_score = test;
  return t;
}

double ks_uniform(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = (xs[i] - lo) / (hi - lo);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
  }
  return d;
}

}  // namespace

TEST(SearchSpace, PublishedBoundsAreRespected) {
  SplitMix64 rng(1);
  const auto lr = D::loguniform(1e-3, 0.7);
  const auto depth = D::int_uniform(1, 11);
  std::map<long long, int> depth_counts;
  for (int i = 0; i < 100000; ++i) {
    const double v = lr.sample(rng).get<double>();
    ASSERT_GE(v, 1e-3);
    ASSERT_LE(v, 0.7);
    const auto d = depth.sample(rng);
    ASSERT_TRUE(d.is_number_integer());
    ++depth_counts[d.get<long long>()];
  }
  EXPECT_EQ(depth_counts.size(), 11u);
  EXPECT_EQ(depth_counts.begin()->first, 1);
  EXPECT_EQ(depth_counts.rbegin()->first, 11);
}

TEST(SearchSpace, CategoricalFrequencies) {
  SplitMix64 rng(2);
  const auto d = D::categorical({20, 50, 100, 500, 1000, 2000});
  std::map<int, int> counts;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[d.sample(rng).get<int>()];
  ASSERT_EQ(counts.size(), 6u);
  for (const auto& [v, c] : counts) EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 6.0, 0.03) << v;
}

TEST(SearchSpace, LogUniformIsUniformInLogSpace) {
  SplitMix64 rng(3);
  const auto d = D::loguniform(1e-4, 10.0);
  std::vector<double> logs;
  for (int i = 0; i < 20000; ++i) logs.push_back(std::log(d.sample(rng).get<double>()));
  EXPECT_LT(ks_uniform(logs, std::log(1e-4), std::log(10.0)), 0.02);
}

TEST(SearchSpace, MixturePicksSpecialHalfTheTime) {
  SplitMix64 rng(4);
  const auto d = D::mixture(0, D::uniform(0.0, 0.5));
  int specials = 0;
  for (int i = 0; i < 40000; ++i) {
    const auto v = d.sample(rng);
    ASSERT_TRUE(d.contains(v));
    specials += v == json(0);
  }
  EXPECT_NEAR(specials / 40000.0, 0.5, 0.01);
}

TEST(SearchSpace, InvalidDistributions) {
  EXPECT_THROW(D::uniform(1, 1), ContractError);
  EXPECT_THROW(D::loguniform(0, 1), ContractError);
  EXPECT_THROW(D::categorical({}), ContractError);
  EXPECT_THROW(D::mixture(-1, D::mixture(0, D::uniform(0, 1))), ContractError);
}

TEST(SearchSpace, JsonRoundTrip) {
  for (const auto& space : {spaces::xgboost(), spaces::lightgbm(), spaces::mlp()}) {
    const auto j = space.to_json();
    EXPECT_EQ(SearchSpace::from_json(j).to_json(), j);
  }
  const auto j = spaces::xgboost().to_json();
  EXPECT_EQ(j.at("learning_rate"), (json{{"kind", "loguniform"}, {"lo", 1e-3}, {"hi", 0.7}}));
  EXPECT_EQ(spaces::lightgbm().to_json().at("max_depth").at("special"), -1);
}

TEST(Tpe, SuggestionsStayInBounds) {
  SplitMix64 rng(5);
  std::size_t checked = 0;
  while (checked < 100000) {
    const auto space = random_space(rng);
    const auto history = random_history(space, rng, 1 + rng.below(30));
    for (int i = 0; i < 50; ++i, ++checked) {
      const auto cfg = tpe_suggest(history, space, rng);
      ASSERT_TRUE(space.contains(cfg)) << cfg.dump() << " in " << space.to_json().dump();
    }
  }
}

TEST(Tpe, SingleObservationAttractsSuggestions) {
  const SearchSpace space{{"x", D::uniform(0, 1)}, {"y", D::uniform(0, 1)}};
  const std::vector<Observation> history{{{{"x", 0.15}, {"y", 0.8}}, 1.0}};
  auto dist = [](const json& c) { return std::hypot(c["x"].get<double>() - 0.15, c["y"].get<double>() - 0.8); };
  std::vector<double> tpe, random;
  for (std::uint64_t s = 0; s < 100; ++s) {
    SplitMix64 a(s), b(s);
    tpe.push_back(dist(tpe_suggest(history, space, a)));
    random.push_back(dist(sample_random(space, b)));
  }
  std::nth_element(tpe.begin(), tpe.begin() + 50, tpe.end());
  std::nth_element(random.begin(), random.begin() + 50, random.end());
  EXPECT_LT(tpe[50], random[50]);
}

TEST(Tpe, EqualObjectivesGiveRandomSuggestions) {
  const SearchSpace space{{"x", D::uniform(0, 1)}};
  SplitMix64 h(6);
  std::vector<Observation> history;
  for (int i = 0; i < 20; ++i) history.push_back({{{"x", 0.9 + 0.1 * h.uniform()}}, 0.5});
  SplitMix64 rng(7);
  std::vector<double> xs;
  for (int i = 0; i < 10000; ++i) xs.push_back(tpe_suggest(history, space, rng)["x"].get<double>());
  EXPECT_LT(ks_uniform(xs, 0.0, 1.0), 0.05);
}

TEST(Tpe, QuadraticOptimumFound) {
  const SearchSpace space{{"x", D::uniform(0, 1)}};
  const auto& dist = space.params().front().second;
  int hits = 0, oracle_hits = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    SplitMix64 rng(derive_seed(8, s));
    std::vector<Observation> history;
    for (int i = 0; i < 40; ++i) {
      const double x = rng.uniform();
      history.push_back({{{"x", x}}, (x - 0.3) * (x - 0.3)});
    }
    // Grid maximizer of the good/bad density ratio built from the same split.
    auto sorted = history;
    std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.objective < b.objective; });
    std::vector<json> good, bad;
    for (std::size_t i = 0; i < sorted.size(); ++i) (i < 10 ? good : bad).push_back(sorted[i].config["x"]);
    const TpeOptions opt;
    const tpe_detail::ParamDensity l(dist, good, opt), g(dist, bad, opt);
    double best_x = 0, best_ratio = -1e300;
    for (int k = 0; k <= 1000; ++k) {
      const double x = k / 1000.0;
      const double r = l.log_density(x) - g.log_density(x);
      if (r > best_ratio) {
        best_ratio = r;
        best_x = x;
      }
    }
    oracle_hits += std::abs(best_x - 0.3) <= 0.1;
    hits += std::abs(tpe_suggest(history, space, rng)["x"].get<double>() - 0.3) <= 0.1;
  }
  EXPECT_GE(oracle_hits, 95);
  EXPECT_GE(hits, 80);
}

TEST(Study, SingleTrialIsRandomDraw) {
  const SearchSpace space{{"x", D::uniform(0, 1)}};
  StudyOptions opt;
  opt.n_trials = 1;
  opt.seed = 3;
  const auto study = run_study([](const json& c, std::size_t) { return TrialResult{c["x"].get<double>()}; }, space, opt);
  ASSERT_EQ(study.trials.size(), 1u);
  SplitMix64 rng(derive_seed(3, "trial", std::uint64_t{0}));
  EXPECT_EQ(study.trials[0].config, sample_random(space, rng));
}

namespace {

TrialResult bowl(const json& c, std::size_t) {
  const double x = c["x"].get<double>(), y = c["y"].get<double>();
  return {(x - 0.3) * (x - 0.3) + (y + 1.2) * (y + 1.2)};
}

const SearchSpace kBowl{{"x", D::uniform(-2, 2)}, {"y", D::uniform(-2, 2)}};

double best_objective(const Study& s) {
  double b = 1e300;
  for (const auto& t : s.trials) b = std::min(b, t.objective);
  return b;
}

}  // namespace

TEST(Study, DeterministicAndMonotone) {
  StudyOptions opt;
  opt.n_trials = 40;
  opt.n_startup = 10;
  opt.seed = 11;
  const auto a = run_study(bowl, kBowl, opt);
  const auto b = run_study(bowl, kBowl, opt);
  double running = 1e300;
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    EXPECT_EQ(a.trials[i].config, b.trials[i].config);
    EXPECT_EQ(a.trials[i].index, i);
    const double next = std::min(running, a.trials[i].objective);
    EXPECT_LE(next, running);
    running = next;
  }
}

TEST(Study, TpeBeatsRandomSearchOnBowl) {
  std::vector<double> tpe, random;
  for (std::uint64_t s = 0; s < 20; ++s) {
    StudyOptions opt;
    opt.n_trials = 60;
    opt.n_startup = 20;
    opt.seed = s;
    tpe.push_back(best_objective(run_study(bowl, kBowl, opt)));
    opt.n_startup = 60;
    random.push_back(best_objective(run_study(bowl, kBowl, opt)));
  }
  std::sort(tpe.begin(), tpe.end());
  std::sort(random.begin(), random.end());
  EXPECT_LT((tpe[9] + tpe[10]) / 2, (random[9] + random[10]) / 2);
}

TEST(Study, FailedTrialsAreRecordedAndExcluded) {
  StudyOptions opt;
  opt.n_trials = 30;
  opt.n_startup = 5;
  auto flaky = [](const json& c, std::size_t i) -> TrialResult {
    if (i % 3 == 0) throw FitError("diverged");
    if (i % 3 == 1) return {std::nan("")};
    return bowl(c, i);
  };
  const auto study = run_study(flaky, kBowl, opt);
  for (const auto& t : study.trials) {
    EXPECT_EQ(t.state == TrialState::failed, t.index % 3 != 2) << t.index;
    if (t.index % 3 == 0) EXPECT_EQ(t.error, "diverged");
  }
  EXPECT_EQ(holdout_select(study.trials).chosen_trial_index % 3, 2u);
  EXPECT_THROW(run_study([](const json&, std::size_t) -> TrialResult { throw FitError("no"); }, kBowl, opt),
               StudyError);
}

TEST(Study, ParallelModeRecordsCompletionOrder) {
  StudyOptions opt;
  opt.n_trials = 25;
  opt.n_startup = 5;
  opt.workers = 3;
  const auto study = run_study(bowl, kBowl, opt);
  EXPECT_EQ(study.workers, 3u);
  auto order = study.completion_order;
  std::sort(order.begin(), order.end());
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], i);
  for (const auto& t : study.trials) EXPECT_TRUE(kBowl.contains(t.config));
}

TEST(Study, TrialJsonRoundTrip) {
  Trial t = complete_trial(4, 0.25, 0.3);
  t.config = {{"x", 1}};
  t.per_fold_scores = {0.2, 0.3};
  t.best_iteration = 17;
  const auto back = trial_from_json(to_json(t));
  EXPECT_EQ(to_json(back), to_json(t));
  Trial f = complete_trial(5, 0.0);
  f.state = TrialState::failed;
  f.error = "x";
  EXPECT_TRUE(to_json(f).at("objective").is_null());
}

TEST(Select, HoldoutExamples) {
  EXPECT_EQ(holdout_select({complete_trial(0, 0.5), complete_trial(1, 0.3), complete_trial(2, 0.4)}).chosen_trial_index,
            1u);
  EXPECT_EQ(holdout_select({complete_trial(0, 0.3), complete_trial(1, 0.3)}).chosen_trial_index, 0u);
  const auto one = holdout_select({complete_trial(0, 0.7, 0.9)});
  EXPECT_EQ(one.chosen_trial_index, 0u);
  EXPECT_EQ(one.test_score, 0.9);
  Trial failed = complete_trial(0, 0.0);
  failed.state = TrialState::failed;
  EXPECT_THROW(holdout_select({failed}), SelectionError);
  EXPECT_EQ(holdout_select({failed, complete_trial(1, 0.5)}).chosen_trial_index, 1u);
}

TEST(Select, CvMeanComparison) {
  Trial a = complete_trial(0, 0.0), b = complete_trial(1, 0.0);
  a.per_fold_scores = {0.4, 0.4, 0.4, 0.4, 0.4};
  b.per_fold_scores = {0.1, 0.1, 0.1, 0.1, 2.1};
  const auto out = cv_select({a, b}, 5);
  EXPECT_EQ(out.chosen_trial_index, 0u);
  EXPECT_NEAR(out.validation_score, 0.4, 1e-12);
  EXPECT_EQ(out.protocol.name(), "kfold5");

  // One bad fold is averaged, not ignored: mean 0.3 here beats 0.4.
  b.per_fold_scores = {0.1, 0.1, 0.1, 0.1, 1.1};
  EXPECT_EQ(cv_select({a, b}, 5).chosen_trial_index, 1u);
  b.per_fold_scores.pop_back();
  EXPECT_THROW(cv_select({a, b}, 5), ContractError);
}

TEST(Select, EnsembleAveraging) {
  PredictionMatrix p(1, 2), q(1, 2);
  p(0, 0) = 0.8;
  p(0, 1) = 0.2;
  q(0, 0) = 0.6;
  q(0, 1) = 0.4;
  const auto avg = average_predictions({p, q});
  EXPECT_NEAR(avg(0, 0), 0.7, 1e-15);
  EXPECT_NEAR(avg(0, 1), 0.3, 1e-15);

  SplitMix64 rng(12);
  std::vector<PredictionMatrix> folds;
  for (int f = 0; f < 5; ++f) {
    PredictionMatrix m(50, 4);
    for (std::size_t r = 0; r < 50; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 4; ++c) s += m(r, c) = rng.uniform();
      for (std::size_t c = 0; c < 4; ++c) m(r, c) /= s;
    }
    folds.push_back(m);
  }
  const auto ens = average_predictions(folds);
  for (std::size_t r = 0; r < 50; ++r) {
    double s = 0;
    for (double v : ens.row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  EXPECT_THROW(average_predictions({p, PredictionMatrix(2, 2)}), ContractError);
}

TEST(Select, GapReport) {
  const std::vector<Trial> trials{complete_trial(0, 0.2, 0.40), complete_trial(1, 0.3, 0.35),
                                  complete_trial(2, 0.4, 0.50)};
  const auto sel = holdout_select(trials);
  const auto g = selection_gap_report(trials, sel, Direction::lower_better);
  EXPECT_NEAR(g.gap, 0.05, 1e-12);
  EXPECT_EQ(g.oracle_trial_index, 1u);
  EXPECT_DOUBLE_EQ(g.cdf.back(), 1.0);
  EXPECT_TRUE(std::is_sorted(g.cdf.begin(), g.cdf.end()));
  EXPECT_TRUE(std::is_sorted(g.sorted_scores.begin(), g.sorted_scores.end()));

  const std::vector<Trial> same{complete_trial(0, 0.1, 0.3), complete_trial(1, 0.2, 0.4)};
  EXPECT_EQ(selection_gap_report(same, holdout_select(same), Direction::lower_better).gap, 0.0);
  const std::vector<Trial> auc{complete_trial(0, 0.1, 0.8), complete_trial(1, 0.2, 0.9)};
  EXPECT_NEAR(selection_gap_report(auc, holdout_select(auc), Direction::higher_better).gap, 0.1, 1e-12);
}

TEST(Select, PropertiesOverRandomStudies) {
  SplitMix64 rng(13);
  for (int study = 0; study < 2000; ++study) {
    const std::size_t n = 1 + rng.below(30), k = 2 + rng.below(4);
    std::vector<Trial> trials;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse values make ties common.
      Trial t = complete_trial(i, std::round(rng.uniform() * 8) / 8, rng.uniform());
      for (std::size_t f = 0; f < k; ++f) t.per_fold_scores.push_back(std::round(rng.uniform() * 8) / 8);
      if (rng.bernoulli(0.1) && i > 0) t.state = TrialState::failed;
      trials.push_back(t);
    }
    const auto h = holdout_select(trials);
    const auto cv = cv_select(trials, k);
    for (const auto& t : trials) {
      if (t.state != TrialState::complete) continue;
      ASSERT_LE(h.validation_score, t.objective);
      if (t.objective == h.validation_score) ASSERT_GE(t.index, h.chosen_trial_index);
    }

    const double c = rng.uniform(0.01, 100);
    auto scaled = trials;
    for (auto& t : scaled) t.objective *= c;
    ASSERT_EQ(holdout_select(scaled).chosen_trial_index, h.chosen_trial_index);
    // Fold means of tied trials stay tied only under exact (power-of-two) scaling.
    const double c2 = std::ldexp(1.0, static_cast<int>(rng.below(13)) - 6);
    for (std::size_t i = 0; i < trials.size(); ++i) {
      scaled[i].per_fold_scores = trials[i].per_fold_scores;
      for (auto& f : scaled[i].per_fold_scores) f *= c2;
    }
    ASSERT_EQ(cv_select(scaled, k).chosen_trial_index, cv.chosen_trial_index);

    auto single = trials;
    for (auto& t : single) t.per_fold_scores = {t.objective};
    ASSERT_EQ(cv_select(single, 1).chosen_trial_index, h.chosen_trial_index);

    auto permuted = trials;
    for (std::size_t i = permuted.size(); i > 1; --i) {
      std::swap(permuted[i - 1].test_score, permuted[rng.below(i)].test_score);
    }
    ASSERT_EQ(holdout_select(permuted).chosen_trial_index, h.chosen_trial_index);
    ASSERT_EQ(cv_select(permuted, k).chosen_trial_index, cv.chosen_trial_index);
  }
}
