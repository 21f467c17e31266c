#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "tabbench/tabbench.hpp"

using namespace tabbench;
using tabbench::testing::auc_pairs;

namespace {

PredictionMatrix column(const std::vector<double>& v) {
  PredictionMatrix m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
  return m;
}

PredictionMatrix binary_probs(const std::vector<double>& p1) {
  PredictionMatrix m(p1.size(), 2);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    m(i, 0) = 1.0 - p1[i];
    m(i, 1) = p1[i];
  }
  return m;
}

/// Inverse of the normal CDF by bisection on the extended-precision erfc.
long double inverse_normal_oracle(long double p) {
  long double lo = -40.0L, hi = 40.0L;
  for (int i = 0; i < 200; ++i) {
    const long double mid = 0.5L * (lo + hi);
    const long double cdf = 0.5L * std::erfc(-mid / std::sqrt(2.0L));
    (cdf < p ? lo : hi) = mid;
  }
  return 0.5L * (lo + hi);
}

}  // namespace

TEST(Metrics, UniformPredictionLoglossIsLn2) {
  const std::vector<double> y{0, 1, 1};
  EXPECT_NEAR(score(Metric::logloss, y, binary_probs({0.5, 0.5, 0.5})), std::log(2.0), 1e-15);
}

TEST(Metrics, AucWorkedExample) {
  const std::vector<double> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(metrics::auc_from_scores(y, std::vector<double>{0.1, 0.4, 0.35, 0.8}), 0.75);
  EXPECT_DOUBLE_EQ(metrics::auc_from_scores(y, std::vector<double>{0.3, 0.3, 0.3, 0.3}), 0.5);
}

TEST(Metrics, AucMatchesPairCounting) {
  SplitMix64 rng(17);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 2 + rng.below(29);
    std::vector<double> y(n), s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<double>(rng.below(2));
      s[i] = static_cast<double>(rng.below(6)) / 5.0;  // frequent ties
    }
    y[0] = 0.0;
    y[1] = 1.0;
    EXPECT_NEAR(metrics::auc_from_scores(y, s), auc_pairs(y, s), 1e-12);
  }
}

TEST(Metrics, R2OfMeanPredictionIsZero) {
  const std::vector<double> y{1, 2, 3, 6};
  EXPECT_DOUBLE_EQ(score(Metric::r2, y, column({3, 3, 3, 3})), 0.0);
}

TEST(Metrics, LoglossIgnoresZeroColumnForAbsentClass) {
  const std::vector<double> y{0, 1, 1, 0};
  const auto two = binary_probs({0.2, 0.7, 0.9, 0.4});
  PredictionMatrix three(4, 3, 0.0);
  for (std::size_t r = 0; r < 4; ++r) {
    three(r, 0) = two(r, 0);
    three(r, 1) = two(r, 1);
  }
  EXPECT_DOUBLE_EQ(score(Metric::logloss, y, two), score(Metric::logloss, y, three));
}

TEST(Metrics, RmseAndAccuracy) {
  const std::vector<double> y{0, 2};
  EXPECT_DOUBLE_EQ(score(Metric::rmse, y, column({1, 1})), 1.0);
  EXPECT_DOUBLE_EQ(score(Metric::accuracy, std::vector<double>{0, 1, 1}, binary_probs({0.1, 0.9, 0.2})), 2.0 / 3.0);
}

TEST(Adtm, WorkedExamples) {
  const auto n = adtm_normalize(std::vector<double>{0.3, 0.5, 0.7}, Direction::lower_better);
  EXPECT_EQ(n[0], 0.0);
  EXPECT_NEAR(n[1], 0.5, 1e-15);
  EXPECT_EQ(n[2], 1.0);
  EXPECT_EQ(adtm_normalize(std::vector<double>{0.4, 0.4, 0.4}, Direction::lower_better),
            (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_EQ(adtm_normalize(std::vector<double>{0.9, 0.7}, Direction::higher_better),
            (std::vector<double>{0.0, 1.0}));
}

TEST(Ranks, WorkedExamples) {
  EXPECT_EQ(fold_ranks(std::vector<double>{0.3, 0.5, 0.5}, Direction::lower_better),
            (std::vector<double>{1.0, 2.5, 2.5}));
  EXPECT_EQ(fold_ranks(std::vector<double>{1, 2, 3, 4}, Direction::lower_better),
            (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(fold_ranks(std::vector<double>{2, 2, 2}, Direction::lower_better),
            (std::vector<double>{2, 2, 2}));
}

TEST(Aggregate, SingleAndDominatedModels) {
  FoldScoreMatrix one{{"a"}, Matrix(1, 3, 0.5)};
  const auto r1 = aggregate_table(one);
  EXPECT_DOUBLE_EQ(r1[0].avg_rank, 1.0);
  EXPECT_DOUBLE_EQ(r1[0].avg_normalized, 0.0);

  FoldScoreMatrix two{{"b", "a"}, Matrix(2, 4)};
  for (std::size_t f = 0; f < 4; ++f) {
    two.scores(0, f) = 0.6 + 0.01 * static_cast<double>(f);
    two.scores(1, f) = 0.3;
  }
  const auto r2 = aggregate_table(two);
  EXPECT_EQ(r2[0].model, "a");
  EXPECT_DOUBLE_EQ(r2[0].avg_rank, 1.0);
  EXPECT_DOUBLE_EQ(r2[0].avg_normalized, 0.0);
  EXPECT_DOUBLE_EQ(r2[1].avg_rank, 2.0);
  EXPECT_DOUBLE_EQ(r2[1].avg_normalized, 1.0);
}

TEST(Aggregate, NonFiniteCellRejected) {
  FoldScoreMatrix m{{"a", "b"}, Matrix(2, 1, 0.5)};
  m.scores(1, 0) = std::nan("");
  EXPECT_THROW(aggregate_table(m), ContractError);
}

TEST(AdtmProperties, RandomFoldColumns) {
  SplitMix64 rng(23);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t m = 1 + rng.below(8);
    std::vector<double> col(m);
    for (auto& v : col) v = static_cast<double>(rng.below(5)) * 0.25 + 0.1;  // ties likely
    const auto dir = rng.bernoulli(0.5) ? Direction::lower_better : Direction::higher_better;

    const auto norm = adtm_normalize(col, dir);
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    for (std::size_t i = 0; i < m; ++i) {
      const bool is_best = col[i] == (dir == Direction::lower_better ? *lo : *hi);
      const bool is_worst = col[i] == (dir == Direction::lower_better ? *hi : *lo);
      if (is_best) ASSERT_EQ(norm[i], 0.0);
      if (is_worst && *lo != *hi) ASSERT_EQ(norm[i], 1.0);
    }

    const double shift = rng.uniform(-5, 5), scale = rng.uniform(0.1, 10);
    std::vector<double> moved(m);
    for (std::size_t i = 0; i < m; ++i) moved[i] = scale * col[i] + shift;
    const auto norm2 = adtm_normalize(moved, dir);
    for (std::size_t i = 0; i < m; ++i) ASSERT_NEAR(norm[i], norm2[i], 1e-12);

    const auto ranks = fold_ranks(col, dir);
    double sum = 0.0;
    for (double r : ranks) sum += r;
    ASSERT_DOUBLE_EQ(sum, static_cast<double>(m * (m + 1)) / 2.0);
  }
}

TEST(InverseNormal, MatchesHighPrecisionOracle) {
  for (double p : {1e-7, 1e-5, 0.001, 0.025, 0.2, 0.5, 0.7, 0.975, 0.999, 1 - 1e-7}) {
    const double want = static_cast<double>(inverse_normal_oracle(p));
    EXPECT_NEAR(inverse_normal_cdf(p), want, 1.2e-9) << "p = " << p;
  }
  SplitMix64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    const double p = rng.uniform(1e-7, 1 - 1e-7);
    ASSERT_NEAR(inverse_normal_cdf(p), static_cast<double>(inverse_normal_oracle(p)), 1.2e-9);
  }
  EXPECT_DOUBLE_EQ(inverse_normal_cdf(0.5), 0.0);
}
