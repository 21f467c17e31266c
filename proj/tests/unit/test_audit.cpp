#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "support/synthetic.hpp"
#include "tabbench/tabbench.hpp"

using namespace tabbench;
using tabbench::testing::label_column;
using tabbench::testing::numeric_column;
using tabbench::testing::text_column;

namespace {

GbdtConfig quick_probe() {
  GbdtConfig c;
  c.n_estimators = 150;
  c.patience = 20;
  c.learning_rate = 0.1;
  c.max_depth = 4;
  return c;
}

std::size_t count_check(const std::vector<AuditFinding>& f, const std::string& check,
                        Severity s = Severity::error) {
  return static_cast<std::size_t>(
      std::count_if(f.begin(), f.end(), [&](const AuditFinding& x) { return x.check == check && x.severity == s; }));
}

std::size_t count_errors(const std::vector<AuditFinding>& f) {
  return static_cast<std::size_t>(
      std::count_if(f.begin(), f.end(), [](const AuditFinding& x) { return x.severity == Severity::error; }));
}

/// Gaussian inputs x0..x{d-1} and a regression target built by `target`.
template <typename F>
DatasetTable gaussian_regression(std::size_t n, std::size_t d, std::uint64_t seed, F target) {
  SplitMix64 rng(seed);
  std::vector<std::vector<double>> x(d, std::vector<double>(n));
  std::vector<double> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) row[j] = x[j][r] = rng.normal();
    y[r] = target(row, rng);
  }
  std::vector<Column> cols;
  for (std::size_t j = 0; j < d; ++j) cols.push_back(numeric_column("f" + std::to_string(j + 1), x[j]));
  cols.push_back(numeric_column("y", y, FeatureRole::target));
  return DatasetTable(cols, TaskKind::regression);
}

/// R^2 of OLS of y on the given columns with intercept.
double ols_r2(const DatasetTable& t, const std::vector<std::string>& names) {
  const auto n = static_cast<Eigen::Index>(t.rows());
  Eigen::MatrixXd a(n, static_cast<Eigen::Index>(names.size() + 1));
  Eigen::VectorXd b(n);
  const auto y = t.target_values();
  for (Eigen::Index r = 0; r < n; ++r) {
    a(r, 0) = 1.0;
    for (std::size_t j = 0; j < names.size(); ++j) {
      a(r, static_cast<Eigen::Index>(j + 1)) = t.column(names[j]).number(static_cast<std::size_t>(r));
    }
    b(r) = y[static_cast<std::size_t>(r)];
  }
  const Eigen::VectorXd fit = a * a.colPivHouseholderQr().solve(b);
  return 1.0 - (b - fit).squaredNorm() / (b.array() - b.mean()).square().sum();
}

DatasetTable with_target_copy(std::uint64_t seed) {
  auto base = tabbench::testing::noisy_classification({400, 5, 0.15, 3}, seed);
  const auto y = base.target_values();
  std::vector<Column> cols;
  for (const auto& name : base.input_names()) cols.push_back(base.column(name));
  cols.push_back(numeric_column("leak", std::vector<double>(y.begin(), y.end())));
  cols.push_back(base.target());
  return DatasetTable(cols, TaskKind::binary);
}

}  // namespace

TEST(Audit, TargetCopyIsNearPerfectAndSingleFeatureLeak) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto t = with_target_copy(seed);
    const auto np = near_perfect_probe(t, seed, quick_probe());
    ASSERT_EQ(count_check(np, "near_perfect"), 1u) << "seed " << seed;
    EXPECT_NEAR(np[0].evidence["score"].get<double>(), 1.0, 1e-3);
    const auto sf = single_feature_scan(t);
    ASSERT_EQ(sf.size(), 1u) << "seed " << seed;
    EXPECT_EQ(sf[0].columns, std::vector<std::string>{"leak"});
    EXPECT_EQ(sf[0].check, "single_feature_leak");
  }
}

TEST(Audit, DefaultProbeFlagsTargetCopy) {
  const auto report = run_audit(with_target_copy(7));
  ASSERT_TRUE(report.probe);
  EXPECT_EQ(report.probe->metric, "auc");
  EXPECT_GE(report.probe->score, 0.999);
  EXPECT_TRUE(report.has_errors());
}

TEST(Audit, RankPreservingTransformIsLeak) {
  SplitMix64 rng(1);
  const std::size_t n = 300;
  std::vector<double> latent(n), y(n), x(n), noise(n);
  for (std::size_t r = 0; r < n; ++r) {
    latent[r] = rng.normal();
    y[r] = latent[r] > 0 ? 1.0 : 0.0;
    x[r] = std::exp(3 * latent[r]);
    noise[r] = rng.normal();
  }
  const DatasetTable t({numeric_column("score", x), numeric_column("z", noise), label_column(y)}, TaskKind::binary);
  const auto f = single_feature_scan(t);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].columns[0], "score");
  EXPECT_GE(f[0].evidence["score"].get<double>(), 0.999);
}

TEST(Audit, NoisyTargetProxyIsNotFlagged) {
  SplitMix64 rng(2);
  const std::size_t n = 400;
  std::vector<double> y(n), x(n);
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = static_cast<double>(rng.below(2));
    x[r] = y[r] + 1.5 * rng.normal();
  }
  PredictionMatrix p(n, 2);
  for (std::size_t r = 0; r < n; ++r) p(r, 1) = x[r];
  ASSERT_LT(metrics::auc(y, p), 0.9);
  const DatasetTable t({numeric_column("proxy", x), label_column(y)}, TaskKind::binary);
  EXPECT_TRUE(single_feature_scan(t).empty());
}

TEST(Audit, PureNoiseProbeStaysNearChance) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto t = tabbench::testing::gaussian_noise(500, 10, TaskKind::binary, seed);
    const auto probe = probe_test_score(t, seed, quick_probe());
    worst = std::max(worst, probe.score);
    EXPECT_TRUE(near_perfect_probe(t, seed, quick_probe()).empty());
  }
  EXPECT_LT(worst, 0.6);
}

TEST(Audit, ModeratelyLearnableDataIsNotFlagged) {
  // Bayes AUC of a logistic link on one N(0,1) feature with slope 1.5 is about 0.8.
  SplitMix64 rng(3);
  const std::size_t n = 2000;
  std::vector<double> x(n), z(n), y(n);
  for (std::size_t r = 0; r < n; ++r) {
    x[r] = rng.normal();
    z[r] = rng.normal();
    y[r] = rng.bernoulli(loss::sigmoid(1.5 * x[r])) ? 1.0 : 0.0;
  }
  const DatasetTable t({numeric_column("x", x), numeric_column("z", z), label_column(y)}, TaskKind::binary);
  const auto probe = probe_test_score(t, 0, quick_probe());
  EXPECT_GT(probe.score, 0.7);
  EXPECT_LT(probe.score, 0.9);
  const auto report = run_audit(t, {0, quick_probe()});
  EXPECT_FALSE(report.has_errors());
  EXPECT_EQ(count_check(report.findings, "near_perfect", Severity::warning), 0u);
}

TEST(Audit, ExactCompositionDetected) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto t = gaussian_regression(300, 6, seed, [](const auto& x, auto&) { return x[0] + x[1] + x[2]; });
    const auto f = linear_composition_scan(t);
    ASSERT_EQ(f.size(), 1u) << "seed " << seed;
    EXPECT_EQ(f[0].columns, (std::vector<std::string>{"f1", "f2", "f3"}));
    EXPECT_NEAR(f[0].evidence["r2"].get<double>(), 1.0, 1e-9);
  }
}

TEST(Audit, NoisyCompositionNotFlagged) {
  // Var(f1 + f2) = 2, noise sd 0.5 * sqrt(2): OLS R^2 is about 0.8.
  const auto t = gaussian_regression(500, 5, 4, [](const auto& x, auto& rng) {
    return x[0] + x[1] + 0.5 * std::sqrt(2.0) * rng.normal();
  });
  ASSERT_LT(ols_r2(t, {"f1", "f2", "f3", "f4", "f5"}), 0.9);
  EXPECT_TRUE(linear_composition_scan(t).empty());
}

TEST(Audit, CompositionRestrictedScanOnWideTables) {
  const auto t = gaussian_regression(400, 45, 5, [](const auto& x, auto&) { return x[9] + x[19] + 2 * x[43]; });
  const auto f = linear_composition_scan(t);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].columns, (std::vector<std::string>{"f10", "f20", "f44"}));
}

TEST(Audit, MinimalSubsetsOnly) {
  const auto t = gaussian_regression(200, 4, 6, [](const auto& x, auto&) { return 2 * x[1]; });
  const auto f = linear_composition_scan(t);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].columns, std::vector<std::string>{"f2"});
  EXPECT_EQ(linear_composition_scan(tabbench::testing::gaussian_noise(100, 3, TaskKind::binary, 1)).size(), 0u);
}

TEST(Audit, LeakFreeDataFalsePositives) {
  std::size_t seeds_with_errors = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto reg = tabbench::testing::gaussian_noise(500, 10, TaskKind::regression, seed);
    EXPECT_TRUE(linear_composition_scan(reg).empty());
    const auto cls = tabbench::testing::gaussian_noise(500, 10, TaskKind::binary, seed);
    const auto report = run_audit(cls, {seed, quick_probe()});
    seeds_with_errors += report.has_errors();
    EXPECT_EQ(count_errors(structural_scan(cls, grinsztajn_holdout(cls.rows(), seed))), 0u);
  }
  EXPECT_LE(seeds_with_errors, 1u);
}

TEST(Audit, DuplicateAcrossTrainAndTest) {
  const std::size_t n = 100;
  const auto split = grinsztajn_holdout(n, 3);
  std::vector<double> a(n), b(n), y(n);
  for (std::size_t r = 0; r < n; ++r) {
    a[r] = static_cast<double>(r) + 0.5;
    b[r] = static_cast<double>(r % 7) + 0.25;
    y[r] = static_cast<double>(r % 2);
  }
  const auto src = split.train.front(), dst = split.test.front();
  a[dst] = a[src];
  b[dst] = b[src];
  const DatasetTable t({numeric_column("a", a), numeric_column("b", b), label_column(y)}, TaskKind::binary);
  const auto f = structural_scan(t, split);
  ASSERT_EQ(count_check(f, "duplicate_rows"), 1u);
  const auto dup = *std::find_if(f.begin(), f.end(), [](const auto& x) { return x.check == "duplicate_rows"; });
  EXPECT_EQ(dup.evidence["count"], 1);
  EXPECT_EQ(dup.evidence["test_rows"], json::array({dst}));
}

TEST(Audit, IdentifierAndConstantColumns) {
  const std::size_t n = 50;
  std::vector<double> id(n), cont(n), flat(n, 3.0), y(n);
  std::vector<std::string> code(n);
  SplitMix64 rng(4);
  for (std::size_t r = 0; r < n; ++r) {
    id[r] = static_cast<double>(1000 + (r * 37) % n);
    cont[r] = rng.normal();
    code[r] = "u" + std::to_string(r);
    y[r] = static_cast<double>(r % 2);
  }
  const DatasetTable t({numeric_column("row_id", id), numeric_column("measure", cont), numeric_column("flat", flat),
                        text_column("user", code), label_column(y)},
                       TaskKind::binary);
  const auto f = structural_scan(t, grinsztajn_holdout(n, 0));
  std::vector<std::string> ids, constants;
  for (const auto& x : f) {
    EXPECT_EQ(x.severity, Severity::warning);
    if (x.check == "id_feature") ids.push_back(x.columns[0]);
    if (x.check == "constant_feature") constants.push_back(x.columns[0]);
  }
  EXPECT_EQ(ids, (std::vector<std::string>{"row_id", "user"}));
  EXPECT_EQ(constants, std::vector<std::string>{"flat"});
}

TEST(Audit, ReadOnlyAndReproducible) {
  const auto t = with_target_copy(3);
  const auto before = t;
  AuditOptions opt{5, quick_probe()};
  const auto a = run_audit(t, opt);
  EXPECT_EQ(t, before);
  const auto b = run_audit(t, opt);
  ASSERT_EQ(a.findings.size(), b.findings.size());
  for (std::size_t i = 0; i < a.findings.size(); ++i) EXPECT_EQ(to_json(a.findings[i]), to_json(b.findings[i]));
  EXPECT_EQ(a.probe->score, b.probe->score);
}

TEST(Audit, MulticlassProbeUsesAccuracy) {
  SplitMix64 rng(2);
  std::vector<double> x(300), y(300);
  for (std::size_t r = 0; r < 300; ++r) {
    x[r] = rng.normal();
    y[r] = static_cast<double>(rng.below(3));
  }
  const DatasetTable t({numeric_column("x", x), label_column(y)}, TaskKind::multiclass);
  EXPECT_EQ(probe_test_score(t, 0, quick_probe()).metric, "accuracy");
}

TEST(Audit, UnscannedMetadataIsWarning) {
  AuditOptions opt{0, quick_probe()};
  opt.metadata.group_column = "subject";
  const auto r = run_audit(tabbench::testing::gaussian_noise(200, 3, TaskKind::binary, 3), opt);
  EXPECT_EQ(count_check(r.findings, "unscanned_metadata", Severity::warning), 1u);

  std::ostringstream jsonl, text;
  write_audit_jsonl(jsonl, r);
  write_audit_text(text, r);
  EXPECT_NE(jsonl.str().find("\"check\":\"unscanned_metadata\""), std::string::npos);
  EXPECT_NE(text.str().find("warning  unscanned_metadata  [subject]"), std::string::npos);
}
