#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "support/synthetic.hpp"
#include "tabbench/tabbench.hpp"

using namespace tabbench;
using tabbench::testing::scratch_dir;

namespace {

std::filesystem::path write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  return path;
}

TableSchema schema_for(std::string target) {
  TableSchema s;
  s.target = std::move(target);
  return s;
}

json minimal_manifest() {
  return json::parse(R"({
    "dataset_name": "toy",
    "target": "y",
    "preprocessing": [],
    "estimation": {"kind": "grinsztajn_holdout", "seed": 3},
    "validation": {"kind": "kfold", "k": 5},
    "metric": "logloss",
    "postprocessing": [],
    "baseline": null
  })");
}

BaselineRecord record(double mean) {
  BaselineRecord b;
  b.learner_id = "gbdt";
  b.n_trials = 100;
  b.metric_name = "logloss";
  b.score_mean = mean;
  b.seed_set = {0, 1};
  b.timestamp = "2024-01-01T00:00:00Z";
  return b;
}

}  // namespace

TEST(Rng, DeriveSeedSeparatesTags) {
  EXPECT_NE(derive_seed(1, "a"), derive_seed(1, "b"));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(7, "trial", 3), derive_seed(7, "trial", 3));
}

TEST(Rng, BelowStaysInRange) {
  SplitMix64 rng(5);
  for (int i = 0; i < 10000; ++i) EXPECT_LT(rng.below(7), 7u);
}

TEST(Csv, QuotedFieldsAndEmbeddedNewlines) {
  const auto doc = csv::parse("a,b\n\"x,1\",\"he said \"\"hi\"\"\"\n\"multi\nline\",2\n");
  ASSERT_EQ(doc.rows.size(), 2u);
  EXPECT_EQ(doc.rows[0][0], "x,1");
  EXPECT_EQ(doc.rows[0][1], "he said \"hi\"");
  EXPECT_EQ(doc.rows[1][0], "multi\nline");
}

TEST(Csv, RaggedRowIsParseError) { EXPECT_THROW(csv::parse("a,b\n1\n"), ParseError); }

TEST(Datetime, ParsesAndFormats) {
  EXPECT_EQ(*datetime::parse_iso8601("1970-01-02"), 86400.0);
  EXPECT_EQ(*datetime::parse_iso8601("2016-12-01T01:00:00") - *datetime::parse_iso8601("2016-12-01T00:00:00"),
            3600.0);
  EXPECT_EQ(*datetime::parse_iso8601("2000-01-01T00:00:00+01:00"), *datetime::parse_iso8601("1999-12-31T23:00:00"));
  EXPECT_FALSE(datetime::parse_iso8601("2021-02-30").has_value());
  EXPECT_EQ(datetime::format_iso8601(86400.0), "1970-01-02T00:00:00");
}

TEST(Dataset, QuestionMarkBecomesOneMissingCell) {
  const auto dir = scratch_dir("missing_marker");
  const auto path = write_text(dir / "d.csv", "a,y\n1,0\n?,1\n3,0\n");
  const auto t = load_csv_dataset(path, schema_for("y"));
  const auto& a = t.column("a");
  EXPECT_EQ(a.missing_count(), 1u);
  EXPECT_TRUE(a.missing(1));
  EXPECT_FALSE(a.missing(0));
}

TEST(Dataset, IgnoredColumnIsNotAnInput) {
  const auto dir = scratch_dir("ignored");
  const auto path = write_text(dir / "d.csv", "fare,total_amount,y\n1,2,0\n2,3,1\n3,4,0\n4,5,1\n");
  auto schema = schema_for("y");
  schema.columns.push_back({"total_amount", FeatureKind::numeric, FeatureRole::ignored});
  const auto t = load_csv_dataset(path, schema);
  EXPECT_EQ(t.input_names(), std::vector<std::string>{"fare"});
  const auto pipe = FittedPipeline::fit(t, tabbench::testing::iota_rows(4), PipelinePolicy::tree, false);
  EXPECT_EQ(pipe.transform(t, tabbench::testing::iota_rows(4)).numeric.cols(), 1u);
}

TEST(Dataset, MissingTargetColumnIsSchemaError) {
  const auto dir = scratch_dir("no_target");
  const auto path = write_text(dir / "d.csv", "a,b\n1,2\n");
  EXPECT_THROW(load_csv_dataset(path, schema_for("nope")), SchemaError);
}

TEST(Dataset, KindInference) {
  const std::vector<std::string> markers = default_missing_markers();
  const std::vector<std::string> cat{"a", "b", "a"};
  const auto c = infer_feature_kind("c", cat, markers);
  EXPECT_EQ(c.spec.kind, FeatureKind::categorical);
  EXPECT_EQ(c.spec.cardinality, 2u);

  const std::vector<std::string> ids{"1", "2", "3"};
  const auto i = infer_feature_kind("i", ids, markers);
  EXPECT_EQ(i.spec.kind, FeatureKind::numeric);
  EXPECT_TRUE(i.identifier_flag);

  const std::vector<std::string> dates{"2016-12-01", "2016-12-02"};
  EXPECT_EQ(infer_feature_kind("d", dates, markers).spec.kind, FeatureKind::datetime);

  const std::vector<std::string> names{"ann", "bob", "cy"};
  const auto id = infer_feature_kind("n", names, markers);
  EXPECT_EQ(id.spec.kind, FeatureKind::identifier);
  EXPECT_EQ(id.spec.role, FeatureRole::non_predictive);
}

TEST(Dataset, InferenceIsDeterministic) {
  const std::vector<std::string> markers = default_missing_markers();
  const std::vector<std::string> v{"1.5", "?", "2", "x"};
  EXPECT_EQ(infer_feature_kind("v", v, markers).spec, infer_feature_kind("v", v, markers).spec);
}

TEST(Dataset, ValidationFlags) {
  using tabbench::testing::label_column;
  using tabbench::testing::numeric_column;
  {
    DatasetTable t({numeric_column("x", {1, 2, 3, 4, 5}), label_column({0, 0, 0, 1, 1})}, TaskKind::binary);
    const auto report = validate_dataset(t);
    ASSERT_TRUE(report.has("rare-class"));
    EXPECT_NE(report.violations.front().detail.find("'1'"), std::string::npos);
  }
  {
    DatasetTable t({numeric_column("x", {1, 1, 1, 1, 1, 1}), label_column({0, 0, 0, 1, 1, 1})}, TaskKind::binary);
    EXPECT_TRUE(validate_dataset(t).has("constant-feature"));
  }
  {
    DatasetTable t({numeric_column("x", {1, 2, 3, 4, 5, 6}), label_column({0, 0, 0, 1, 1, 1})}, TaskKind::binary);
    EXPECT_TRUE(validate_dataset(t).clean());
  }
}

TEST(Dataset, TableInvariants) {
  using tabbench::testing::numeric_column;
  EXPECT_THROW(DatasetTable({numeric_column("x", {1, 2}), numeric_column("y", {1}, FeatureRole::target)},
                            TaskKind::regression),
               DataError);
  EXPECT_THROW(DatasetTable({numeric_column("x", {1, 2}), numeric_column("y", {1, 2})}, TaskKind::regression),
               SchemaError);
}

TEST(Dataset, CsvRoundTripKeepsCellsAndMissingMask) {
  const auto dir = scratch_dir("roundtrip");
  const auto path = write_text(dir / "d.csv",
                               "n,c,d,y\n1.25,red,2016-12-01T01:00:00,0\n,blue,,1\n-3,,2016-12-02,0\n"
                               "4,red,2016-12-03,1\n");
  const auto schema = schema_for("y");
  const auto t = load_csv_dataset(path, schema);
  write_csv(dir / "out.csv", t);
  const auto again = load_csv_dataset(dir / "out.csv", schema_of(t));
  EXPECT_EQ(t, again);
}

TEST(Dataset, RareClassesMergedOnlyWhenRequested) {
  const auto dir = scratch_dir("rare_merge");
  const auto path = write_text(dir / "d.csv", "x,y\n1,a\n2,a\n3,a\n4,b\n5,b\n6,b\n7,c\n");
  auto schema = schema_for("y");
  EXPECT_EQ(load_csv_dataset(path, schema).n_classes(), 3u);
  schema.merge_rare_classes = true;
  const auto merged = load_csv_dataset(path, schema);
  const auto labels = merged.class_labels();
  EXPECT_NE(std::find(labels.begin(), labels.end(), std::string(kMergedRareClass)), labels.end());
}

TEST(Manifest, ParsesAllSevenFields) {
  const auto task = task_from_json(minimal_manifest());
  EXPECT_EQ(task.dataset_name, "toy");
  EXPECT_EQ(task.target(), "y");
  EXPECT_EQ(task.validation, ValidationProtocol::kfold(5));
  EXPECT_EQ(task.metric, Metric::logloss);
  EXPECT_EQ(task.estimation.seed, 3u);
  EXPECT_FALSE(task.baseline.has_value());
}

TEST(Manifest, MissingMetricNamesTheField) {
  auto j = minimal_manifest();
  j.erase("metric");
  try {
    task_from_json(j);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("default_metric"), std::string::npos);
  }
}

TEST(Manifest, KfoldOfOneRejected) {
  auto j = minimal_manifest();
  j["validation"] = {{"kind", "kfold"}, {"k", 1}};
  EXPECT_THROW(task_from_json(j), SchemaError);
}

TEST(Manifest, ParseSerializeParseIsIdentity) {
  auto j = minimal_manifest();
  j["baseline"] = to_json(record(0.34));
  j["preprocessing"] = json::array({{{"op", "drop_features"}, {"params", {{"names", {"a"}}}}}});
  j["columns"] = json::array({{{"name", "a"}, {"kind", "categorical"}}});
  j["metadata"] = {{"group_column", "g"}};
  const auto once = task_from_json(j);
  const auto twice = task_from_json(to_json(once));
  EXPECT_EQ(once, twice);
}

TEST(Baseline, ReplacedOnlyOnImprovement) {
  auto task = task_from_json(minimal_manifest());
  BaselineLog log;
  task = update_baseline(task, record(0.40), log);
  ASSERT_TRUE(task.baseline);
  EXPECT_DOUBLE_EQ(task.baseline->score_mean, 0.40);
  task = update_baseline(task, record(0.34), log);
  EXPECT_DOUBLE_EQ(task.baseline->score_mean, 0.34);
  task = update_baseline(task, record(0.40), log);
  EXPECT_DOUBLE_EQ(task.baseline->score_mean, 0.34);
  EXPECT_EQ(log.entries().size(), 3u);
}

TEST(Baseline, MonotoneOverRandomSequences) {
  SplitMix64 rng(11);
  for (int seq = 0; seq < 50; ++seq) {
    auto task = task_from_json(minimal_manifest());
    BaselineLog log;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 20; ++i) {
      task = update_baseline(task, record(rng.uniform(0.1, 1.0)), log);
      ASSERT_LE(task.baseline->score_mean, best);
      best = task.baseline->score_mean;
    }
  }
}

TEST(Baseline, LogIsAppendOnlyJsonLines) {
  const auto dir = scratch_dir("baseline_log");
  BaselineLog log(dir / "log.jsonl");
  log.append(record(0.5));
  log.append(record(0.4));
  const auto back = BaselineLog::read(dir / "log.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1], record(0.4));
}

TEST(VerifyTask, Findings) {
  using tabbench::testing::numeric_column;
  using tabbench::testing::label_column;
  DatasetTable t({numeric_column("a", {1, 2, 3, 4, 5}), label_column({0, 1, 0, 1, 0}, "y")}, TaskKind::binary);
  auto task = task_from_json(minimal_manifest());
  task.preprocessing = {{"drop_features", {{"names", {"a"}}}}, {"pairwise_ratios", {{"columns", {"a"}}}}};
  task.estimation.kind = SplitKind::outer_kfold;
  task.estimation.k = 10;
  const auto report = verify_task(task, t);
  EXPECT_FALSE(report.verifiable);
  EXPECT_TRUE(report.has("dangling-column"));
  EXPECT_TRUE(report.has("infeasible-split"));

  auto ok = task_from_json(minimal_manifest());
  ok.validation = ValidationProtocol::holdout();
  std::vector<double> x(50), y(50);
  for (std::size_t i = 0; i < 50; ++i) {
    x[i] = static_cast<double>(i);
    y[i] = static_cast<double>(i % 2);
  }
  DatasetTable big({numeric_column("a", x), label_column(y, "y")}, TaskKind::binary);
  const auto clean = verify_task(ok, big);
  EXPECT_TRUE(clean.verifiable);
  EXPECT_TRUE(clean.findings.empty());
}

TEST(Split, GrinsztajnSizes) {
  auto sizes = [](std::size_t n) {
    const auto a = grinsztajn_holdout(n, 0);
    return std::array<std::size_t, 3>{a.train.size(), a.val.size(), a.test.size()};
  };
  EXPECT_EQ(sizes(1000), (std::array<std::size_t, 3>{700, 90, 210}));
  EXPECT_EQ(sizes(100000), (std::array<std::size_t, 3>{10000, 9000, 21000}));
  EXPECT_EQ(sizes(300000), (std::array<std::size_t, 3>{10000, 27000, 50000}));
}

TEST(Split, DisjointAndCoveringForManySeeds) {
  for (std::size_t n = 20; n <= 200; n += 9) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto a = grinsztajn_holdout(n, seed);
      std::set<std::size_t> seen;
      for (const auto* part : {&a.train, &a.val, &a.test}) {
        ASSERT_FALSE(part->empty());
        for (auto i : *part) {
          ASSERT_LT(i, n);
          ASSERT_TRUE(seen.insert(i).second);
        }
      }
      ASSERT_EQ(seen.size(), n);  // no caps bind at this size

      const auto folds = outer_kfold(n, 5, seed);
      std::multiset<std::size_t> tests;
      for (const auto& f : folds) {
        tests.insert(f.test.begin(), f.test.end());
        std::set<std::size_t> all(f.train.begin(), f.train.end());
        for (auto i : f.val) ASSERT_TRUE(all.insert(i).second);
        for (auto i : f.test) ASSERT_TRUE(all.insert(i).second);
        ASSERT_EQ(all.size(), n);
      }
      ASSERT_EQ(tests.size(), n);
      ASSERT_EQ(std::set<std::size_t>(tests.begin(), tests.end()).size(), n);
    }
  }
}

TEST(Split, DeterministicAndSeedSensitive) {
  EXPECT_EQ(to_json(grinsztajn_holdout(500, 4)).dump(), to_json(grinsztajn_holdout(500, 4)).dump());
  EXPECT_NE(grinsztajn_holdout(500, 4), grinsztajn_holdout(500, 5));
}

TEST(Split, KfoldBlocksOfTwo) {
  const auto folds = outer_kfold(10, 5, 1);
  ASSERT_EQ(folds.size(), 5u);
  for (const auto& f : folds) EXPECT_EQ(f.test.size(), 2u);
  EXPECT_THROW(outer_kfold(10, 11, 1), SplitError);
}

TEST(Split, StratifiedKeepsProportions) {
  const std::vector<double> labels{0, 0, 0, 0, 0, 0, 1, 1, 1, 1};
  const auto folds = outer_kfold(10, 2, 9, std::span<const double>(labels));
  for (const auto& f : folds) {
    std::size_t a = 0, b = 0;
    for (auto i : f.test) (labels[i] == 0 ? a : b)++;
    EXPECT_EQ(a, 3u);
    EXPECT_EQ(b, 2u);
  }
}

TEST(Split, InnerFolds) {
  std::vector<std::size_t> pool(10);
  for (std::size_t i = 0; i < 10; ++i) pool[i] = 100 + i;
  const auto folds = inner_kfold(pool, 5, 3);
  ASSERT_EQ(folds.size(), 5u);
  std::set<std::size_t> held;
  for (const auto& f : folds) {
    EXPECT_EQ(f.holdout.size(), 2u);
    EXPECT_EQ(f.fit.size(), 8u);
    held.insert(f.holdout.begin(), f.holdout.end());
  }
  EXPECT_EQ(held.size(), 10u);
  EXPECT_EQ(folds, inner_kfold(pool, 5, 3));
}

TEST(Split, RepetitionsUseConsecutiveSeeds) {
  SplitSpec spec;
  spec.seed = 10;
  spec.repetitions = 3;
  const auto splits = make_splits(spec, 100);
  ASSERT_EQ(splits.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(splits[r].seed, 10 + r);
    EXPECT_EQ(splits[r].assignment, grinsztajn_holdout(100, 10 + r));
  }
  EXPECT_NE(splits[0].assignment, splits[1].assignment);
}
