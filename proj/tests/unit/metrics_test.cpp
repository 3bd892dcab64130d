#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "tokprobe/common.hpp"
#include "tokprobe/jsonl.hpp"
#include "tokprobe/metrics.hpp"

using namespace tokprobe;
using namespace tokprobe::metrics;
using parse::VerdictKind;
using prompts::PromptVariant;
using taskgen::FormatType;
using taskgen::TaskKind;

namespace {

struct Fixture {
  std::vector<taskgen::Instance> instances;
  std::vector<ScoredRecord> records;

  // Adds `n` counting instances with gold 10, of which `correct` are answered
  // right, `unparseable` are unanswered and the rest answer 10 + shift.
  void add(const std::string& target, const std::string& alphabet, FormatType f, int lo, int hi,
           PromptVariant v, int n, int correct, int unparseable = 0, long long shift = -1,
           const std::string& backend = "sim") {
    for (int i = 0; i < n; ++i) {
      taskgen::Instance inst;
      inst.id = "x" + std::to_string(instances.size());
      inst.task = TaskKind::counting(target);
      inst.alphabet = alphabet;
      inst.format = f;
      inst.units = {target};
      inst.rendered = target;
      inst.gold = 10LL;
      inst.length_bucket = taskgen::bucket_for(taskgen::TaskType::kCounting, lo, hi);
      instances.push_back(inst);

      ScoredRecord r;
      r.instance_id = inst.id;
      r.variant = v;
      r.backend = backend;
      r.model = backend == "sim" ? "synthetic-x" : "gpt";
      if (i < correct) {
        r.verdict.kind = VerdictKind::kCorrect;
        r.verdict.predicted = 10LL;
      } else if (i < correct + unparseable) {
        r.verdict.reason = "nothing";
      } else {
        r.verdict.kind = VerdictKind::kIncorrect;
        r.verdict.predicted = 10 + shift;
      }
      records.push_back(r);
    }
  }

  InstanceIndex index() const { return index_instances(instances); }
};

}  // namespace

TEST(Accuracy, UnparseableCountsAsWrong) {
  Fixture fx;
  fx.add("a", "ab", FormatType::kA, 10, 20, PromptVariant::kBase, 4, 3);
  const auto cells = accuracy_matrix(fx.records, fx.index());
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_DOUBLE_EQ(cells[0].accuracy(), 75.0);

  Fixture fy;
  fy.add("a", "ab", FormatType::kA, 10, 20, PromptVariant::kBase, 4, 2, 1);
  const auto c = accuracy_matrix(fy.records, fy.index())[0];
  EXPECT_DOUBLE_EQ(c.accuracy(), 50.0);
  EXPECT_NEAR(*c.accuracy_parsed(), 200.0 / 3, 1e-9);
  EXPECT_EQ(c.n_unparseable, 1u);

  Fixture fz;
  fz.add("a", "ab", FormatType::kA, 10, 20, PromptVariant::kBase, 2, 0, 2);
  EXPECT_FALSE(accuracy_matrix(fz.records, fz.index())[0].accuracy_parsed().has_value());
}

TEST(Accuracy, OneCellPerPopulatedKey) {
  Fixture fx;
  const std::vector<std::pair<int, int>> buckets{{10, 20}, {20, 30}, {30, 40}};
  for (auto f : taskgen::kAllFormats) {
    for (auto [lo, hi] : buckets) {
      for (auto v : {PromptVariant::kBase, PromptVariant::kScot}) fx.add("a", "ab", f, lo, hi, v, 2, 1);
    }
  }
  const auto cells = accuracy_matrix(fx.records, fx.index());
  EXPECT_EQ(cells.size(), 24u);
  // Numeric bucket order within a format.
  EXPECT_EQ(cells[0].bucket, "10-20");
  EXPECT_EQ(cells[2].bucket, "20-30");

  // An unpopulated combination produces no cell.
  Fixture sparse;
  sparse.add("a", "ab", FormatType::kA, 10, 20, PromptVariant::kBase, 1, 1);
  sparse.add("a", "ab", FormatType::kD, 20, 30, PromptVariant::kBase, 1, 1);
  EXPECT_EQ(accuracy_matrix(sparse.records, sparse.index()).size(), 2u);
}

TEST(Accuracy, BucketsSortNumerically) {
  Fixture fx;
  fx.add("a", "ab", FormatType::kA, 100, 120, PromptVariant::kBase, 1, 1);
  fx.add("a", "ab", FormatType::kA, 5, 10, PromptVariant::kBase, 1, 1);
  const auto cells = accuracy_matrix(fx.records, fx.index());
  EXPECT_EQ(cells[0].bucket, "5-10");
  EXPECT_EQ(cells[1].bucket, "100-120");
}

TEST(Accuracy, GroupByCollapsesDroppedKeys) {
  Fixture fx;
  fx.add("a", "ab", FormatType::kA, 10, 20, PromptVariant::kBase, 4, 4);
  fx.add("a", "ab", FormatType::kA, 20, 30, PromptVariant::kBase, 4, 0);
  GroupBy g;
  g.bucket = false;
  const auto cells = accuracy_matrix(fx.records, fx.index(), g);
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].bucket, "*");
  EXPECT_DOUBLE_EQ(cells[0].accuracy(), 50.0);
}

TEST(Accuracy, DanglingVerdictIsAnIntegrityError) {
  Fixture fx;
  fx.add("a", "ab", FormatType::kA, 10, 20, PromptVariant::kBase, 1, 1);
  fx.records[0].instance_id = "ghost";
  EXPECT_THROW(accuracy_matrix(fx.records, fx.index()), IntegrityError);
}

TEST(Delta, PairAndMaxExamples) {
  // 1000 instances per format; 54.10 points between (d) and (a).
  Fixture fx;
  fx.add("a", "ab", FormatType::kA, 10, 20, PromptVariant::kBase, 1000, 400);
  fx.add("a", "ab", FormatType::kB, 10, 20, PromptVariant::kBase, 1000, 600);
  fx.add("a", "ab", FormatType::kC, 10, 20, PromptVariant::kBase, 1000, 800);
  fx.add("a", "ab", FormatType::kD, 10, 20, PromptVariant::kBase, 1000, 941);
  const auto cells = accuracy_matrix(fx.records, fx.index());
  const auto pair = delta_tok(cells, FormatType::kD, FormatType::kA);
  ASSERT_EQ(pair.size(), 1u);
  EXPECT_EQ(format_pct(pair[0].value), "54.10");
  const auto mx = delta_tok_max(cells);
  ASSERT_EQ(mx.size(), 1u);
  EXPECT_EQ(format_pct(mx[0].value), "54.10");
  EXPECT_EQ(mx[0].atomic_format, FormatType::kD);
  EXPECT_EQ(mx[0].merged_format, FormatType::kA);
  // Absolute value: swapping the roles changes nothing.
  EXPECT_EQ(format_pct(delta_tok(cells, FormatType::kA, FormatType::kD)[0].value), "54.10");
}

TEST(Delta, EightySixtyAndZero) {
  Fixture fx;
  fx.add("b", "ab", FormatType::kA, 30, 40, PromptVariant::kScot, 1000, 120);
  fx.add("b", "ab", FormatType::kD, 30, 40, PromptVariant::kScot, 1000, 926);
  fx.add("b", "ab", FormatType::kA, 10, 20, PromptVariant::kScot, 10, 5);
  fx.add("b", "ab", FormatType::kD, 10, 20, PromptVariant::kScot, 10, 5);
  const auto d = delta_tok(accuracy_matrix(fx.records, fx.index()), FormatType::kD, FormatType::kA);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(format_pct(d[0].value), "0.00");
  EXPECT_EQ(format_pct(d[1].value), "80.60");
}

TEST(Delta, MissingFormatIsWarnedAndSkipped) {
  Fixture fx;
  fx.add("a", "ab", FormatType::kA, 10, 20, PromptVariant::kBase, 3, 1);
  std::vector<std::string> warnings;
  const auto cells = accuracy_matrix(fx.records, fx.index());
  EXPECT_TRUE(delta_tok(cells, FormatType::kD, FormatType::kA, &warnings).empty());
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_TRUE(delta_tok_max(cells).empty());
}

TEST(Delta, PooledDividesPooledCounts) {
  Fixture fx;
  fx.add("a", "ab", FormatType::kA, 10, 20, PromptVariant::kBase, 10, 10);
  fx.add("a", "ab", FormatType::kA, 20, 30, PromptVariant::kBase, 30, 0);
  fx.add("a", "ab", FormatType::kD, 10, 20, PromptVariant::kBase, 10, 10);
  fx.add("a", "ab", FormatType::kD, 20, 30, PromptVariant::kBase, 30, 30);
  const auto d = delta_tok_pooled(accuracy_matrix(fx.records, fx.index()), FormatType::kD, FormatType::kA);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].bucket, "all");
  EXPECT_EQ(format_pct(d[0].value), "75.00");
}

TEST(Delta, PrintedGridCheck) {
  PrintedColumn ok{"ok", {{FormatType::kA, "40.00"}, {FormatType::kD, "94.10"}}, "54.10"};
  PrintedColumn bad{"bad", {{FormatType::kA, "45.70"}, {FormatType::kD, "96.80"}}, "41.10"};
  const auto checks = check_printed_deltas({ok, bad}, 1000);
  ASSERT_EQ(checks.size(), 2u);
  EXPECT_TRUE(checks[0].matches);
  EXPECT_FALSE(checks[1].matches);
  EXPECT_EQ(checks[1].recomputed, "51.10");
  PrintedColumn frac{"frac", {{FormatType::kA, "33.33"}, {FormatType::kD, "50.00"}}, "16.67"};
  EXPECT_THROW(check_printed_deltas({frac}, 10), InvalidInput);
}

TEST(ErrorShiftTest, HistogramAndMean) {
  Fixture fx;
  fx.add("a", "ab", FormatType::kA, 10, 20, PromptVariant::kBase, 3, 1, 0, -3);
  fx.add("a", "ab", FormatType::kD, 10, 20, PromptVariant::kBase, 2, 0, 0, 1);
  const auto all = error_shift(fx.records, fx.index());
  EXPECT_EQ(all.total(), 4u);
  EXPECT_EQ(all.histogram.at(-3), 2u);
  EXPECT_EQ(all.histogram.at(1), 2u);
  EXPECT_DOUBLE_EQ(*all.mean(), -1.0);
  const auto d = error_shift(fx.records, fx.index(), FormatType::kD);
  EXPECT_EQ(d.total(), 2u);
  EXPECT_DOUBLE_EQ(*d.mean(), 1.0);
  EXPECT_FALSE(error_shift(fx.records, fx.index(), FormatType::kB).mean().has_value());
}

TEST(ErrorShiftTest, UnparseableAndCorrectAreIgnored) {
  Fixture fx;
  fx.add("a", "ab", FormatType::kA, 10, 20, PromptVariant::kBase, 5, 3, 2);
  EXPECT_EQ(error_shift(fx.records, fx.index()).total(), 0u);
}

TEST(Correlation, PerfectAndDegenerate) {
  EXPECT_NEAR(*pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-12);
  EXPECT_NEAR(*pearson({1, 2, 3}, {3, 2, 1}), -1.0, 1e-12);
  EXPECT_FALSE(pearson({1, 1, 1}, {1, 2, 3}).has_value());
  EXPECT_NEAR(*spearman({1, 2, 3, 4}, {1, 8, 27, 64}), 1.0, 1e-12);
  EXPECT_NEAR(*spearman({1, 2, 2, 3}, {1, 2, 2, 3}), 1.0, 1e-12);
  EXPECT_FALSE(pearson({1, 2}, {1}).has_value());
}

TEST(Correlation, FrequencyAgainstErrorRate) {
  const FrequencyTable freq{{"a", 8.2}, {"b", 1.5}, {"e", 12.7}, {"z", 0.07}};
  // Rarer letters are counted more accurately, so error grows with frequency.
  const std::map<std::string, double> acc{{"a", 60}, {"b", 80}, {"e", 40}, {"z", 95}};
  const auto c = frequency_correlation(acc, freq);
  EXPECT_EQ(c.n, 4u);
  EXPECT_NEAR(*c.spearman, 1.0, 1e-12);
  EXPECT_GT(*c.pearson, 0.9);
  EXPECT_THROW(frequency_correlation({{"a", 1}, {"b", 2}}, freq), InvalidInput);
  const auto flat = frequency_correlation({{"a", 50}, {"b", 50}, {"e", 50}}, freq);
  EXPECT_FALSE(flat.pearson.has_value());
  EXPECT_FALSE(flat.spearman.has_value());
}

TEST(FrequencyFile, ParsesAndReportsOffsets) {
  const auto t = parse_frequency_table("# letters\n\na\t8.2\nz\t0.07\n");
  EXPECT_EQ(t.size(), 2u);
  EXPECT_DOUBLE_EQ(t.at("z"), 0.07);
  try {
    parse_frequency_table("a\t1\nb two\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  EXPECT_THROW(parse_frequency_table("a\tx\n"), ParseError);
  EXPECT_THROW(load_frequency_table("/nonexistent"), InvalidInput);
  EXPECT_EQ(load_frequency_table(testutil::source_path("data/letter_freq.tsv")).size(), 5u);
}

TEST(FormatPct, Rounding) {
  EXPECT_EQ(format_pct(54.1), "54.10");
  EXPECT_EQ(format_pct(-0.001), "0.00");
  EXPECT_EQ(format_pct(100.0), "100.00");
  EXPECT_EQ(format_pct(2.0 / 3 * 100), "66.67");
}

TEST(Report, RendersAllFormats) {
  Fixture fx;
  for (auto [lo, hi] : std::vector<std::pair<int, int>>{{10, 20}, {20, 30}}) {
    fx.add("a", "ab", FormatType::kA, lo, hi, PromptVariant::kBase, 10, 4);
    fx.add("a", "ab", FormatType::kD, lo, hi, PromptVariant::kBase, 10, 9, 0, 1);
    fx.add("b", "ab", FormatType::kA, lo, hi, PromptVariant::kBase, 10, 6);
    fx.add("b", "ab", FormatType::kD, lo, hi, PromptVariant::kBase, 10, 9);
  }
  const FrequencyTable freq{{"a", 8.2}, {"b", 1.5}};
  const auto report = build_report(fx.records, fx.index(), &freq);
  EXPECT_TRUE(report.backends.at("sim"));
  EXPECT_EQ(report.per_letter_accuracy.at({"ab", FormatType::kA}).size(), 2u);
  EXPECT_TRUE(report.correlations.empty());  // only two letters

  const auto text = render_report(report, ReportFormat::kTableText);
  EXPECT_NE(text.find("SYNTHETIC"), std::string::npos);
  EXPECT_NE(text.find("Δ_tok [max]"), std::string::npos);
  EXPECT_NE(text.find("10-20 base"), std::string::npos);

  const auto csv = render_report(report, ReportFormat::kCsv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "backend,task,alphabet,format,bucket,variant,n,n_correct,n_unparseable,accuracy,accuracy_parsed");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), report.cells.size() + 1);

  const auto j = nlohmann::json::parse(render_report(report, ReportFormat::kJson));
  for (const char* key : {"cells", "delta_tok_max", "delta_tok", "delta_tok_pooled", "error_shift",
                          "per_letter_accuracy", "backends", "warnings"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["cells"].size(), 8u);
}

TEST(Report, EmptyAndUnknownFormat) {
  EXPECT_THROW(render_report(Report{}, ReportFormat::kCsv), InvalidInput);
  EXPECT_EQ(report_format_from_name("table"), ReportFormat::kTableText);
  EXPECT_EQ(report_format_from_name("json"), ReportFormat::kJson);
  EXPECT_THROW(report_format_from_name("xml"), ConfigError);
}

TEST(Score, FailedRunsAreUnparseableAndDanglingIdsThrow) {
  taskgen::Instance inst;
  inst.id = "i1";
  inst.task = TaskKind::counting("a");
  inst.units = {"a", "a"};
  inst.rendered = "aa";
  inst.gold = 2LL;
  const auto index = index_instances({inst});
  runner::RunRecord ok;
  ok.instance_id = "i1";
  ok.backend = "b";
  ok.raw_response = "Result: 2";
  runner::RunRecord failed = ok;
  failed.failed = true;
  failed.error = "HTTP 500";
  const auto scored = score({ok, failed}, index);
  EXPECT_EQ(scored[0].verdict.kind, VerdictKind::kCorrect);
  EXPECT_EQ(scored[1].verdict.kind, VerdictKind::kUnparseable);
  EXPECT_NE(scored[1].verdict.reason.find("request failed"), std::string::npos);

  runner::RunRecord ghost = ok;
  ghost.instance_id = "nope";
  EXPECT_THROW(score({ghost}, index), IntegrityError);

  testutil::TempDir dir("verdicts");
  write_verdicts(scored, dir.file("v.jsonl"));
  const auto back = read_verdicts(dir.file("v.jsonl"));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(to_json(back[0]), to_json(scored[0]));
  EXPECT_EQ(to_json(back[1]), to_json(scored[1]));
}

TEST(Score, ConflictingDuplicateInstancesAreRejected) {
  taskgen::Instance a;
  a.id = "same";
  a.task = TaskKind::counting("a");
  a.units = {"a"};
  a.rendered = "a";
  a.gold = 1LL;
  auto b = a;
  EXPECT_NO_THROW(index_instances({a, b}));
  b.gold = 2LL;
  EXPECT_THROW(index_instances({a, b}), IntegrityError);
}
