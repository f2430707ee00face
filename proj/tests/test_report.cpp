#include <gtest/gtest.h>

#include <random>

#include "morphgen/report.hpp"
#include "test_support.hpp"

using namespace morphgen;
using morphgen::testing::scratch_dir;

namespace {

using Opt = std::optional<double>;

ScoreRecord rec(std::string id, StrategyId s, QuestionType qt, Opt c, Opt f, Opt g, Opt r, std::string model = "m") {
  return {std::move(id), s, std::move(model), qt, {c, f, g, r}};
}

std::vector<ScoreRecord> four_items() {
  return {
      rec("a", StrategyId::zero_shot, QuestionType::QT1, 20, 80, 100, 60),
      rec("b", StrategyId::zero_shot, QuestionType::QT2, 40, std::nullopt, 90, 70),
      rec("c", StrategyId::cot, QuestionType::QT1, 30, 70, 80, 50),
      rec("d", StrategyId::cot, QuestionType::QT1, 50, 90, 100, 30),
  };
}

std::string slurp(const std::string& p) { return detail::read_file(p); }

}  // namespace

TEST(Tables, FourItemGoldenCsv) {
  auto ts = make_tables(four_items());
  EXPECT_EQ(render_table(ts.strategy_table, ExportFormat::csv),
            "Prompting Strategy,Complexity (m),Fluency (m),Grammar (m),Readability (m)\n"
            "Zero-Shot,30.00,80.00,95.00,65.00\n"
            "CoT,40.00,80.00,90.00,40.00\n"
            "Average,35.00,80.00,92.50,52.50\n");
}

TEST(Tables, MissingCellsRender) {
  auto ts = make_tables(four_items());
  const auto& qt2 = ts.per_qt[1];
  ASSERT_EQ(qt2.row_labels.size(), 2u);
  EXPECT_FALSE(qt2.cells[1][0].has_value());
  EXPECT_FALSE(qt2.summary[1].has_value());
  EXPECT_DOUBLE_EQ(*qt2.summary[0], 40.0);
  auto md = render_table(qt2, ExportFormat::markdown);
  EXPECT_NE(md.find("| CoT | \xE2\x80\x94 | \xE2\x80\x94 | \xE2\x80\x94 | \xE2\x80\x94 |"), std::string::npos) << md;
  EXPECT_NE(md.find("| Zero-Shot | 40.00 | \xE2\x80\x94 | 90.00 | 70.00 |"), std::string::npos) << md;
  EXPECT_NE(md.find("|---|---:|---:|---:|---:|"), std::string::npos);
  auto csv = render_table(qt2, ExportFormat::csv);
  EXPECT_NE(csv.find("CoT,,,,\n"), std::string::npos) << csv;
}

TEST(Tables, SingleItem) {
  auto ts = make_tables({rec("x", StrategyId::few_shot, QuestionType::QT5, 10, 20, 30, 40)});
  ASSERT_EQ(ts.strategy_table.row_labels, (std::vector<std::string>{"Few-Shot"}));
  EXPECT_EQ(ts.strategy_table.cells[0], ts.strategy_table.summary);
  EXPECT_DOUBLE_EQ(*ts.per_qt[4].cells[0][3], 40.0);
  EXPECT_FALSE(ts.per_qt[0].cells[0][0].has_value());
  EXPECT_FALSE(ts.rubric_table.has_value());
  EXPECT_THROW(make_tables({}), ValidationError);
}

TEST(Tables, MatchBruteForce) {
  std::mt19937_64 rng(31);
  const std::vector<std::string> models = {"alpha", "beta"};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ScoreRecord> recs;
    std::size_t n = 1 + rng() % 200;
    for (std::size_t i = 0; i < n; ++i) {
      ScoreRecord r;
      r.item_id = "i" + std::to_string(i);
      r.strategy = kAllStrategies[rng() % kAllStrategies.size()];
      r.model = models[rng() % 2];
      r.qt = static_cast<QuestionType>(1 + rng() % 13);
      for (auto& s : r.scores) {
        if (rng() % 5) s = static_cast<double>(rng() % 10001) / 100.0;
      }
      recs.push_back(r);
    }
    auto ts = make_tables(recs);
    const auto& t = ts.strategy_table;
    for (std::size_t row = 0; row < t.row_labels.size(); ++row) {
      for (std::size_t g = 0; g < 4; ++g) {
        for (std::size_t m = 0; m < t.models.size(); ++m) {
          // brute force: collect matching values, then average
          std::vector<double> vals;
          for (const auto& r : recs) {
            if (display_name(r.strategy) == t.row_labels[row] && r.model == t.models[m] && r.scores[g]) {
              vals.push_back(*r.scores[g]);
            }
          }
          const auto& cell = t.cells[row][t.column(g, m)];
          if (vals.empty()) {
            EXPECT_FALSE(cell.has_value());
          } else {
            ASSERT_TRUE(cell.has_value());
            double s = 0;
            for (double v : vals) s += v;
            EXPECT_NEAR(*cell, s / static_cast<double>(vals.size()), 1e-9);
          }
        }
      }
    }
    for (std::size_t c = 0; c < t.column_count(); ++c) {
      std::vector<double> present;
      for (const auto& row : t.cells) {
        if (row[c]) present.push_back(*row[c]);
      }
      if (present.empty()) {
        EXPECT_FALSE(t.summary[c]);
        continue;
      }
      double s = 0;
      for (double v : present) s += v;
      EXPECT_NEAR(*t.summary[c], s / static_cast<double>(present.size()), 1e-9);
    }
  }
}

TEST(Tables, RubricTable) {
  std::vector<RubricRecord> judged = {
      {"a", StrategyId::cot, "m", QuestionType::QT1, RubricScore(RubricDimensions::of({1, 1, 1, 1, 1})), ""},
      {"b", StrategyId::cot, "m", QuestionType::QT1, RubricScore(RubricDimensions::of({1, 1, 0, 0, 0})), ""},
      {"c", StrategyId::cot, "m", QuestionType::QT1, std::nullopt, "unreadable"},
  };
  auto ts = make_tables(four_items(), judged);
  ASSERT_TRUE(ts.rubric_table);
  const auto& t = *ts.rubric_table;
  EXPECT_EQ(t.summary_label, "Grand Avg.");
  ASSERT_EQ(t.row_labels.size(), 1u);
  EXPECT_DOUBLE_EQ(*t.cells[0][t.column(2, 0)], 0.5);
  EXPECT_DOUBLE_EQ(*t.cells[0][t.column(5, 0)], 3.5);
  EXPECT_NE(render_table(t, ExportFormat::csv).find("Total (0-5) (m)"), std::string::npos);
}

TEST(Records, RoundTrip) {
  MetricReport rep;
  rep.grammar = 80;
  rep.readability = 55.5;
  auto r = score_record("id1", StrategyId::cot_role, "m", QuestionType::QT7, rep);
  auto back = score_record_from_json(nlohmann::json::parse(metric_line(r, rep).dump()));
  EXPECT_EQ(back.item_id, "id1");
  EXPECT_EQ(back.strategy, StrategyId::cot_role);
  EXPECT_EQ(back.get(Metric::grammar), 80.0);
  EXPECT_FALSE(back.get(Metric::fluency));

  RubricRecord rr{"id2", StrategyId::few_shot, "m", QuestionType::QT2, RubricScore(RubricDimensions::of({1, 0, 1, 0, 1})), ""};
  auto rb = rubric_record_from_json(nlohmann::json::parse(rubric_line(rr).dump()));
  ASSERT_TRUE(rb.score);
  EXPECT_EQ(rb.score->total(), 3);
  RubricRecord un{"id3", StrategyId::few_shot, "m", QuestionType::QT2, std::nullopt, "bad"};
  EXPECT_FALSE(rubric_record_from_json(nlohmann::json::parse(rubric_line(un).dump())).score);
}

TEST(Export, ReExportIsByteIdentical) {
  auto ts = make_tables(four_items());
  for (auto fmt : {ExportFormat::csv, ExportFormat::markdown}) {
    auto d1 = scratch_dir("report-a"), d2 = scratch_dir("report-b");
    auto w1 = export_tables(ts, d1, fmt);
    auto w2 = export_tables(ts, d2, fmt);
    ASSERT_EQ(w1.size(), w2.size());
    EXPECT_EQ(w1.size(), fmt == ExportFormat::csv ? 14u : 2u);
    for (std::size_t i = 0; i < w1.size(); ++i) EXPECT_EQ(slurp(w1[i]), slurp(w2[i])) << w1[i];
  }
  EXPECT_EQ(parse_export_format("MD"), ExportFormat::markdown);
  EXPECT_THROW(parse_export_format("xlsx"), ConfigError);
}
