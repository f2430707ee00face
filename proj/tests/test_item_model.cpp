#include <gtest/gtest.h>

#include <random>

#include "morphgen/item_model.hpp"
#include "test_support.hpp"

using namespace morphgen;
using morphgen::testing::make_item;
using morphgen::testing::miswrote_item;

TEST(WordDifficulty, HalfStepsMergeDown) {
  EXPECT_EQ(recode_word_difficulty(1.5), 1);
  EXPECT_EQ(recode_word_difficulty(3.0), 3);
  EXPECT_EQ(recode_word_difficulty(4.5), 4);
  EXPECT_EQ(recode_word_difficulty(5.0), 5);
}

TEST(WordDifficulty, RejectsOffGridAndOutOfRange) {
  EXPECT_THROW(recode_word_difficulty(0.5), ValidationError);
  EXPECT_THROW(recode_word_difficulty(5.5), ValidationError);
  EXPECT_THROW(recode_word_difficulty(2.25), ValidationError);
  EXPECT_THROW(recode_word_difficulty(std::nan("")), ValidationError);
}

TEST(WordDifficulty, IdempotentOnIntegersAndMonotone) {
  for (int k = 1; k <= 5; ++k) {
    EXPECT_EQ(recode_word_difficulty(k), k);
    EXPECT_EQ(recode_word_difficulty(recode_word_difficulty(k)), k);
  }
  int prev = 0;
  for (int h = 2; h <= 10; ++h) {
    int r = recode_word_difficulty(h / 2.0);
    EXPECT_GE(r, prev);
    prev = r;
  }
}

TEST(WordDifficulty, FiveLevelPartitionCountsSum) {
  // 37 + 63 + 87 + 69 + 12 items spread over the half-step grid
  const int sizes[5] = {37, 63, 87, 69, 12};
  std::vector<double> raws;
  std::mt19937 rng(11);
  for (int level = 1; level <= 5; ++level) {
    for (int i = 0; i < sizes[level - 1]; ++i) {
      bool half = level < 5 && (rng() & 1);
      raws.push_back(level + (half ? 0.5 : 0.0));
    }
  }
  std::array<int, 6> counts{};
  for (double r : raws) ++counts[recode_word_difficulty(r)];
  EXPECT_EQ(counts[1] + counts[2] + counts[3] + counts[4] + counts[5], 268);
  for (int level = 1; level <= 5; ++level) EXPECT_EQ(counts[level], sizes[level - 1]);
}

TEST(TaskDifficulty, DefaultCuts) {
  EXPECT_EQ(recode_task_difficulty(1.0), TaskLevel::easy);
  EXPECT_EQ(recode_task_difficulty(2.5), TaskLevel::medium);
  EXPECT_EQ(recode_task_difficulty(5.0), TaskLevel::hard);
  EXPECT_EQ(recode_task_difficulty(2.999), TaskLevel::medium);
  EXPECT_EQ(recode_task_difficulty(3.0), TaskLevel::hard);
}

TEST(TaskDifficulty, CutTableMustHaveTwoIncreasingPoints) {
  const std::vector<double> one{2.0};
  const std::vector<double> flat{3.0, 3.0};
  const std::vector<double> custom{3.0, 5.0};
  EXPECT_THROW(recode_task_difficulty(1.0, one), ConfigError);
  EXPECT_THROW(recode_task_difficulty(1.0, flat), ConfigError);
  EXPECT_EQ(recode_task_difficulty(4.0, custom), TaskLevel::medium);
}

TEST(QuestionTypes, ParseAndPrint) {
  EXPECT_EQ(parse_question_type("QT7"), QuestionType::QT7);
  EXPECT_EQ(parse_question_type("qt13"), QuestionType::QT13);
  EXPECT_EQ(parse_question_type("4"), QuestionType::QT4);
  EXPECT_THROW(parse_question_type("QT14"), ValidationError);
  EXPECT_THROW(parse_question_type("QT0"), ValidationError);
  for (auto qt : all_question_types()) EXPECT_EQ(parse_question_type(to_string(qt)), qt);
  EXPECT_NE(description(QuestionType::QT1).find("prefix"), std::string_view::npos);
}

TEST(ValidateItem, ReferenceItemIsClean) { EXPECT_TRUE(validate_item(miswrote_item()).empty()); }

TEST(ValidateItem, AnswerIndexAtOptionCount) {
  auto it = miswrote_item();
  it.answer_index = it.options.size();
  auto v = validate_item(it);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].field, "answer_index");
}

TEST(ValidateItem, NormalizedDuplicateOptions) {
  auto it = miswrote_item();
  it.options = {"mis", "mis ", "ote"};
  auto v = validate_item(it);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, "distinct");

  it.options = {"Mis  take", "mis take", "ote"};
  EXPECT_EQ(validate_item(it).size(), 1u);
}

TEST(ValidateItem, OptionCountBounds) {
  auto it = make_item("x", QuestionType::QT1, "Pick one?", {"a"}, 0);
  EXPECT_FALSE(validate_item(it).empty());
  it.options = {"a", "b", "c", "d", "e"};
  EXPECT_TRUE(validate_item(it).empty());
  it.options.push_back("f");
  EXPECT_FALSE(validate_item(it).empty());
}

TEST(ValidateItem, EmptyStemAndId) {
  auto it = miswrote_item();
  it.stem = "  ";
  it.id = "";
  EXPECT_EQ(validate_item(it).size(), 2u);
}

TEST(ValidateItem, InconsistentRecodedWordDifficulty) {
  auto it = miswrote_item();
  it.word_diff = {2.5, 3};
  auto v = validate_item(it);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].field, "word_diff");
}

TEST(DefaultSkill, CoversEveryType) {
  EXPECT_EQ(default_skill(QuestionType::QT1), SkillFocus::recognition);
  EXPECT_EQ(default_skill(QuestionType::QT7), SkillFocus::comprehension);
  EXPECT_EQ(default_skill(QuestionType::QT13), SkillFocus::problem_solving);
}
