#include <gtest/gtest.h>

#include "morphgen/corpus_io.hpp"
#include "morphgen/prompt_engine.hpp"
#include "test_support.hpp"

using namespace morphgen;
using morphgen::testing::make_item;
using morphgen::testing::miswrote_item;
using morphgen::testing::source_path;

namespace {

const TemplateRegistry& registry() {
  static const TemplateRegistry reg = TemplateRegistry::load(source_path("templates/v1"));
  return reg;
}

Corpus diff_pool(std::vector<double> diffs, QuestionType qt = QuestionType::QT1) {
  Corpus c;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    c.items.push_back(make_item("p" + std::to_string(i), qt, "What is the prefix?", {"a", "b", "c"}, 0, diffs[i]));
  }
  return c;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST(SelectExemplars, TypeFilterAndStability) {
  auto pool = diff_pool({1, 2, 3, 4, 5});
  pool.items.push_back(make_item("other", QuestionType::QT2, "s?", {"a", "b"}, 0));
  GenerationSpec spec;
  spec.qt = QuestionType::QT1;
  spec.exemplar_count = 3;
  auto a = select_exemplars(pool, spec);
  auto b = select_exemplars(pool, spec);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a, b);
  for (const auto& it : a) EXPECT_EQ(it.qt, QuestionType::QT1);
}

TEST(SelectExemplars, InsufficientPool) {
  auto pool = diff_pool({1, 2, 3}, QuestionType::QT2);
  GenerationSpec spec;
  spec.qt = QuestionType::QT1;
  EXPECT_THROW(select_exemplars(pool, spec), ValidationError);
}

TEST(SelectExemplars, GreedyTraceNearestThenSpread) {
  // target 3: nearest is 3; then farthest from {3} is 1 or 5 (tie 2), nearer
  // to target ties, lower difficulty wins -> 1; then 5 (distance 2 from 3).
  auto pool = diff_pool({1, 1, 3, 5});
  GenerationSpec spec;
  spec.target_word_diff = 3;
  spec.exemplar_count = 3;
  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    spec.seed = seed;
    auto ex = select_exemplars(pool, spec);
    ASSERT_EQ(ex.size(), 3u);
    EXPECT_EQ(ex[0].word_diff.recoded, 3);
    EXPECT_EQ(ex[1].word_diff.recoded, 1);
    EXPECT_EQ(ex[2].word_diff.recoded, 5);
  }
}

TEST(Render, ZeroShotNamesTheFormat) {
  GenerationSpec spec;
  spec.qt = QuestionType::QT1;
  auto plan = render(registry(), StrategyId::zero_shot, spec);
  ASSERT_EQ(plan.turns.size(), 1u);
  EXPECT_NE(plan.turns[0].text.find("prefix"), std::string::npos);
  EXPECT_NE(plan.turns[0].text.find("Question type: QT1"), std::string::npos);
}

TEST(Render, FewShotHasExactlyKExemplarBlocks) {
  GenerationSpec spec;
  spec.exemplar_count = 3;
  auto ex = select_exemplars(diff_pool({1, 2, 3, 4, 5}), spec);
  auto plan = render(registry(), StrategyId::few_shot, spec, ex);
  ASSERT_EQ(plan.turns.size(), 1u);
  EXPECT_EQ(count(plan.turns[0].text, "### Example "), 3u);
  EXPECT_EQ(count(plan.turns[0].text, "Answer: A"), 3u);
}

TEST(Render, ExemplarsOnlyForFewShot) {
  GenerationSpec spec;
  EXPECT_THROW(render(registry(), StrategyId::few_shot, spec), ValidationError);
  std::vector<Item> ex{miswrote_item()};
  EXPECT_THROW(render(registry(), StrategyId::cot, spec, ex), ValidationError);
}

TEST(Render, RoleStrategyCarriesTeacherPassage) {
  GenerationSpec spec;
  spec.qt = QuestionType::QT9;
  auto plan = render(registry(), StrategyId::cot_role, spec);
  const auto& t = plan.turns[0].text;
  EXPECT_EQ(plan.turns[0].label, TurnLabel::persona);
  EXPECT_NE(t.find("Teacher"), std::string::npos);
  EXPECT_NE(t.find("grade-level suitability"), std::string::npos);
}

TEST(Render, EveryStrategyAndTypeFillsAllPlaceholders) {
  Corpus pool;
  for (auto qt : all_question_types()) {
    for (int i = 0; i < 3; ++i) {
      pool.items.push_back(make_item(to_string(qt) + "-" + std::to_string(i), qt, "Stem?", {"a", "b", "c"}, 0,
                                     1.0 + i));
    }
  }
  for (auto s : kAllStrategies) {
    for (auto qt : all_question_types()) {
      GenerationSpec spec;
      spec.qt = qt;
      std::optional<std::vector<Item>> ex;
      if (s == StrategyId::few_shot) ex = select_exemplars(pool, spec);
      auto plan = render(registry(), s, spec, ex);
      EXPECT_EQ(plan.turns.size(), s == StrategyId::cot_seq_multistep ? 3u : 1u);
      for (const auto& turn : plan.turns) {
        EXPECT_EQ(turn.text.find("{{"), std::string::npos) << to_string(s) << " " << to_string(qt);
        EXPECT_EQ(turn.text.find("}}"), std::string::npos);
      }
      EXPECT_EQ(render(registry(), s, spec, ex), plan);  // pure
    }
  }
}

TEST(Render, SpecChecks) {
  GenerationSpec spec;
  spec.target_word_diff = 6;
  EXPECT_THROW(render(registry(), StrategyId::zero_shot, spec), ValidationError);
  spec.target_word_diff = 2;
  spec.grade_band = " ";
  EXPECT_THROW(render(registry(), StrategyId::zero_shot, spec), ValidationError);
}

TEST(FillTemplate, UnboundAndUnterminated) {
  EXPECT_THROW(fill_template("a {{x}} b", {}), TemplateError);
  EXPECT_THROW(fill_template("a {{x b", {{"x", "1"}}), TemplateError);
  EXPECT_EQ(fill_template("{{x}}{{x}}", {{"x", "{{y}}"}}), "{{y}}{{y}}");
}

TEST(TemplateRegistry, MissingDirectory) {
  EXPECT_THROW(TemplateRegistry::load("/nonexistent/templates"), IoError);
}

TEST(BindStepInputs, ChosenWordSubstituted) {
  GenerationSpec spec;
  auto plan = render(registry(), StrategyId::cot_seq_multistep, spec);
  auto t2 = bind_step_inputs(plan, {"Chosen word: miswrote"});
  EXPECT_NE(t2.find("miswrote"), std::string::npos);
  EXPECT_EQ(t2.find(kChosenWordSlot), std::string::npos);
}

TEST(BindStepInputs, EmptyFirstReply) {
  GenerationSpec spec;
  auto plan = render(registry(), StrategyId::cot_seq_multistep, spec);
  EXPECT_THROW(bind_step_inputs(plan, {""}), StepBindingError);
}

TEST(BindStepInputs, DraftOptionsCarriedIntoRefinement) {
  GenerationSpec spec;
  auto plan = render(registry(), StrategyId::cot_seq_multistep, spec);
  const std::string draft = "What is the prefix in the word *miswrote*?\nA. mis\nB. misw\nC. ote\nAnswer: A";
  auto t3 = bind_step_inputs(plan, {"miswrote", draft});
  for (const char* opt : {"A. mis", "B. misw", "C. ote"}) EXPECT_NE(t3.find(opt), std::string::npos);
  EXPECT_EQ(t3.find(kDraftItemSlot), std::string::npos);
  EXPECT_THROW(bind_step_inputs(plan, {"miswrote", draft, "x"}), ValidationError);
}

TEST(BindStepInputs, OnlyForMultiStep) {
  GenerationSpec spec;
  auto plan = render(registry(), StrategyId::cot, spec);
  EXPECT_THROW(bind_step_inputs(plan, {}), ValidationError);
}

TEST(ExtractChosenWord, Forms) {
  EXPECT_EQ(extract_chosen_word("I pick this.\nChosen word: **rehammering**"), "rehammering");
  EXPECT_EQ(extract_chosen_word("  unkind. "), "unkind");
  EXPECT_EQ(extract_chosen_word("Let us go with *careless* for this one"), "careless");
  EXPECT_EQ(extract_chosen_word("no single word here"), "");
}
