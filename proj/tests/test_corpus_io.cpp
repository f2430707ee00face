#include <gtest/gtest.h>

#include "morphgen/corpus_io.hpp"
#include "test_support.hpp"

using namespace morphgen;
using morphgen::testing::make_item;
using morphgen::testing::source_path;

namespace {

std::string record(const std::string& id, const std::string& extra = "") {
  return R"({"id":")" + id +
         R"(","stem":"What is the prefix in the word unhappy?","options":["un","unh","happy"],"answer_index":0,)"
         R"("qt":"QT1","skill":"recognition","morph":"derivational","word_diff_raw":1.5,"task_diff_raw":2.5)" +
         extra + "}";
}

}  // namespace

TEST(LoadCorpus, ThreeValidRecords) {
  auto c = parse_corpus(record("a") + "\n" + record("b") + "\n" + record("c") + "\n", CorpusFormat::jsonl);
  ASSERT_EQ(c.items.size(), 3u);
  EXPECT_EQ(c.items[1].id, "b");
  EXPECT_EQ(c.items[0].word_diff.recoded, 1);
  EXPECT_EQ(c.items[0].task_diff.recoded, TaskLevel::medium);
}

TEST(LoadCorpus, MissingAnswerNamesLine) {
  std::string bad = R"({"id":"q2","stem":"s?","options":["a","b","c"],"qt":"QT1","skill":"recognition",)"
                    R"("morph":"derivational","word_diff_raw":1,"task_diff_raw":1})";
  try {
    parse_corpus(record("q1") + "\n" + bad + "\n", CorpusFormat::jsonl);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("answer"), std::string::npos);
  }
}

TEST(LoadCorpus, DuplicateId) {
  EXPECT_THROW(parse_corpus(record("q1") + "\n" + record("q1") + "\n", CorpusFormat::jsonl), DuplicateIdError);
}

TEST(LoadCorpus, ReportsEveryBadLine) {
  try {
    parse_corpus(record("a") + "\n{not json\n" + record("b", R"(,"qt2":1)") + "\n" +
                     R"({"id":"c","stem":"s","options":["a","b"],"answer":"Z","qt":"QT1","skill":"recognition",)"
                     R"("morph":"derivational","word_diff_raw":1,"task_diff_raw":1})",
                 CorpusFormat::jsonl);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("2 bad record"), std::string::npos);
  }
}

TEST(LoadCorpus, AnswerLetterAndSchemaHeader) {
  std::string rec = R"({"id":"z","stem":"s?","options":["a","b","c"],"answer":"b","qt":"7","skill":"comprehension",)"
                    R"("morph":"define","word_diff_raw":"3.5","task_diff_raw":4})";
  auto c = parse_corpus(std::string(R"({"schema_version":"morphgen.items/1"})") + "\n" + rec + "\n", CorpusFormat::jsonl);
  ASSERT_EQ(c.items.size(), 1u);
  EXPECT_EQ(c.items[0].answer_index, 1u);
  EXPECT_EQ(c.items[0].qt, QuestionType::QT7);
  EXPECT_EQ(c.items[0].word_diff.recoded, 3);
  EXPECT_EQ(c.items[0].task_diff.recoded, TaskLevel::hard);
}

TEST(LoadCorpus, CsvWithQuotedFields) {
  std::string csv =
      "id,stem,options,answer_index,qt,skill,morph,word_diff_raw,task_diff_raw,target_word\n"
      "c1,\"Which word, if any, is odd?\",\"unhappy|unkind|under\",2,QT4,recognition,derivational,2,2,\n";
  auto c = parse_corpus(csv, CorpusFormat::csv);
  ASSERT_EQ(c.items.size(), 1u);
  EXPECT_EQ(c.items[0].stem, "Which word, if any, is odd?");
  ASSERT_EQ(c.items[0].options.size(), 3u);
  EXPECT_EQ(c.items[0].options[2], "under");
}

TEST(LoadCorpus, TaskThresholdsAreConfigurable) {
  LoadOptions opts;
  opts.task_thresholds = {3.0, 4.0};
  auto c = parse_corpus(record("a") + "\n", CorpusFormat::jsonl, "", opts);
  EXPECT_EQ(c.items[0].task_diff.recoded, TaskLevel::easy);
}

TEST(SaveCorpus, RoundTripPreservesItemsAndSummary) {
  auto c = load_corpus(source_path("data/sample_corpus.jsonl"));
  auto again = parse_corpus(serialize_corpus(c), CorpusFormat::jsonl);
  EXPECT_EQ(again.items, c.items);
  EXPECT_EQ(summarize(again), summarize(c));
  EXPECT_EQ(serialize_corpus(again), serialize_corpus(c));
}

TEST(Summarize, SingleItem) {
  Corpus c;
  c.items.push_back(make_item("a", QuestionType::QT2, "one two three four five six seven eight", {"a", "b"}, 0));
  auto s = summarize(c);
  EXPECT_EQ(s.total, 1u);
  EXPECT_DOUBLE_EQ(s.stem_words_mean, 8.0);
  EXPECT_EQ(s.stem_words_min, 8u);
  EXPECT_EQ(s.stem_words_max, 8u);
}

TEST(Summarize, HandTally) {
  Corpus c;
  c.items.push_back(make_item("1", QuestionType::QT1, "a b c", {"x", "y"}, 0, 1.0, 1.0));
  c.items.push_back(make_item("2", QuestionType::QT1, "a b c d", {"x", "y"}, 0, 1.5, 2.0));
  c.items.push_back(make_item("3", QuestionType::QT7, "a b", {"x", "y"}, 0, 2.0, 3.0));
  c.items.push_back(make_item("4", QuestionType::QT8, "a b c d e", {"x", "y"}, 0, 4.5, 2.5));
  c.items.push_back(make_item("5", QuestionType::QT13, "a", {"x", "y"}, 0, 5.0, 4.0));
  c.items.push_back(make_item("6", QuestionType::QT10, "a b c d e f", {"x", "y"}, 0, 3.0, 1.5));
  auto s = summarize(c);
  EXPECT_EQ(count_of(s.by_qt, "QT1"), 2u);
  EXPECT_EQ(count_of(s.by_qt, "QT5"), 0u);
  EXPECT_EQ(count_of(s.by_skill, "recognition"), 2u);
  EXPECT_EQ(count_of(s.by_skill, "comprehension"), 2u);
  EXPECT_EQ(count_of(s.by_skill, "problem-solving"), 2u);
  EXPECT_EQ(count_of(s.by_word_diff, "1"), 2u);
  EXPECT_EQ(count_of(s.by_word_diff, "4"), 1u);
  EXPECT_EQ(count_of(s.by_task_diff, "easy"), 2u);
  EXPECT_EQ(count_of(s.by_task_diff, "medium"), 2u);
  EXPECT_EQ(count_of(s.by_task_diff, "hard"), 2u);
  EXPECT_DOUBLE_EQ(s.stem_words_mean, 21.0 / 6.0);
  EXPECT_EQ(s.stem_words_min, 1u);
  EXPECT_EQ(s.stem_words_max, 6u);
}

TEST(Summarize, EmptyCorpusRejected) { EXPECT_THROW(summarize(Corpus{}), ValidationError); }
