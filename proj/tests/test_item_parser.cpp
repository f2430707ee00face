#include <gtest/gtest.h>

#include "morphgen/llm_gateway.hpp"
#include "parser_fixtures.hpp"
#include "test_support.hpp"

using namespace morphgen;
using namespace morphgen::testing;

namespace {

const Corpus& reference_items() {
  static const Corpus c = load_corpus(source_path("data/reference_items.jsonl"));
  return c;
}

const Lexicon& lexicon() {
  static const Lexicon lex = Lexicon::load(source_path("data/lexicon/reference_items.txt"));
  return lex;
}

std::vector<std::string> codes(const std::vector<Diagnostic>& ds) {
  std::vector<std::string> out;
  for (const auto& d : ds) out.push_back(d.code);
  return out;
}

}  // namespace

TEST(ParseItem, ReferenceQt1) {
  auto r = parse_item("What is the prefix in the word *miswrote*?\nA. mis\nB. misw\nC. ote\nAnswer: A", QuestionType::QT1);
  ASSERT_TRUE(r.item) << ::testing::PrintToString(codes(r.diagnostics));
  EXPECT_EQ(r.item->stem, "What is the prefix in the word miswrote?");
  EXPECT_EQ(r.item->options, (std::vector<std::string>{"mis", "misw", "ote"}));
  EXPECT_EQ(r.item->answer_index, 0u);
  EXPECT_EQ(r.item->target_word, "miswrote");
  EXPECT_FALSE(r.fatal());
}

TEST(ParseItem, MalformedOutputsCarryTheirCode) {
  for (const auto& c : malformed_cases()) {
    auto r = parse_item(c.raw, QuestionType::QT1);
    EXPECT_FALSE(r.item.has_value()) << c.name;
    EXPECT_TRUE(r.fatal()) << c.name;
    EXPECT_TRUE(r.has(c.code)) << c.name << " got " << ::testing::PrintToString(codes(r.diagnostics));
  }
}

TEST(ParseItem, NoisyChatReply) {
  const std::string raw =
      "Sure! Here is my reasoning about the word.\n\n"
      "**Final item:**\n"
      "QT9. Break the word ***rehammering*** into parts based on prefixes, roots, and suffixes.\n\n"
      "- **A.** re/hammering\n"
      "- **B.** re/hammer/ing\n"
      "- **C.** re/ham/mering\n\n"
      "**Answer: B**\n\n"
      "Let me know if you need more.";
  auto r = parse_item(raw, QuestionType::QT9);
  ASSERT_TRUE(r.item) << ::testing::PrintToString(codes(r.diagnostics));
  EXPECT_EQ(r.item->stem, "Break the word rehammering into parts based on prefixes, roots, and suffixes.");
  EXPECT_EQ(r.item->options[1], "re/hammer/ing");
  EXPECT_EQ(r.item->answer_index, 1u);
  EXPECT_TRUE(r.has("MARKUP_STRIPPED"));
  EXPECT_TRUE(r.has("TRAILING_TEXT"));
}

TEST(ParseItem, DraftBeforeFinalIsIgnored) {
  const std::string raw =
      "Draft:\nWhat is the prefix in *unkind*?\nA. u\nB. un\nC. kind\nAnswer: B\n\n"
      "Refined item:\nWhat is the prefix in the word *unkind*?\nA. un\nB. unk\nC. kind\nAnswer: A";
  auto r = parse_item(raw, QuestionType::QT1);
  ASSERT_TRUE(r.item);
  EXPECT_EQ(r.item->options, (std::vector<std::string>{"un", "unk", "kind"}));
  EXPECT_EQ(r.item->answer_index, 0u);
}

TEST(ParseItem, ParenthesizedLettersAndAnswerPhrase) {
  auto r = parse_item("Which word has a suffix?\n(a) jumped\n(b) jump\n(c) jumper\nThe correct answer is (A).", QuestionType::QT2);
  ASSERT_TRUE(r.item) << ::testing::PrintToString(codes(r.diagnostics));
  EXPECT_EQ(r.item->answer_index, 0u);
  EXPECT_TRUE(r.has("TARGET_UNRESOLVED"));
}

TEST(ParseItem, InvalidAnswerValue) {
  auto r = parse_item("What?\nA. x\nB. y\nC. z\nAnswer: none of these", QuestionType::QT7);
  EXPECT_TRUE(r.has("ANSWER_INVALID"));
  EXPECT_FALSE(r.has("ANSWER_MISSING"));
  EXPECT_FALSE(r.item);
}

TEST(ParseItem, ConfigurableOptionCount) {
  ParseContext ctx;
  ctx.expected_option_count = 4;
  auto r = parse_item("What?\nA. w\nB. x\nC. y\nD. z\nAnswer: D", QuestionType::QT7, ctx);
  ASSERT_TRUE(r.item);
  EXPECT_EQ(r.item->answer_index, 3u);
}

TEST(ParseItem, QuotedTargetWord) {
  auto r = parse_item("What does the root in \"transport\" mean?\nA. carry\nB. across\nC. ship\nAnswer: A",
                      QuestionType::QT11);
  ASSERT_TRUE(r.item);
  EXPECT_EQ(r.item->target_word, "transport");
}

TEST(ParseItem, DiagnosticSpansPointIntoInput) {
  const std::string raw = "What?\nA. x\nB. x\nC. z\nAnswer: A";
  auto r = parse_item(raw, QuestionType::QT7);
  ASSERT_TRUE(r.has("DUPLICATE_OPTION"));
  for (const auto& d : r.diagnostics) {
    if (d.code == "DUPLICATE_OPTION") {
      EXPECT_EQ(raw.substr(d.span.begin, d.span.end - d.span.begin), "B. x");
    }
  }
}

TEST(ReferenceItems, RoundTripThroughSurfaceForm) {
  ASSERT_EQ(reference_items().items.size(), 13u);
  for (const auto& ref : reference_items().items) {
    auto r = parse_item(serialize_item(ref), ref.qt, context_for(ref));
    ASSERT_TRUE(r.item) << ref.id << " " << ::testing::PrintToString(codes(r.diagnostics));
    EXPECT_EQ(*r.item, ref) << ref.id;
  }
}

TEST(ReferenceItems, MockRepliesParse) {
  auto mock = MockBackend::from_file(source_path("data/mock/reference_items.json"));
  BackendConfig cfg;
  cfg.endpoint = "mock";
  cfg.model_name = "mock";
  for (const auto& ref : reference_items().items) {
    auto reply = mock->chat("Question type: " + to_string(ref.qt) + " (x)", cfg).text;
    auto r = parse_item(reply, ref.qt, context_for(ref));
    ASSERT_TRUE(r.item) << ref.id << " " << ::testing::PrintToString(codes(r.diagnostics));
    EXPECT_EQ(r.item->stem, ref.stem) << ref.id;
    EXPECT_EQ(r.item->options, ref.options) << ref.id;
    EXPECT_EQ(r.item->answer_index, ref.answer_index) << ref.id;
  }
}

TEST(ReferenceItems, MorphChecksClean) {
  MorphCheckOptions with_lex{&lexicon()};
  for (const auto& ref : reference_items().items) {
    for (const MorphCheckOptions& opts : {MorphCheckOptions{}, with_lex}) {
      auto rep = morph_checks(ref, opts);
      EXPECT_TRUE(rep.clean()) << ref.id << " " << ::testing::PrintToString(codes(rep.violations));
      // every type is either checked or explicitly unchecked
      EXPECT_EQ(rep.checks_run.size() + rep.unchecked.size(), 1u) << ref.id;
    }
  }
}

TEST(MorphChecks, Qt1AnswerNotLeading) {
  auto it = miswrote_item();
  it.answer_index = 2;  // "ote"
  auto rep = morph_checks(it);
  ASSERT_EQ(rep.violations.size(), 1u);
  EXPECT_EQ(rep.violations[0].code, "PREFIX_NOT_LEADING");
}

TEST(MorphChecks, Qt9Segmentation) {
  auto it = make_item("s", QuestionType::QT9, "Break the word rehammering into parts.",
                      {"re/hammering", "re/hammer/ing", "re/ham/mering"}, 1);
  it.target_word = "rehammering";
  EXPECT_TRUE(morph_checks(it).clean());
  it.options[1] = "re/hammer/ed";
  EXPECT_EQ(codes(morph_checks(it).violations), (std::vector<std::string>{"SEGMENTATION_MISMATCH"}));
}

TEST(MorphChecks, Qt2AndQt3) {
  auto it = make_item("s", QuestionType::QT2, "What is the suffix in *governmental*?", {"al", "mental", "govern"}, 2);
  EXPECT_EQ(codes(morph_checks(it).violations), (std::vector<std::string>{"SUFFIX_NOT_TRAILING"}));
  it.answer_index = 0;
  EXPECT_TRUE(morph_checks(it).clean());

  auto root = make_item("r", QuestionType::QT3, "What is the root word in *subspecialty*?", {"special", "species", "sub"}, 1);
  EXPECT_EQ(codes(morph_checks(root).violations), (std::vector<std::string>{"ROOT_NOT_CONTAINED"}));
}

TEST(MorphChecks, Qt5SharedSuffixHeuristic) {
  auto it = make_item("s", QuestionType::QT5, "Find the word that does NOT have the same suffix as the other two words.",
                      {"uniquely", "ugly", "usefully"}, 1);
  // without a wordlist the surface match on "ly" cannot be resolved
  auto bare = morph_checks(it);
  EXPECT_TRUE(bare.clean());
  ASSERT_EQ(bare.unchecked.size(), 1u);
  // with one, "ug" is not a word so "ugly" has no separable -ly
  MorphCheckOptions opts{&lexicon()};
  auto rep = morph_checks(it, opts);
  EXPECT_TRUE(rep.clean());
  EXPECT_EQ(rep.checks_run.size(), 1u);

  Lexicon lex({"sad", "warm", "quick"});
  it.options = {"sadly", "quickly", "warmly"};
  it.answer_index = 1;
  EXPECT_EQ(codes(morph_checks(it, {&lex}).violations), (std::vector<std::string>{"AFFIX_NOT_DISTINCT"}));

  it.options = {"sadness", "quickly", "gladly"};
  it.answer_index = 1;
  EXPECT_EQ(codes(morph_checks(it).violations), (std::vector<std::string>{"AFFIX_NOT_SHARED"}));
}

TEST(MorphChecks, Qt8NeedsWordlist) {
  auto it = make_item("s", QuestionType::QT8, "Select the correctly spelled word.",
                      {"prepublicashun", "prepublishation", "prepublication"}, 2);
  auto bare = morph_checks(it);
  EXPECT_TRUE(bare.checks_run.empty());
  ASSERT_EQ(bare.unchecked.size(), 1u);
  EXPECT_EQ(bare.unchecked[0].reason, "no wordlist configured");

  Lexicon lex({"prepublication"});
  EXPECT_TRUE(morph_checks(it, {&lex}).clean());
  it.answer_index = 0;
  EXPECT_EQ(codes(morph_checks(it, {&lex}).violations), (std::vector<std::string>{"LEXICON_ANSWER_MISMATCH"}));
  Lexicon both({"prepublication", "prepublishation"});
  EXPECT_EQ(codes(morph_checks(it, {&both}).violations), (std::vector<std::string>{"LEXICON_MATCH_COUNT"}));
}

TEST(MorphChecks, SemanticTypesAreUncheckedWithReason) {
  for (auto qt : {QuestionType::QT6, QuestionType::QT7, QuestionType::QT10, QuestionType::QT11, QuestionType::QT12,
                  QuestionType::QT13}) {
    auto it = make_item("s", qt, "What does it mean?", {"a", "b", "c"}, 0);
    auto rep = morph_checks(it);
    ASSERT_EQ(rep.unchecked.size(), 1u);
    EXPECT_STREQ(rep.unchecked[0].reason.c_str(), kSemanticReason);
    EXPECT_TRUE(rep.checks_run.empty());
  }
}

TEST(MorphChecks, UnresolvedTargetIsAPrecondition) {
  auto it = make_item("s", QuestionType::QT1, "Which of these is a prefix?", {"un", "ing", "ed"}, 0);
  auto rep = morph_checks(it);
  EXPECT_FALSE(rep.clean());
  EXPECT_EQ(codes(rep.preconditions), (std::vector<std::string>{"TARGET_UNRESOLVED"}));
  EXPECT_TRUE(rep.violations.empty());
}

TEST(ResolveTargetWord, Order) {
  auto it = miswrote_item();
  it.target_word = "explicit";
  EXPECT_EQ(resolve_target_word(it), "explicit");
  it.target_word = "";
  it.stem = "What is the prefix in the word *miswrote*?";
  EXPECT_EQ(resolve_target_word(it), "miswrote");
  it.stem = "What is the prefix in the word miswrote?";
  EXPECT_EQ(resolve_target_word(it), "miswrote");
}
