#pragma once

#include <string>
#include <vector>

#include "morphgen/corpus_io.hpp"
#include "morphgen/item_parser.hpp"
#include "morphgen/surface_form.hpp"

namespace morphgen::testing {

struct MalformedCase {
  std::string name;
  std::string raw;
  std::string code;
};

// Ten broken model outputs and the fatal code each must produce.
inline std::vector<MalformedCase> malformed_cases() {
  return {
      {"empty", "   \n\n", "EMPTY_INPUT"},
      {"no_stem", "A. mis\nB. misw\nC. ote\nAnswer: A", "NO_STEM"},
      {"missing_c", "What is the prefix in the word *miswrote*?\nA. mis\nB. misw\nAnswer: A", "OPTION_COUNT"},
      {"skipped_letter", "What is the prefix in the word *miswrote*?\nA. mis\nB. misw\nD. ote\nAnswer: A",
       "OPTION_SEQUENCE"},
      {"repeated_letter", "What is the prefix in the word *miswrote*?\nA. mis\nA. misw\nB. ote\nAnswer: A",
       "DUPLICATE_LETTER"},
      {"blank_option", "What is the prefix in the word *miswrote*?\nA. mis\nB. \nC. ote\nAnswer: A",
       "EMPTY_OPTION"},
      {"same_option_twice", "What is the prefix in the word *miswrote*?\nA. mis\nB. Mis\nC. ote\nAnswer: A",
       "DUPLICATE_OPTION"},
      {"no_answer", "What is the prefix in the word *miswrote*?\nA. mis\nB. misw\nC. ote", "ANSWER_MISSING"},
      {"answer_d", "What is the prefix in the word *miswrote*?\nA. mis\nB. misw\nC. ote\nAnswer: D", "ANSWER_RANGE"},
      {"two_answers", "What is the prefix in the word *miswrote*?\nA. mis\nB. misw\nC. ote\nAnswer: A\nAnswer: B",
       "ANSWER_CONFLICT"},
  };
}

// Metadata that the surface form does not carry, taken from a reference item.
inline ParseContext context_for(const Item& ref) {
  ParseContext ctx;
  ctx.id = ref.id;
  ctx.skill = ref.skill;
  ctx.morph = ref.morph;
  ctx.word_diff = ref.word_diff;
  ctx.task_diff = ref.task_diff;
  ctx.target_morpheme = ref.target_morpheme;
  return ctx;
}

}  // namespace morphgen::testing
