#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "morphgen/error.hpp"
#include "morphgen/text.hpp"

namespace morphgen {

// The thirteen morphological question formats of the item bank.
enum class QuestionType : std::uint8_t {
  QT1 = 1, QT2, QT3, QT4, QT5, QT6, QT7, QT8, QT9, QT10, QT11, QT12, QT13
};

inline constexpr std::size_t kQuestionTypeCount = 13;

inline constexpr std::array<std::string_view, kQuestionTypeCount> kQuestionTypeDescriptions = {
    "Identify the prefix in a word from three choices.",
    "Identify the suffix in a word from three choices.",
    "Identify the root word in a word from three choices.",
    "Choose the word that does not share the same prefix as the others.",
    "Choose the word that does not share the same suffix as the others.",
    "Choose the correct transformed word based on a meaning shift.",
    "Select the correct meaning of an affixed word from three choices.",
    "Choose the correct spelling of a word with a suffix, avoiding two misspellings.",
    "Break a word into its prefix, root, and suffix from three given segmentations.",
    "Select the correct definition of the prefix in a word.",
    "Select the correct definition of the root word in an affixed word.",
    "Select the correct definition or function of the suffix in a word.",
    "Determine the meaning of a complex word based on its morphemes.",
};

inline constexpr std::array<QuestionType, kQuestionTypeCount> all_question_types() {
  std::array<QuestionType, kQuestionTypeCount> out{};
  for (std::size_t i = 0; i < kQuestionTypeCount; ++i) out[i] = static_cast<QuestionType>(i + 1);
  return out;
}

inline int qt_number(QuestionType qt) { return static_cast<int>(qt); }

inline std::string to_string(QuestionType qt) { return "QT" + std::to_string(qt_number(qt)); }

inline std::string_view description(QuestionType qt) {
  return kQuestionTypeDescriptions[static_cast<std::size_t>(qt_number(qt) - 1)];
}

// Accepts "QT7", "qt7" or "7".
inline QuestionType parse_question_type(std::string_view s) {
  auto t = text::trim(s);
  std::string_view digits = t;
  if (t.size() > 2 && (t[0] == 'Q' || t[0] == 'q') && (t[1] == 'T' || t[1] == 't')) digits = t.substr(2);
  int n = 0;
  if (digits.empty() || digits.size() > 2) throw ValidationError("unknown question type '" + std::string(s) + "'");
  for (char c : digits) {
    if (!text::is_digit(c)) throw ValidationError("unknown question type '" + std::string(s) + "'");
    n = n * 10 + (c - '0');
  }
  if (n < 1 || n > static_cast<int>(kQuestionTypeCount)) {
    throw ValidationError("unknown question type '" + std::string(s) + "'");
  }
  return static_cast<QuestionType>(n);
}

enum class SkillFocus { recognition, comprehension, problem_solving };

inline std::string to_string(SkillFocus s) {
  switch (s) {
    case SkillFocus::recognition: return "recognition";
    case SkillFocus::comprehension: return "comprehension";
    case SkillFocus::problem_solving: return "problem-solving";
  }
  return {};
}

inline SkillFocus parse_skill(std::string_view s) {
  auto v = text::lower(text::trim(s));
  if (v == "recognition") return SkillFocus::recognition;
  if (v == "comprehension") return SkillFocus::comprehension;
  if (v == "problem-solving" || v == "problem_solving") return SkillFocus::problem_solving;
  throw ValidationError("unknown skill focus '" + std::string(s) + "'");
}

enum class MorphCategory {
  derivational,
  inflectional,
  inflectional_and_derivational,
  define,
  syntactic,
  address_word_parts,
};

inline std::string to_string(MorphCategory m) {
  switch (m) {
    case MorphCategory::derivational: return "derivational";
    case MorphCategory::inflectional: return "inflectional";
    case MorphCategory::inflectional_and_derivational: return "inflectional_and_derivational";
    case MorphCategory::define: return "define";
    case MorphCategory::syntactic: return "syntactic";
    case MorphCategory::address_word_parts: return "address_word_parts";
  }
  return {};
}

inline MorphCategory parse_morph(std::string_view s) {
  auto v = text::lower(text::trim(s));
  if (v == "derivational") return MorphCategory::derivational;
  if (v == "inflectional") return MorphCategory::inflectional;
  if (v == "inflectional_and_derivational" || v == "inflectional & derivational") {
    return MorphCategory::inflectional_and_derivational;
  }
  if (v == "define") return MorphCategory::define;
  if (v == "syntactic") return MorphCategory::syntactic;
  if (v == "address_word_parts" || v == "address word parts") return MorphCategory::address_word_parts;
  throw ValidationError("unknown morphological category '" + std::string(s) + "'");
}

// Skill focus and category used for generated items when no metadata says
// otherwise.
inline SkillFocus default_skill(QuestionType qt) {
  switch (qt) {
    case QuestionType::QT6:
    case QuestionType::QT8:
    case QuestionType::QT13: return SkillFocus::problem_solving;
    case QuestionType::QT7:
    case QuestionType::QT10:
    case QuestionType::QT11:
    case QuestionType::QT12: return SkillFocus::comprehension;
    default: return SkillFocus::recognition;
  }
}

// ---------------------------------------------------------------------------
// Difficulty

inline bool is_half_step(double raw) {
  double doubled = raw * 2.0;
  return std::abs(doubled - std::round(doubled)) < 1e-9;
}

// Half-point ratings merge with the lower integer: 1.5 -> 1, 4.5 -> 4.
inline int recode_word_difficulty(double raw) {
  if (!std::isfinite(raw) || raw < 1.0 - 1e-9 || raw > 5.0 + 1e-9 || !is_half_step(raw)) {
    throw ValidationError("word difficulty " + text::fixed(raw, 3) +
                          " is not a half-step rating in [1.0, 5.0]");
  }
  return static_cast<int>(std::floor(std::round(raw * 2.0) / 2.0));
}

struct WordDifficulty {
  double raw = 1.0;
  int recoded = 1;

  static WordDifficulty from_raw(double raw) { return {raw, recode_word_difficulty(raw)}; }
  friend bool operator==(const WordDifficulty&, const WordDifficulty&) = default;
};

enum class TaskLevel { easy, medium, hard };

inline std::string to_string(TaskLevel t) {
  switch (t) {
    case TaskLevel::easy: return "easy";
    case TaskLevel::medium: return "medium";
    case TaskLevel::hard: return "hard";
  }
  return {};
}

inline TaskLevel parse_task_level(std::string_view s) {
  auto v = text::lower(text::trim(s));
  if (v == "easy") return TaskLevel::easy;
  if (v == "medium") return TaskLevel::medium;
  if (v == "hard") return TaskLevel::hard;
  throw ValidationError("unknown task difficulty level '" + std::string(s) + "'");
}

// Two strictly increasing cut points over floor(raw).
struct TaskThresholds {
  double first = 2.0;
  double second = 3.0;

  static TaskThresholds from_table(std::span<const double> cuts) {
    if (cuts.size() != 2) {
      throw ConfigError("task difficulty threshold table needs exactly 2 cut points, got " +
                        std::to_string(cuts.size()));
    }
    TaskThresholds t{cuts[0], cuts[1]};
    t.check();
    return t;
  }

  void check() const {
    if (!std::isfinite(first) || !std::isfinite(second) || !(first < second)) {
      throw ConfigError("task difficulty cut points must be finite and strictly increasing");
    }
  }
};

inline TaskLevel recode_task_difficulty(double raw, const TaskThresholds& cuts = {}) {
  cuts.check();
  if (!std::isfinite(raw)) throw ValidationError("task difficulty must be finite");
  double level = std::floor(raw);
  if (level < cuts.first) return TaskLevel::easy;
  if (level < cuts.second) return TaskLevel::medium;
  return TaskLevel::hard;
}

inline TaskLevel recode_task_difficulty(double raw, std::span<const double> cuts) {
  return recode_task_difficulty(raw, TaskThresholds::from_table(cuts));
}

struct TaskDifficulty {
  double raw = 1.0;
  TaskLevel recoded = TaskLevel::easy;

  static TaskDifficulty from_raw(double raw, const TaskThresholds& cuts = {}) {
    return {raw, recode_task_difficulty(raw, cuts)};
  }
  friend bool operator==(const TaskDifficulty&, const TaskDifficulty&) = default;
};

// ---------------------------------------------------------------------------
// Item

inline constexpr std::size_t kDefaultOptionCount = 3;
inline constexpr std::size_t kMinOptionCount = 2;
inline constexpr std::size_t kMaxOptionCount = 5;

struct Item {
  std::string id;
  std::string stem;
  std::vector<std::string> options;
  std::size_t answer_index = 0;
  QuestionType qt = QuestionType::QT1;
  SkillFocus skill = SkillFocus::recognition;
  MorphCategory morph = MorphCategory::derivational;
  WordDifficulty word_diff;
  TaskDifficulty task_diff;
  std::string target_word;
  std::optional<std::string> target_morpheme;

  friend bool operator==(const Item&, const Item&) = default;
};

inline char option_letter(std::size_t index) { return static_cast<char>('A' + index); }

struct Violation {
  std::string field;
  std::string rule;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

// Empty iff every structural invariant of the item holds.
inline std::vector<Violation> validate_item(const Item& item) {
  std::vector<Violation> out;
  if (text::trim(item.id).empty()) out.push_back({"id", "non_empty", "item id is empty"});
  if (text::word_count(item.stem) < 1) out.push_back({"stem", "min_words", "stem has no words"});

  const auto n = item.options.size();
  if (n < kMinOptionCount || n > kMaxOptionCount) {
    out.push_back({"options", "count", "option count " + std::to_string(n) + " outside [" +
                                           std::to_string(kMinOptionCount) + ", " +
                                           std::to_string(kMaxOptionCount) + "]"});
  }
  if (item.answer_index >= n) {
    out.push_back({"answer_index", "in_range", "answer index " + std::to_string(item.answer_index) +
                                                   " not below option count " + std::to_string(n)});
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < n; ++i) {
    auto key = text::normalize_option(item.options[i]);
    if (key.empty()) {
      out.push_back({"options", "non_empty", std::string("option ") + option_letter(i) + " is empty"});
      continue;
    }
    if (!seen.insert(key).second) {
      out.push_back({"options", "distinct",
                     std::string("option ") + option_letter(i) + " duplicates an earlier option (\"" + key + "\")"});
    }
  }
  bool word_ok = is_half_step(item.word_diff.raw) && item.word_diff.raw >= 1.0 - 1e-9 &&
                 item.word_diff.raw <= 5.0 + 1e-9;
  if (!word_ok) {
    out.push_back({"word_diff", "half_step", "raw word difficulty " + text::fixed(item.word_diff.raw, 3) +
                                                 " is not a half-step rating in [1, 5]"});
  } else if (item.word_diff.recoded != recode_word_difficulty(item.word_diff.raw)) {
    out.push_back({"word_diff", "floor_recode", "recoded word difficulty does not equal floor(raw)"});
  }
  return out;
}

}  // namespace morphgen
