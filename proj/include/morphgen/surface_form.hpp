#pragma once

// The plain-text item form used in prompts and expected back from models:
//
//   What is the prefix in the word *miswrote*?
//   A. mis
//   B. misw
//   C. ote
//   Answer: A

#include <string>

#include "morphgen/item_model.hpp"
#include "morphgen/text.hpp"

namespace morphgen {

namespace detail {

inline bool is_word_char(char c) { return text::is_alpha(c) || text::is_digit(c) || c == '\'' || c == '-'; }

// Position of the last whole-word occurrence of `word` in `s`, or npos.
inline std::size_t last_whole_word(std::string_view s, std::string_view word) {
  if (word.empty()) return std::string_view::npos;
  std::size_t pos = s.rfind(word);
  while (pos != std::string_view::npos) {
    bool left_ok = pos == 0 || !is_word_char(s[pos - 1]);
    bool right_ok = pos + word.size() == s.size() || !is_word_char(s[pos + word.size()]);
    if (left_ok && right_ok) return pos;
    if (pos == 0) break;
    pos = s.rfind(word, pos - 1);
  }
  return std::string_view::npos;
}

}  // namespace detail

// Stem with the target word wrapped in asterisks (last whole-word occurrence).
inline std::string emphasized_stem(const Item& item) {
  std::string stem = item.stem;
  auto pos = detail::last_whole_word(stem, item.target_word);
  if (pos != std::string::npos) {
    stem.insert(pos + item.target_word.size(), "*");
    stem.insert(pos, "*");
  }
  return stem;
}

inline std::string serialize_item(const Item& item) {
  std::string out = emphasized_stem(item) + "\n";
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    out += option_letter(i);
    out += ". " + item.options[i] + "\n";
  }
  out += "Answer: ";
  out += option_letter(item.answer_index);
  out += "\n";
  return out;
}

// Stem followed by the options, newline-joined, without letters or answer key.
// This is the text the automated metrics score.
inline std::string metric_text(const Item& item) {
  std::string out = item.stem;
  for (const auto& o : item.options) out += "\n" + o;
  return out;
}

}  // namespace morphgen
