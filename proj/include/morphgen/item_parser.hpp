#pragma once

// Parsing raw model output into items, and per-question-type morphological
// checks.
//
// Diagnostic codes (stable strings):
//   fatal    EMPTY_INPUT NO_STEM OPTION_COUNT OPTION_SEQUENCE DUPLICATE_LETTER
//            EMPTY_OPTION DUPLICATE_OPTION ANSWER_MISSING ANSWER_INVALID
//            ANSWER_CONFLICT ANSWER_RANGE
//   warning  TRAILING_TEXT TARGET_UNRESOLVED
//   info     MARKUP_STRIPPED
//
// Morphological check codes:
//   PREFIX_NOT_LEADING SUFFIX_NOT_TRAILING ROOT_NOT_CONTAINED
//   SEGMENTATION_MISMATCH LEXICON_MATCH_COUNT LEXICON_ANSWER_MISMATCH
//   AFFIX_NOT_SHARED AFFIX_NOT_DISTINCT, and the precondition code
//   TARGET_UNRESOLVED.

#include <algorithm>
#include <optional>
#include <regex>
#include <string>
#include <unordered_set>
#include <vector>

#include "morphgen/corpus_io.hpp"
#include "morphgen/item_model.hpp"
#include "morphgen/surface_form.hpp"
#include "morphgen/text.hpp"

namespace morphgen {

enum class Severity { fatal, warning, info };

inline std::string to_string(Severity s) {
  switch (s) {
    case Severity::fatal: return "fatal";
    case Severity::warning: return "warning";
    case Severity::info: return "info";
  }
  return {};
}

struct Span {
  std::size_t begin = 0;  // byte offsets into the raw text
  std::size_t end = 0;
};

struct Diagnostic {
  std::string code;
  Severity severity = Severity::fatal;
  std::string message;
  Span span;
};

struct ParseResult {
  std::optional<Item> item;
  std::vector<Diagnostic> diagnostics;

  bool has(std::string_view code) const {
    return std::any_of(diagnostics.begin(), diagnostics.end(), [&](const Diagnostic& d) { return d.code == code; });
  }
  bool fatal() const {
    return std::any_of(diagnostics.begin(), diagnostics.end(),
                       [](const Diagnostic& d) { return d.severity == Severity::fatal; });
  }
};

// Metadata the raw text cannot carry.
struct ParseContext {
  std::string id = "parsed";
  std::optional<SkillFocus> skill;
  std::optional<MorphCategory> morph;
  WordDifficulty word_diff;
  TaskDifficulty task_diff;
  std::string target_word;  // preferred over the emphasized stem token
  std::optional<std::string> target_morpheme;
  std::size_t expected_option_count = kDefaultOptionCount;
};

namespace detail {

struct RawLine {
  std::string text;  // cleaned
  std::size_t begin = 0;
  std::size_t end = 0;
  bool stripped = false;
};

inline std::string strip_wrapping_emphasis(std::string s) {
  auto t = std::string(text::trim(s));
  for (const char* mark : {"***", "**", "__", "*", "_"}) {
    const std::size_t n = std::char_traits<char>::length(mark);
    if (t.size() > 2 * n && text::starts_with(t, mark) && text::ends_with(t, mark)) {
      return std::string(text::trim(t.substr(n, t.size() - 2 * n)));
    }
  }
  return t;
}

// Drops bullets, block quotes, headings and whole-line emphasis.
inline RawLine clean_line(std::string_view raw, std::size_t begin) {
  RawLine out;
  out.begin = begin;
  out.end = begin + raw.size();
  std::string_view s = text::trim(raw);
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    bool bullet = c == '-' || c == '>' || c == '#' || c == '+';
    bool star_bullet = c == '*' && i + 1 < s.size() && s[i + 1] == ' ';
    if ((bullet || star_bullet) && (i + 1 >= s.size() || s[i + 1] == ' ' || s[i + 1] == c || c == '#' || c == '>')) {
      ++i;
      while (i < s.size() && s[i] == ' ') ++i;
      out.stripped = true;
      continue;
    }
    if (text::starts_with(s.substr(i), "\xE2\x80\xA2")) {  // U+2022 bullet
      i += 3;
      while (i < s.size() && s[i] == ' ') ++i;
      out.stripped = true;
      continue;
    }
    break;
  }
  std::string t(s.substr(i));
  std::string unwrapped = strip_wrapping_emphasis(t);
  if (unwrapped != t) out.stripped = true;
  // "**A.** mis" -> "A. mis"
  static const std::regex bold_letter(R"(^\*{1,2}\(?([A-Za-z])\s*([\.\)\-:])\)?\*{1,2}\s*)");
  std::smatch m;
  if (std::regex_search(unwrapped, m, bold_letter)) {
    unwrapped = m[1].str() + m[2].str() + " " + m.suffix().str();
    out.stripped = true;
  }
  out.text = std::string(text::trim(unwrapped));
  return out;
}

inline bool is_imperative(std::string_view line) {
  static const char* verbs[] = {"find",  "choose", "select", "break", "change", "pick",  "identify",
                                "which", "what",   "if",     "read",  "circle", "decide", "determine"};
  auto ws = text::words(line);
  if (ws.empty()) return false;
  auto first = text::lower(ws[0]);
  return std::any_of(std::begin(verbs), std::end(verbs), [&](const char* v) { return first == v; });
}

// Removes *italic*, **bold** and _italic_ markers; returns the last
// single-asterisk (or underscore) emphasized token as the target word.
inline std::string strip_emphasis(const std::string& stem, std::string& target) {
  static const std::regex italic(R"((^|[^\*])\*([^\*\s][^\*]*?)\*(?!\*))");
  static const std::regex underscore(R"((^|\W)_([^_\s][^_]*?)_(?!\w))");
  std::string last_italic;
  for (auto it = std::sregex_iterator(stem.begin(), stem.end(), italic); it != std::sregex_iterator(); ++it) {
    last_italic = (*it)[2].str();
  }
  if (last_italic.empty()) {
    for (auto it = std::sregex_iterator(stem.begin(), stem.end(), underscore); it != std::sregex_iterator(); ++it) {
      last_italic = (*it)[2].str();
    }
  }
  if (last_italic.empty()) {
    static const std::regex quoted("[\"\xE2\x80\x9C]([A-Za-z][A-Za-z'\\-]*)[\"\xE2\x80\x9D]");
    for (auto it = std::sregex_iterator(stem.begin(), stem.end(), quoted); it != std::sregex_iterator(); ++it) {
      last_italic = (*it)[1].str();
    }
  }
  target = last_italic;
  std::string out;
  for (std::size_t i = 0; i < stem.size(); ++i) {
    char c = stem[i];
    if (c == '*') continue;
    if (c == '_') {
      bool left_word = i > 0 && (text::is_alpha(stem[i - 1]) || text::is_digit(stem[i - 1]));
      bool right_word = i + 1 < stem.size() && (text::is_alpha(stem[i + 1]) || text::is_digit(stem[i + 1]));
      if (!(left_word && right_word)) continue;
    }
    out.push_back(c);
  }
  return text::collapse_ws(out);
}

inline std::string strip_stem_label(std::string s) {
  static const std::regex label(R"(^(?:(?:QT\s*\d{1,2}|Q\d{1,3}|\d{1,3})\s*[\.\):]\s*|(?:question|stem)\s*:\s*))",
                                std::regex::icase);
  return std::regex_replace(s, label, "", std::regex_constants::format_first_only);
}

}  // namespace detail

inline ParseResult parse_item(std::string_view raw, QuestionType expected_qt, const ParseContext& ctx = {}) {
  ParseResult res;
  auto fatal = [&](std::string code, std::string msg, Span span = {}) {
    res.diagnostics.push_back({std::move(code), Severity::fatal, std::move(msg), span});
  };

  if (text::trim(raw).empty()) {
    fatal("EMPTY_INPUT", "model output is empty");
    return res;
  }

  // Lines with offsets.
  std::vector<detail::RawLine> lines;
  {
    std::size_t start = 0;
    while (start <= raw.size()) {
      auto nl = raw.find('\n', start);
      if (nl == std::string_view::npos) nl = raw.size();
      auto piece = raw.substr(start, nl - start);
      if (!piece.empty() && piece.back() == '\r') piece.remove_suffix(1);
      lines.push_back(detail::clean_line(piece, start));
      start = nl + 1;
    }
  }

  // Restrict to the text after the last "Final item:" style marker.
  static const std::regex marker(R"(^(?:final|refined|revised)\s+(?:item|question|version)\s*:?\s*(.*)$)",
                                 std::regex::icase);
  std::size_t region = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::smatch m;
    if (std::regex_match(lines[i].text, m, marker)) {
      region = i + 1;
      std::string rest = std::string(text::trim(m[1].str()));
      if (!rest.empty()) {
        lines[i].text = rest;
        region = i;
      }
    }
  }

  static const std::regex option_re(R"(^\(?([A-Za-z])\s*[\.\)\-:]\s+(.*)$)");
  static const std::regex option_empty_re(R"(^\(?([A-Za-z])\s*[\.\)\-:]\s*$)");
  static const std::regex answer_re(R"(^(?:the\s+)?(?:correct\s+)?answer\s*(?:is)?\s*[:\-]?\s*(.*)$)", std::regex::icase);

  struct Opt {
    char letter;
    std::string text;
    Span span;
  };
  std::vector<Opt> opts;
  std::optional<std::size_t> first_option_line;
  std::vector<std::pair<char, Span>> answers;
  std::optional<std::size_t> answer_line;
  bool options_closed = false;
  bool markup = false;

  for (std::size_t i = region; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.text.empty()) continue;
    const Span span{line.begin, line.end};
    std::smatch m;
    // "answer" must open the line, allowing "the correct " ahead of it
    if (std::regex_match(line.text, m, answer_re) && text::lower(line.text).find("answer") != std::string::npos &&
        text::lower(line.text).find("answer") <= 12) {
      markup = markup || line.stripped;
      std::string value = detail::strip_wrapping_emphasis(m[1].str());
      value = std::string(text::trim(value));
      if (!value.empty() && value.front() == '(') value.erase(0, 1);
      bool letter_ok = !value.empty() && text::is_alpha(value[0]) &&
                       (value.size() == 1 || !text::is_alpha(value[1]));
      if (!letter_ok) {
        fatal("ANSWER_INVALID", "answer line does not name an option letter: \"" + line.text + "\"", span);
        answer_line = i;
        continue;
      }
      answers.emplace_back(static_cast<char>(std::toupper(value[0])), span);
      answer_line = i;
      if (first_option_line) options_closed = true;
      continue;
    }
    if (answer_line && !answers.empty()) {
      res.diagnostics.push_back({"TRAILING_TEXT", Severity::warning, "text after the answer line is ignored", span});
      break;
    }
    if (!options_closed && (std::regex_match(line.text, m, option_re) || std::regex_match(line.text, m, option_empty_re))) {
      // a stem that happens to begin "A. " only counts once options are expected
      markup = markup || line.stripped;
      if (!first_option_line) first_option_line = i;
      std::string body = m.size() > 2 ? detail::strip_wrapping_emphasis(m[2].str()) : std::string();
      opts.push_back({static_cast<char>(std::toupper(m[1].str()[0])), std::string(text::trim(body)), span});
      continue;
    }
    if (first_option_line) options_closed = true;
  }

  // Stem: scanning back from the first option, the nearest question or
  // instruction line, else the nearest non-empty line.
  std::optional<std::size_t> stem_line;
  const std::size_t stem_limit = first_option_line.value_or(answer_line.value_or(lines.size()));
  for (std::size_t i = stem_limit; i-- > region;) {
    const auto& t = lines[i].text;
    if (t.empty()) continue;
    if (t.find('?') != std::string::npos || detail::is_imperative(detail::strip_stem_label(t))) {
      stem_line = i;
      break;
    }
  }
  if (!stem_line) {
    for (std::size_t i = stem_limit; i-- > region;) {
      if (!lines[i].text.empty()) {
        stem_line = i;
        break;
      }
    }
  }

  std::string stem, target;
  if (!stem_line) {
    fatal("NO_STEM", "no question stem precedes the options");
  } else {
    markup = markup || lines[*stem_line].stripped;
    std::string labeled = detail::strip_stem_label(lines[*stem_line].text);
    stem = detail::strip_emphasis(labeled, target);
    if (stem != labeled) markup = true;
    if (text::word_count(stem) == 0) fatal("NO_STEM", "stem line has no words", {lines[*stem_line].begin, lines[*stem_line].end});
  }

  // Options.
  std::unordered_set<char> letters;
  for (std::size_t i = 0; i < opts.size(); ++i) {
    if (!letters.insert(opts[i].letter).second) {
      fatal("DUPLICATE_LETTER", std::string("option letter ") + opts[i].letter + " appears more than once", opts[i].span);
    } else if (opts[i].letter != option_letter(i)) {
      fatal("OPTION_SEQUENCE", std::string("expected option ") + option_letter(i) + ", found " + opts[i].letter,
            opts[i].span);
    }
  }
  if (opts.size() != ctx.expected_option_count) {
    fatal("OPTION_COUNT", "expected " + std::to_string(ctx.expected_option_count) + " options, found " +
                              std::to_string(opts.size()));
  }
  std::unordered_set<std::string> seen;
  for (const auto& o : opts) {
    if (text::trim(o.text).empty()) {
      fatal("EMPTY_OPTION", std::string("option ") + o.letter + " has no text", o.span);
    } else if (!seen.insert(text::normalize_option(o.text)).second) {
      fatal("DUPLICATE_OPTION", std::string("option ") + o.letter + " repeats an earlier option", o.span);
    }
  }

  // Answer.
  std::optional<std::size_t> answer_index;
  if (answers.empty()) {
    if (!res.has("ANSWER_INVALID")) fatal("ANSWER_MISSING", "no \"Answer:\" line found");
  } else {
    char letter = answers.front().first;
    for (const auto& [l, span] : answers) {
      if (l != letter) fatal("ANSWER_CONFLICT", "answer lines disagree", span);
    }
    const std::size_t idx = static_cast<std::size_t>(letter - 'A');
    if (idx >= opts.size()) {
      fatal("ANSWER_RANGE", std::string("answer ") + letter + " is outside the " + std::to_string(opts.size()) +
                                " options", answers.front().second);
    } else {
      answer_index = idx;
    }
  }

  if (markup) res.diagnostics.push_back({"MARKUP_STRIPPED", Severity::info, "bullet or emphasis markup removed", {}});

  std::string target_word = !ctx.target_word.empty() ? ctx.target_word : target;
  if (target_word.empty() && stem_line) {
    res.diagnostics.push_back({"TARGET_UNRESOLVED", Severity::warning, "no emphasized target word in the stem", {}});
  }

  if (res.fatal()) return res;

  Item item;
  item.id = ctx.id;
  item.stem = stem;
  for (auto& o : opts) item.options.push_back(o.text);
  item.answer_index = *answer_index;
  item.qt = expected_qt;
  item.skill = ctx.skill.value_or(default_skill(expected_qt));
  item.morph = ctx.morph.value_or(MorphCategory::derivational);
  item.word_diff = ctx.word_diff;
  item.task_diff = ctx.task_diff;
  item.target_word = target_word;
  item.target_morpheme = ctx.target_morpheme;
  res.item = std::move(item);
  return res;
}

// ---------------------------------------------------------------------------
// Morphological checks

class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(std::vector<std::string> words) {
    for (auto& w : words) add(w);
  }

  // Plain text, one entry per line; blank lines and "#" comments skipped.
  static Lexicon load(const std::string& path) {
    Lexicon lex;
    for (const auto& line : text::split_lines(detail::read_file(path))) {
      auto t = text::trim(line);
      if (t.empty() || t.front() == '#') continue;
      lex.add(t);
    }
    return lex;
  }

  void add(std::string_view w) { words_.insert(text::lower(text::trim(w))); }
  bool contains(std::string_view w) const { return words_.count(text::lower(text::trim(w))) > 0; }
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

struct MorphCheckOptions {
  const Lexicon* lexicon = nullptr;
};

struct UncheckedEntry {
  std::string check;
  std::string reason;
};

struct MorphCheckReport {
  std::vector<std::string> checks_run;
  std::vector<Diagnostic> violations;
  std::vector<UncheckedEntry> unchecked;
  std::vector<Diagnostic> preconditions;

  bool clean() const { return violations.empty() && preconditions.empty(); }
};

inline constexpr const char* kSemanticReason = "semantic \xE2\x80\x94 not machine-checkable";

// The word the item is about: metadata first, then the stem.
inline std::string resolve_target_word(const Item& item) {
  if (!text::trim(item.target_word).empty()) return std::string(text::trim(item.target_word));
  std::string target;
  detail::strip_emphasis(item.stem, target);
  if (!target.empty()) return target;
  static const std::regex cue(R"(\b(?:word|in)\s+["'\*_]*([A-Za-z][A-Za-z'\-]*))", std::regex::icase);
  std::string last;
  for (auto it = std::sregex_iterator(item.stem.begin(), item.stem.end(), cue); it != std::sregex_iterator(); ++it) {
    last = (*it)[1].str();
  }
  auto lw = text::lower(last);
  if (lw == "the" || lw == "a" || lw == "an") return {};
  return last;
}

namespace detail {

inline std::string common_prefix(const std::vector<std::string>& ws) {
  if (ws.empty()) return {};
  std::string p = ws[0];
  for (const auto& w : ws) {
    std::size_t n = 0;
    while (n < p.size() && n < w.size() && p[n] == w[n]) ++n;
    p.resize(n);
  }
  return p;
}

inline std::string common_suffix(const std::vector<std::string>& ws) {
  std::vector<std::string> rev;
  for (auto w : ws) {
    std::reverse(w.begin(), w.end());
    rev.push_back(std::move(w));
  }
  auto p = common_prefix(rev);
  std::reverse(p.begin(), p.end());
  return p;
}

// Whether stripping the affix leaves a lexicon word, allowing the usual
// spelling adjustments at a suffix boundary (restored e, i->y, doubled consonant).
inline bool separable(const std::string& word, const std::string& affix, bool is_prefix, const Lexicon& lex) {
  if (word.size() <= affix.size()) return false;
  if (is_prefix) return lex.contains(word.substr(affix.size()));
  std::string base = word.substr(0, word.size() - affix.size());
  if (lex.contains(base) || lex.contains(base + "e")) return true;
  if (!base.empty() && base.back() == 'i' && lex.contains(base.substr(0, base.size() - 1) + "y")) return true;
  if (base.size() >= 2 && base[base.size() - 1] == base[base.size() - 2] && lex.contains(base.substr(0, base.size() - 1))) {
    return true;
  }
  return false;
}

inline std::string strip_separators(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '/' || c == '-' || c == '+' || c == '|' || c == '\xB7' || text::is_space(c)) continue;
    out.push_back(c);
  }
  return text::lower(out);
}

}  // namespace detail

inline MorphCheckReport morph_checks(const Item& item, const MorphCheckOptions& opts = {}) {
  MorphCheckReport rep;
  auto violation = [&](std::string code, std::string msg) {
    rep.violations.push_back({std::move(code), Severity::fatal, std::move(msg), {}});
  };
  const int qt = qt_number(item.qt);
  if (item.answer_index >= item.options.size()) {
    rep.preconditions.push_back({"ANSWER_RANGE", Severity::fatal, "answer index outside options", {}});
    return rep;
  }
  const std::string answer = text::lower(text::trim(item.options[item.answer_index]));

  auto need_target = [&](const std::string& check) -> std::optional<std::string> {
    auto t = text::lower(resolve_target_word(item));
    if (t.empty()) {
      rep.preconditions.push_back({"TARGET_UNRESOLVED", Severity::fatal,
                                   "target word not resolvable from metadata or stem", {}});
      rep.unchecked.push_back({check, "target word unresolved"});
      return std::nullopt;
    }
    return t;
  };

  switch (qt) {
    case 1: {
      const std::string check = "qt1_prefix_leading_substring";
      if (auto target = need_target(check)) {
        rep.checks_run.push_back(check);
        if (answer.empty() || answer.size() >= target->size() || !text::starts_with(*target, answer)) {
          violation("PREFIX_NOT_LEADING", "answer \"" + answer + "\" is not a leading part of \"" + *target + "\"");
        }
      }
      break;
    }
    case 2: {
      const std::string check = "qt2_suffix_trailing_substring";
      if (auto target = need_target(check)) {
        rep.checks_run.push_back(check);
        if (answer.empty() || answer.size() >= target->size() || !text::ends_with(*target, answer)) {
          violation("SUFFIX_NOT_TRAILING", "answer \"" + answer + "\" is not a trailing part of \"" + *target + "\"");
        }
      }
      break;
    }
    case 3: {
      const std::string check = "qt3_root_contiguous_substring";
      if (auto target = need_target(check)) {
        rep.checks_run.push_back(check);
        if (answer.empty() || target->find(answer) == std::string::npos) {
          violation("ROOT_NOT_CONTAINED", "answer \"" + answer + "\" does not occur inside \"" + *target + "\"");
        }
      }
      break;
    }
    case 9: {
      const std::string check = "qt9_segments_concatenate";
      if (auto target = need_target(check)) {
        rep.checks_run.push_back(check);
        if (detail::strip_separators(answer) != *target) {
          violation("SEGMENTATION_MISMATCH", "segments of \"" + answer + "\" do not rejoin to \"" + *target + "\"");
        }
      }
      break;
    }
    case 8: {
      const std::string check = "qt8_single_lexicon_spelling";
      if (opts.lexicon == nullptr) {
        rep.unchecked.push_back({check, "no wordlist configured"});
        break;
      }
      rep.checks_run.push_back(check);
      std::vector<std::size_t> hits;
      for (std::size_t i = 0; i < item.options.size(); ++i) {
        if (opts.lexicon->contains(item.options[i])) hits.push_back(i);
      }
      if (hits.size() != 1) {
        violation("LEXICON_MATCH_COUNT", std::to_string(hits.size()) + " options found in the wordlist, expected 1");
      } else if (hits.front() != item.answer_index) {
        violation("LEXICON_ANSWER_MISMATCH", "the one wordlist spelling is not the keyed answer");
      }
      break;
    }
    case 4:
    case 5: {
      const bool prefix = qt == 4;
      const std::string check = prefix ? "qt4_shared_prefix" : "qt5_shared_suffix";
      std::vector<std::string> others;
      for (std::size_t i = 0; i < item.options.size(); ++i) {
        if (i != item.answer_index) others.push_back(text::lower(text::trim(item.options[i])));
      }
      const std::string affix = prefix ? detail::common_prefix(others) : detail::common_suffix(others);
      const std::string kind = prefix ? "prefix" : "suffix";
      if (affix.size() < 2) {
        rep.checks_run.push_back(check);
        violation("AFFIX_NOT_SHARED", "non-answer options share no " + kind +
                                          " of length >= 2 (heuristic surface proxy)");
        break;
      }
      const bool carries = prefix ? text::starts_with(answer, affix) : text::ends_with(answer, affix);
      if (!carries) {
        rep.checks_run.push_back(check);
        break;
      }
      // The answer carries the same letters; only a lexicon can say whether
      // they form a real affix there.
      if (opts.lexicon == nullptr) {
        rep.unchecked.push_back({check, "answer carries the shared " + kind + " \"" + affix +
                                            "\" on the surface; separability needs a wordlist"});
        break;
      }
      rep.checks_run.push_back(check);
      if (detail::separable(answer, affix, prefix, *opts.lexicon)) {
        violation("AFFIX_NOT_DISTINCT", "answer \"" + answer + "\" also carries the " + kind + " \"" + affix +
                                            "\" as a separable affix (heuristic surface proxy)");
      }
      break;
    }
    default:
      rep.unchecked.push_back({"qt" + std::to_string(qt) + "_semantic", kSemanticReason});
      break;
  }
  return rep;
}

}  // namespace morphgen
