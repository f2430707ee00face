#pragma once

// Prompting strategies rendered into plans of backend calls.
//
// Templates are plain-text files under a versioned directory:
//
//   <dir>/VERSION                       version tag recorded in every plan
//   <dir>/strategies/<strategy>.txt     one per single-turn strategy
//   <dir>/strategies/cot_seq_multistep.step{1,2,3}.txt
//   <dir>/strategies/<strategy>.<family>.txt   optional per-family override
//   <dir>/families/<family>.txt         question-family guidance
//   <dir>/common/*.txt                  shared blocks (format, reasoning, personas, ...)
//
// Placeholders are written {{name}} and are filled at render time; an unknown
// name is a TemplateError. Multi-step turns also carry binding slots
// <<chosen_word>> and <<draft_item>>, filled from earlier replies by
// bind_step_inputs.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "morphgen/corpus_io.hpp"
#include "morphgen/error.hpp"
#include "morphgen/item_model.hpp"
#include "morphgen/surface_form.hpp"
#include "morphgen/text.hpp"

namespace morphgen {

enum class StrategyId { zero_shot, few_shot, cot, cot_role, cot_seq_onego, cot_seq_multistep };

inline constexpr std::array<StrategyId, 6> kAllStrategies = {
    StrategyId::zero_shot, StrategyId::few_shot,      StrategyId::cot,
    StrategyId::cot_role,  StrategyId::cot_seq_onego, StrategyId::cot_seq_multistep,
};

inline std::string to_string(StrategyId s) {
  switch (s) {
    case StrategyId::zero_shot: return "zero_shot";
    case StrategyId::few_shot: return "few_shot";
    case StrategyId::cot: return "cot";
    case StrategyId::cot_role: return "cot_role";
    case StrategyId::cot_seq_onego: return "cot_seq_onego";
    case StrategyId::cot_seq_multistep: return "cot_seq_multistep";
  }
  return {};
}

// Row labels used in exported tables.
inline std::string display_name(StrategyId s) {
  switch (s) {
    case StrategyId::zero_shot: return "Zero-Shot";
    case StrategyId::few_shot: return "Few-Shot";
    case StrategyId::cot: return "CoT";
    case StrategyId::cot_role: return "CoT + Role";
    case StrategyId::cot_seq_onego: return "CoT + Sequential (One-Go)";
    case StrategyId::cot_seq_multistep: return "CoT + Sequential (Multi-Step)";
  }
  return {};
}

inline StrategyId parse_strategy(std::string_view s) {
  auto v = text::lower(text::trim(s));
  for (auto id : kAllStrategies) {
    if (v == to_string(id)) return id;
  }
  throw ValidationError("unknown prompting strategy '" + std::string(s) + "'");
}

inline bool is_cot(StrategyId s) {
  return s == StrategyId::cot || s == StrategyId::cot_role || s == StrategyId::cot_seq_onego ||
         s == StrategyId::cot_seq_multistep;
}

inline constexpr std::size_t kDefaultExemplarCount = 3;
inline constexpr std::size_t kMaxExemplarCount = 5;

struct GenerationSpec {
  QuestionType qt = QuestionType::QT1;
  int target_word_diff = 3;
  TaskLevel target_task_diff = TaskLevel::medium;
  std::string grade_band = "grades 3-5";
  std::optional<std::string> affix_focus;
  std::size_t exemplar_count = kDefaultExemplarCount;
  std::uint64_t seed = 0;

  void check(StrategyId strategy) const {
    if (target_word_diff < 1 || target_word_diff > 5) throw ValidationError("target word difficulty must be 1..5");
    if (text::trim(grade_band).empty()) throw ValidationError("grade band must be non-empty");
    if (strategy == StrategyId::few_shot && (exemplar_count < 1 || exemplar_count > kMaxExemplarCount)) {
      throw ValidationError("few-shot exemplar count must be in 1..5");
    }
  }
};

enum class TurnLabel { instruct, persona, step };
enum class Expects { free_text, item_block, word_choice, draft_item, refined_item };

inline std::string to_string(TurnLabel l) {
  switch (l) {
    case TurnLabel::instruct: return "instruct";
    case TurnLabel::persona: return "persona";
    case TurnLabel::step: return "step";
  }
  return {};
}

inline std::string to_string(Expects e) {
  switch (e) {
    case Expects::free_text: return "free_text";
    case Expects::item_block: return "item_block";
    case Expects::word_choice: return "word_choice";
    case Expects::draft_item: return "draft_item";
    case Expects::refined_item: return "refined_item";
  }
  return {};
}

struct Turn {
  TurnLabel label = TurnLabel::instruct;
  std::string text;
  Expects expects = Expects::item_block;

  friend bool operator==(const Turn&, const Turn&) = default;
};

struct PromptPlan {
  StrategyId strategy = StrategyId::zero_shot;
  QuestionType qt = QuestionType::QT1;
  std::string template_version;
  std::vector<Turn> turns;

  bool multistep() const { return strategy == StrategyId::cot_seq_multistep; }
  friend bool operator==(const PromptPlan&, const PromptPlan&) = default;
};

inline constexpr std::string_view kChosenWordSlot = "<<chosen_word>>";
inline constexpr std::string_view kDraftItemSlot = "<<draft_item>>";

// ---------------------------------------------------------------------------
// Templates

enum class QtFamily { identify, odd_one_out, transform, meaning, spelling, segment };

inline QtFamily family_of(QuestionType qt) {
  switch (qt) {
    case QuestionType::QT1:
    case QuestionType::QT2:
    case QuestionType::QT3: return QtFamily::identify;
    case QuestionType::QT4:
    case QuestionType::QT5: return QtFamily::odd_one_out;
    case QuestionType::QT6: return QtFamily::transform;
    case QuestionType::QT8: return QtFamily::spelling;
    case QuestionType::QT9: return QtFamily::segment;
    default: return QtFamily::meaning;
  }
}

inline std::string to_string(QtFamily f) {
  switch (f) {
    case QtFamily::identify: return "identify";
    case QtFamily::odd_one_out: return "odd_one_out";
    case QtFamily::transform: return "transform";
    case QtFamily::meaning: return "meaning";
    case QtFamily::spelling: return "spelling";
    case QtFamily::segment: return "segment";
  }
  return {};
}

// Names of the {{...}} placeholders in a template, in order of appearance.
inline std::vector<std::string> placeholders(std::string_view tpl) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = tpl.find("{{", pos)) != std::string_view::npos) {
    auto close = tpl.find("}}", pos + 2);
    if (close == std::string_view::npos) throw TemplateError("unterminated placeholder in template");
    out.emplace_back(tpl.substr(pos + 2, close - pos - 2));
    pos = close + 2;
  }
  return out;
}

using Bindings = std::map<std::string, std::string, std::less<>>;

// Replaces every {{name}} with its binding. Bound values are not rescanned.
inline std::string fill_template(std::string_view tpl, const Bindings& bindings, std::string_view template_name = {}) {
  std::string out;
  out.reserve(tpl.size() * 2);
  std::size_t pos = 0;
  while (true) {
    auto open = tpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tpl.substr(pos));
      break;
    }
    auto close = tpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      throw TemplateError("unterminated placeholder in template '" + std::string(template_name) + "'");
    }
    out.append(tpl.substr(pos, open - pos));
    auto name = tpl.substr(open + 2, close - open - 2);
    auto it = bindings.find(name);
    if (it == bindings.end()) {
      throw TemplateError("template '" + std::string(template_name) + "' uses unbound placeholder {{" +
                          std::string(name) + "}}");
    }
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

class TemplateRegistry {
 public:
  // Loads every *.txt under dir; keys are paths relative to dir without the
  // extension, e.g. "strategies/cot" or "common/output_format".
  static TemplateRegistry load(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("template directory '" + dir.string() + "' does not exist");
    TemplateRegistry reg;
    reg.dir_ = dir;
    if (fs::exists(dir / "VERSION")) {
      reg.version_ = std::string(text::trim(detail::read_file((dir / "VERSION").string())));
    } else {
      reg.version_ = dir.filename().string();
    }
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
      auto rel = fs::relative(entry.path(), dir);
      rel.replace_extension();
      std::string body = detail::read_file(entry.path().string());
      // one trailing newline is file formatting, not content
      if (!body.empty() && body.back() == '\n') body.pop_back();
      reg.templates_[rel.generic_string()] = std::move(body);
    }
    for (const char* required :
         {"common/output_format", "common/reasoning", "common/personas", "common/exemplar", "common/affix_focus",
          "common/affix_open", "strategies/zero_shot", "strategies/few_shot", "strategies/cot", "strategies/cot_role",
          "strategies/cot_seq_onego", "strategies/cot_seq_multistep.step1", "strategies/cot_seq_multistep.step2",
          "strategies/cot_seq_multistep.step3"}) {
      if (!reg.contains(required)) throw TemplateError(std::string("template '") + required + "' is missing");
    }
    for (auto f : {QtFamily::identify, QtFamily::odd_one_out, QtFamily::transform, QtFamily::meaning,
                   QtFamily::spelling, QtFamily::segment}) {
      if (!reg.contains("families/" + to_string(f))) {
        throw TemplateError("template 'families/" + to_string(f) + "' is missing");
      }
    }
    return reg;
  }

  bool contains(std::string_view key) const { return templates_.find(key) != templates_.end(); }

  const std::string& get(std::string_view key) const {
    auto it = templates_.find(key);
    if (it == templates_.end()) throw TemplateError("template '" + std::string(key) + "' is missing");
    return it->second;
  }

  // Strategy body for a question family, honoring per-family overrides.
  std::pair<std::string, const std::string*> strategy_template(std::string_view base, QtFamily family) const {
    std::string key = "strategies/" + std::string(base) + "." + to_string(family);
    if (contains(key)) return {key, &get(key)};
    key = "strategies/" + std::string(base);
    return {key, &get(key)};
  }

  const std::string& version() const { return version_; }
  const std::filesystem::path& directory() const { return dir_; }
  const std::map<std::string, std::string, std::less<>>& all() const { return templates_; }

 private:
  std::filesystem::path dir_;
  std::string version_;
  std::map<std::string, std::string, std::less<>> templates_;
};

// ---------------------------------------------------------------------------
// Exemplar selection

// Picks k exemplars of spec.qt: first the item whose word difficulty is
// nearest the target, then repeatedly the item farthest (in difficulty) from
// those already chosen. Ties prefer nearer-to-target, then lower difficulty,
// then a seed-determined order.
inline std::vector<Item> select_exemplars(const Corpus& pool, const GenerationSpec& spec) {
  const std::size_t k = spec.exemplar_count;
  std::vector<const Item*> candidates;
  for (const auto& item : pool.items) {
    if (item.qt == spec.qt) candidates.push_back(&item);
  }
  if (k == 0) return {};
  if (candidates.size() < k) {
    throw ValidationError("insufficient exemplar pool for " + to_string(spec.qt) + ": need " + std::to_string(k) +
                          ", have " + std::to_string(candidates.size()));
  }
  std::sort(candidates.begin(), candidates.end(), [](const Item* a, const Item* b) { return a->id < b->id; });
  std::mt19937_64 rng(spec.seed);
  seeded_shuffle(candidates, rng);

  auto to_target = [&](const Item* it) { return std::abs(it->word_diff.recoded - spec.target_word_diff); };

  std::vector<const Item*> chosen;
  std::vector<bool> used(candidates.size(), false);
  while (chosen.size() < k) {
    std::size_t best = candidates.size();
    int best_spread = -1;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (used[i]) continue;
      const Item* c = candidates[i];
      int spread;
      if (chosen.empty()) {
        spread = -to_target(c);  // nearest first
      } else {
        spread = std::numeric_limits<int>::max();
        for (const Item* s : chosen) spread = std::min(spread, std::abs(c->word_diff.recoded - s->word_diff.recoded));
      }
      bool better = false;
      if (best == candidates.size() || spread > best_spread) {
        better = true;
      } else if (spread == best_spread) {
        const Item* b = candidates[best];
        if (to_target(c) != to_target(b)) {
          better = to_target(c) < to_target(b);
        } else if (c->word_diff.recoded != b->word_diff.recoded) {
          better = c->word_diff.recoded < b->word_diff.recoded;
        }
      }
      if (better) {
        best = i;
        best_spread = spread;
      }
    }
    used[best] = true;
    chosen.push_back(candidates[best]);
  }
  std::vector<Item> out;
  for (const Item* c : chosen) out.push_back(*c);
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

inline Bindings base_bindings(const TemplateRegistry& reg, const GenerationSpec& spec) {
  Bindings b;
  b["qt_id"] = to_string(spec.qt);
  b["qt_description"] = std::string(description(spec.qt));
  b["grade_band"] = spec.grade_band;
  b["word_difficulty"] = std::to_string(spec.target_word_diff);
  b["task_difficulty"] = to_string(spec.target_task_diff);

  Bindings affix{{"affix", spec.affix_focus.value_or("")}};
  b["affix_focus"] = spec.affix_focus ? fill_template(reg.get("common/affix_focus"), affix, "common/affix_focus")
                                      : fill_template(reg.get("common/affix_open"), affix, "common/affix_open");
  const std::string family_key = "families/" + to_string(family_of(spec.qt));
  b["family_guidance"] = fill_template(reg.get(family_key), b, family_key);
  b["output_format"] = fill_template(reg.get("common/output_format"), b, "common/output_format");
  b["reasoning_directive"] = fill_template(reg.get("common/reasoning"), b, "common/reasoning");
  b["personas"] = fill_template(reg.get("common/personas"), b, "common/personas");
  return b;
}

inline std::string render_exemplars(const TemplateRegistry& reg, const std::vector<Item>& exemplars) {
  std::vector<std::string> blocks;
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    Bindings eb{{"exemplar_number", std::to_string(i + 1)}, {"exemplar_item", serialize_item(exemplars[i])}};
    std::string block = fill_template(reg.get("common/exemplar"), eb, "common/exemplar");
    while (!block.empty() && block.back() == '\n') block.pop_back();
    blocks.push_back(std::move(block));
  }
  return text::join(blocks, "\n\n");
}

// Exemplars must be supplied exactly when the strategy is few_shot.
inline PromptPlan render(const TemplateRegistry& reg, StrategyId strategy, const GenerationSpec& spec,
                         const std::optional<std::vector<Item>>& exemplars = std::nullopt) {
  spec.check(strategy);
  const bool few = strategy == StrategyId::few_shot;
  if (few && (!exemplars || exemplars->empty())) throw ValidationError("few_shot rendering requires exemplars");
  if (!few && exemplars) throw ValidationError(to_string(strategy) + " rendering does not take exemplars");

  Bindings b = base_bindings(reg, spec);
  if (few) b["exemplars"] = render_exemplars(reg, *exemplars);

  PromptPlan plan;
  plan.strategy = strategy;
  plan.qt = spec.qt;
  plan.template_version = reg.version();
  const QtFamily family = family_of(spec.qt);

  if (strategy == StrategyId::cot_seq_multistep) {
    const Expects expects[3] = {Expects::word_choice, Expects::draft_item, Expects::refined_item};
    for (int step = 1; step <= 3; ++step) {
      auto [key, body] = reg.strategy_template("cot_seq_multistep.step" + std::to_string(step), family);
      plan.turns.push_back({TurnLabel::step, fill_template(*body, b, key), expects[step - 1]});
    }
  } else {
    auto [key, body] = reg.strategy_template(to_string(strategy), family);
    TurnLabel label = strategy == StrategyId::cot_role ? TurnLabel::persona : TurnLabel::instruct;
    plan.turns.push_back({label, fill_template(*body, b, key), Expects::item_block});
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Multi-step binding

namespace detail {

inline std::string strip_markup(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '*' || c == '_' || c == '`' || c == '"' || c == '\'') continue;
    out.push_back(c);
  }
  return std::string(text::trim(out));
}

}  // namespace detail

// The word selected in a step-1 reply: a "Chosen word: X" (or "Word: X")
// line, else a reply that is itself a single word, else the last
// *emphasized* token. Empty when none applies.
inline std::string extract_chosen_word(std::string_view reply) {
  static const std::regex labeled(R"((?:chosen|selected|target)?\s*word\s*[:=\-]\s*[\*_"'`]*([A-Za-z][A-Za-z'\-]*))",
                                  std::regex::icase);
  std::string last_labeled;
  for (const auto& line : text::split_lines(reply)) {
    std::smatch m;
    if (std::regex_search(line, m, labeled)) last_labeled = m[1].str();
  }
  if (!last_labeled.empty()) return last_labeled;

  std::string bare = detail::strip_markup(reply);
  while (!bare.empty() && std::ispunct(static_cast<unsigned char>(bare.back()))) bare.pop_back();
  auto ws = text::words(bare);
  if (ws.size() == 1 && ws[0] == bare) return bare;

  static const std::regex emphasized(R"(\*{1,2}([A-Za-z][A-Za-z'\-]*)\*{1,2})");
  std::string last;
  std::string r(reply);
  for (auto it = std::sregex_iterator(r.begin(), r.end(), emphasized); it != std::sregex_iterator(); ++it) {
    last = (*it)[1].str();
  }
  return last;
}

// Text of the next turn of a multi-step plan given the replies so far.
inline std::string bind_step_inputs(const PromptPlan& plan, const std::vector<std::string>& replies) {
  if (!plan.multistep()) throw ValidationError("bind_step_inputs: plan is not multi-step");
  if (replies.size() >= plan.turns.size()) throw ValidationError("bind_step_inputs: all turns already answered");
  std::string next = plan.turns[replies.size()].text;
  if (replies.empty()) return next;

  const std::string word = extract_chosen_word(replies[0]);
  if (word.empty()) throw StepBindingError("step 1 reply contains no extractable word");
  text::replace_all(next, kChosenWordSlot, word);

  if (replies.size() >= 2) {
    std::string draft(text::trim(replies[1]));
    if (draft.empty()) throw StepBindingError("step 2 reply is empty; no draft item to refine");
    text::replace_all(next, kDraftItemSlot, draft);
  }
  return next;
}

}  // namespace morphgen
