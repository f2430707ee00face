#pragma once

// Five-dimension binary rubric, a model judge conditioned on labeled
// exemplars, aggregation, and judge/expert agreement.
//
// Expert label file (JSON lines), either form per line:
//   {"item_id": "qt1-001", "annotator_id": "r1",
//    "clarity": 1, "answer_accuracy": 1, "distractor_quality": 0,
//    "word_difficulty_fit": 1, "task_difficulty_fit": 0}
//   {"qt": "QT1", "means": {"clarity": 1.0, ...}, "total": 3.4}
// Per-item records may nest the five fields under "dims".

#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "morphgen/corpus_io.hpp"
#include "morphgen/item_model.hpp"
#include "morphgen/llm_gateway.hpp"
#include "morphgen/prompt_engine.hpp"
#include "morphgen/surface_form.hpp"
#include "morphgen/text.hpp"

namespace morphgen {

enum class Dimension { clarity, answer_accuracy, distractor_quality, word_difficulty_fit, task_difficulty_fit };

inline constexpr std::size_t kDimensionCount = 5;
inline constexpr std::array<Dimension, kDimensionCount> kAllDimensions = {
    Dimension::clarity, Dimension::answer_accuracy, Dimension::distractor_quality, Dimension::word_difficulty_fit,
    Dimension::task_difficulty_fit};

inline std::string to_string(Dimension d) {
  switch (d) {
    case Dimension::clarity: return "clarity";
    case Dimension::answer_accuracy: return "answer_accuracy";
    case Dimension::distractor_quality: return "distractor_quality";
    case Dimension::word_difficulty_fit: return "word_difficulty_fit";
    case Dimension::task_difficulty_fit: return "task_difficulty_fit";
  }
  return {};
}

inline std::string display_name(Dimension d) {
  switch (d) {
    case Dimension::clarity: return "Clarity of Instruction";
    case Dimension::answer_accuracy: return "Accuracy of Correct Answer";
    case Dimension::distractor_quality: return "Quality of Distractors";
    case Dimension::word_difficulty_fit: return "Word Difficulty";
    case Dimension::task_difficulty_fit: return "Task Difficulty";
  }
  return {};
}

// Accepts canonical names and the short forms judges tend to write.
inline std::optional<Dimension> parse_dimension(std::string_view s) {
  std::string k;
  for (char c : text::lower(text::trim(s))) k.push_back(c == ' ' || c == '-' ? '_' : c);
  static const std::map<std::string, Dimension> names = {
      {"clarity", Dimension::clarity},
      {"instruction_clarity", Dimension::clarity},
      {"clarity_of_instruction", Dimension::clarity},
      {"answer", Dimension::answer_accuracy},
      {"accuracy", Dimension::answer_accuracy},
      {"answer_accuracy", Dimension::answer_accuracy},
      {"accuracy_of_correct_answer", Dimension::answer_accuracy},
      {"distractors", Dimension::distractor_quality},
      {"distractor", Dimension::distractor_quality},
      {"distractor_quality", Dimension::distractor_quality},
      {"quality_of_distractors", Dimension::distractor_quality},
      {"word", Dimension::word_difficulty_fit},
      {"word_difficulty", Dimension::word_difficulty_fit},
      {"word_difficulty_fit", Dimension::word_difficulty_fit},
      {"task", Dimension::task_difficulty_fit},
      {"task_difficulty", Dimension::task_difficulty_fit},
      {"task_difficulty_fit", Dimension::task_difficulty_fit},
  };
  auto it = names.find(k);
  if (it == names.end()) return std::nullopt;
  return it->second;
}

struct RubricDimensions {
  std::array<int, kDimensionCount> values{};

  static RubricDimensions of(std::array<int, kDimensionCount> v) {
    RubricDimensions d;
    for (std::size_t i = 0; i < kDimensionCount; ++i) d.set(kAllDimensions[i], v[i]);
    return d;
  }

  int get(Dimension d) const { return values[static_cast<std::size_t>(d)]; }
  void set(Dimension d, int v) {
    if (v != 0 && v != 1) throw ValidationError("rubric value for " + to_string(d) + " must be 0 or 1");
    values[static_cast<std::size_t>(d)] = v;
  }
  int sum() const { return values[0] + values[1] + values[2] + values[3] + values[4]; }
  bool operator==(const RubricDimensions&) const = default;
};

// The total is always derived from the dimensions.
class RubricScore {
 public:
  RubricScore() = default;
  explicit RubricScore(RubricDimensions dims, std::string rationale = {})
      : dims_(dims), total_(dims.sum()), rationale_(std::move(rationale)) {}

  const RubricDimensions& dims() const { return dims_; }
  int total() const { return total_; }
  const std::string& rationale() const { return rationale_; }
  bool operator==(const RubricScore&) const = default;

 private:
  RubricDimensions dims_;
  int total_ = 0;
  std::string rationale_;
};

inline nlohmann::ordered_json dims_to_json(const RubricDimensions& d) {
  nlohmann::ordered_json j;
  for (auto dim : kAllDimensions) j[to_string(dim)] = d.get(dim);
  return j;
}

inline RubricDimensions dims_from_json(const nlohmann::json& j) {
  RubricDimensions d;
  for (auto dim : kAllDimensions) {
    const auto key = to_string(dim);
    if (!j.contains(key)) throw ValidationError("missing rubric field '" + key + "'");
    const auto& v = j[key];
    if (!v.is_number_integer()) throw ValidationError("rubric field '" + key + "' must be 0 or 1");
    d.set(dim, v.get<int>());
  }
  return d;
}

// ---------------------------------------------------------------------------
// Dimension definitions asset: blocks headed "[<dimension>]".

struct DimensionDefs {
  std::array<std::string, kDimensionCount> text;
  std::string version;

  const std::string& of(Dimension d) const { return text[static_cast<std::size_t>(d)]; }

  static DimensionDefs parse(std::string_view body, std::string version = {}) {
    DimensionDefs defs;
    defs.version = std::move(version);
    std::optional<Dimension> current;
    std::array<bool, kDimensionCount> seen{};
    for (const auto& raw : text::split_lines(body)) {
      auto line = text::trim(raw);
      if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
        current = parse_dimension(line.substr(1, line.size() - 2));
        if (!current) throw ConfigError("unknown rubric dimension header " + std::string(line));
        seen[static_cast<std::size_t>(*current)] = true;
        continue;
      }
      if (!current || line.empty()) continue;
      auto& t = defs.text[static_cast<std::size_t>(*current)];
      if (!t.empty()) t += ' ';
      t += line;
    }
    for (auto d : kAllDimensions) {
      if (!seen[static_cast<std::size_t>(d)] || defs.of(d).empty()) {
        throw ConfigError("rubric definitions lack dimension '" + to_string(d) + "'");
      }
    }
    return defs;
  }

  static DimensionDefs from_registry(const TemplateRegistry& reg) {
    return parse(reg.get("rubric/dimensions"), reg.version());
  }
};

// ---------------------------------------------------------------------------
// Prompt and reply

struct JudgeExemplar {
  Item item;
  RubricDimensions dims;
};

inline std::string reply_format_directive() {
  std::string out = "Reply with exactly these five lines and nothing else, each value 0 or 1:\n";
  for (auto d : kAllDimensions) out += to_string(d) + ": <0 or 1>\n";
  return out;
}

inline std::string labeled_block(const Item& item) {
  return "Question type: " + to_string(item.qt) + " (" + std::string(description(item.qt)) + ")\n" +
         "Word difficulty: " + std::to_string(item.word_diff.recoded) + " of 5\n" +
         "Task difficulty: " + to_string(item.task_diff.recoded) + "\n" + serialize_item(item);
}

inline std::string build_judge_prompt(const Item& item, const std::vector<JudgeExemplar>& exemplars,
                                      const DimensionDefs& defs) {
  if (exemplars.empty()) throw ValidationError("judge prompt needs at least one labeled exemplar");
  std::string p =
      "You review multiple-choice morphology items written for students in grades 3-5. Score the item below "
      "on five dimensions, 1 when the item meets the dimension and 0 when it does not.\n\nDimensions:\n";
  for (auto d : kAllDimensions) p += "- " + to_string(d) + ": " + defs.of(d) + "\n";
  p += "\nItems already scored by expert reviewers:\n";
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    p += "\n### Example " + std::to_string(i + 1) + "\n" + labeled_block(exemplars[i].item) + "Scores:\n";
    for (auto d : kAllDimensions) p += to_string(d) + ": " + std::to_string(exemplars[i].dims.get(d)) + "\n";
  }
  p += "\n### Item to score\n" + labeled_block(item) + "\n" + reply_format_directive();
  return p;
}

struct JudgeReplyParse {
  std::optional<RubricDimensions> dims;
  std::string problem;
  std::string rationale;
};

// 1/0, yes/no, true/false (any case) per field. Unknown keys are ignored.
inline std::optional<int> normalize_judge_value(std::string_view v) {
  auto s = text::lower(text::trim(v));
  while (!s.empty() && (s.back() == '.' || s.back() == ',' || s.back() == ';' || s.back() == '*')) s.pop_back();
  while (!s.empty() && (s.front() == '*' || s.front() == '"')) s.erase(0, 1);
  if (s == "1" || s == "yes" || s == "true") return 1;
  if (s == "0" || s == "no" || s == "false") return 0;
  return std::nullopt;
}

inline JudgeReplyParse parse_judge_reply(std::string_view reply) {
  JudgeReplyParse out;
  std::array<std::optional<int>, kDimensionCount> vals;
  const std::string r(reply);
  static const std::regex field(R"(([A-Za-z][A-Za-z_ \-]*?)\s*\**\s*[:=]\s*\**\s*([A-Za-z0-9"]+))");
  static const std::regex rationale_re(R"((?:^|\n)\s*rationale\s*:\s*([^\n]*))", std::regex::icase);
  std::smatch rm;
  if (std::regex_search(r, rm, rationale_re)) out.rationale = std::string(text::trim(rm[1].str()));
  for (auto it = std::sregex_iterator(r.begin(), r.end(), field); it != std::sregex_iterator(); ++it) {
    auto key = (*it)[1].str();
    // keys may carry a bullet or leading words ("- clarity"); try the last words first
    std::optional<Dimension> dim = parse_dimension(key);
    if (!dim) {
      auto ws = text::words(key);
      for (std::size_t take = std::min<std::size_t>(ws.size(), 4); take >= 1 && !dim; --take) {
        std::vector<std::string> tail(ws.end() - static_cast<std::ptrdiff_t>(take), ws.end());
        dim = parse_dimension(text::join(tail, "_"));
      }
    }
    if (!dim) continue;
    auto v = normalize_judge_value((*it)[2].str());
    const auto idx = static_cast<std::size_t>(*dim);
    if (!v) {
      out.problem = "field " + to_string(*dim) + " has unreadable value \"" + (*it)[2].str() + "\"";
      return out;
    }
    if (vals[idx] && *vals[idx] != *v) {
      out.problem = "field " + to_string(*dim) + " given twice with different values";
      return out;
    }
    vals[idx] = v;
  }
  RubricDimensions d;
  for (auto dim : kAllDimensions) {
    const auto& v = vals[static_cast<std::size_t>(dim)];
    if (!v) {
      out.problem = "field " + to_string(dim) + " is missing";
      return out;
    }
    d.set(dim, *v);
  }
  out.dims = d;
  return out;
}

// Judge backed by a chat gateway at temperature 0. One re-ask on an
// unreadable reply, then JudgeParseError.
class Judge {
 public:
  Judge(std::shared_ptr<ChatBackend> backend, BackendConfig cfg, std::vector<JudgeExemplar> exemplars,
        DimensionDefs defs, std::size_t max_in_flight = 4, Sleeper sleeper = real_sleeper())
      : cfg_(force_temperature(std::move(cfg))),
        gateway_(std::move(backend), cfg_, max_in_flight, std::move(sleeper)),
        exemplars_(std::move(exemplars)),
        defs_(std::move(defs)) {
    if (exemplars_.empty()) throw ValidationError("judge needs at least one labeled exemplar");
  }

  RubricScore judge(const Item& item) {
    const std::string prompt = build_judge_prompt(item, exemplars_, defs_);
    auto first = gateway_.complete(prompt);
    auto parsed = parse_judge_reply(first.text);
    if (parsed.dims) return RubricScore(*parsed.dims, parsed.rationale);
    const std::string reask = prompt + "\n\nYour previous reply could not be read (" + parsed.problem +
                              "). Previous reply:\n" + first.text + "\n\n" + reply_format_directive();
    auto second = gateway_.complete(reask);
    auto again = parse_judge_reply(second.text);
    if (again.dims) return RubricScore(*again.dims, again.rationale);
    throw JudgeParseError("judge reply unreadable after re-ask: " + again.problem);
  }

  const BackendConfig& config() const { return cfg_; }
  const std::vector<JudgeExemplar>& exemplars() const { return exemplars_; }
  const DimensionDefs& defs() const { return defs_; }

 private:
  static BackendConfig force_temperature(BackendConfig c) {
    c.temperature = kJudgeTemperature;
    return c;
  }

  BackendConfig cfg_;
  Gateway gateway_;
  std::vector<JudgeExemplar> exemplars_;
  DimensionDefs defs_;
};

// ---------------------------------------------------------------------------
// Expert labels

struct ExpertRecord {
  std::string item_id;
  std::string annotator_id;
  RubricDimensions dims;
};

struct QtMeans {
  QuestionType qt;
  std::array<double, kDimensionCount> means{};
  std::optional<double> published_total;

  double sum() const { return means[0] + means[1] + means[2] + means[3] + means[4]; }
};

struct ExpertLabelSet {
  std::vector<ExpertRecord> records;
  std::vector<QtMeans> qt_means;
};

inline ExpertLabelSet parse_expert_labels(std::string_view data) {
  ExpertLabelSet out;
  std::size_t line_no = 0;
  for (const auto& raw : text::split_lines(data)) {
    ++line_no;
    auto line = text::trim(raw);
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(line_no, std::string("invalid JSON: ") + e.what());
    }
    try {
      if (j.contains("means")) {
        QtMeans m;
        m.qt = parse_question_type(j.at("qt").get<std::string>());
        for (auto d : kAllDimensions) {
          double v = j["means"].at(to_string(d)).get<double>();
          if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(to_string(d) + " mean outside [0,1]");
          m.means[static_cast<std::size_t>(d)] = v;
        }
        if (j.contains("total") && !j["total"].is_null()) m.published_total = j["total"].get<double>();
        out.qt_means.push_back(m);
      } else {
        ExpertRecord r;
        r.item_id = j.at("item_id").get<std::string>();
        r.annotator_id = j.value("annotator_id", "");
        r.dims = dims_from_json(j.contains("dims") ? j["dims"] : j);
        out.records.push_back(std::move(r));
      }
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(line_no, e.what());
    } catch (const ValidationError& e) {
      throw SchemaError(line_no, e.what());
    }
  }
  return out;
}

inline ExpertLabelSet load_expert_labels(const std::string& path) { return parse_expert_labels(detail::read_file(path)); }

// Joins expert records with their items, one exemplar per item (first
// annotator by id). Unknown item ids are an error.
inline std::vector<JudgeExemplar> labeled_pool(const ExpertLabelSet& labels, const Corpus& corpus) {
  std::map<std::string, const Item*> by_id;
  for (const auto& it : corpus.items) by_id[it.id] = &it;
  std::map<std::string, const ExpertRecord*> first;
  for (const auto& r : labels.records) {
    if (!by_id.count(r.item_id)) throw ValidationError("expert label for unknown item '" + r.item_id + "'");
    auto [pos, inserted] = first.emplace(r.item_id, &r);
    if (!inserted && r.annotator_id < pos->second->annotator_id) pos->second = &r;
  }
  std::vector<JudgeExemplar> out;
  for (const auto& [id, rec] : first) out.push_back({*by_id[id], rec->dims});
  return out;
}

inline constexpr std::size_t kDefaultJudgeExemplars = 13;

// Round-robin over question types in QT order, items within a type in seeded
// order, until `count` exemplars are chosen or the pool runs out.
inline std::vector<JudgeExemplar> select_judge_exemplars(const std::vector<JudgeExemplar>& pool,
                                                         std::size_t count = kDefaultJudgeExemplars,
                                                         std::uint64_t seed = 0) {
  std::map<int, std::vector<JudgeExemplar>> by_qt;
  for (const auto& e : pool) by_qt[qt_number(e.item.qt)].push_back(e);
  std::mt19937_64 rng(seed);
  for (auto& [qt, v] : by_qt) {
    std::sort(v.begin(), v.end(), [](const JudgeExemplar& a, const JudgeExemplar& b) { return a.item.id < b.item.id; });
    seeded_shuffle(v, rng);
  }
  std::vector<JudgeExemplar> out;
  for (std::size_t round = 0; out.size() < count; ++round) {
    bool any = false;
    for (auto& [qt, v] : by_qt) {
      if (round < v.size() && out.size() < count) {
        out.push_back(v[round]);
        any = true;
      }
    }
    if (!any) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

struct RubricRow {
  std::string key;
  std::size_t n = 0;
  std::array<double, kDimensionCount> means{};
  double mean_total = 0;
};

struct RubricAggregate {
  std::vector<RubricRow> rows;
  std::vector<std::string> warnings;
};

inline RubricRow aggregate_group(std::string key, const std::vector<RubricScore>& scores) {
  if (scores.empty()) throw ValidationError("aggregate: empty group '" + key + "'");
  RubricRow row;
  row.key = std::move(key);
  row.n = scores.size();
  std::array<long long, kDimensionCount> sums{};
  long long total = 0;
  for (const auto& s : scores) {
    for (std::size_t i = 0; i < kDimensionCount; ++i) sums[i] += s.dims().values[i];
    total += s.total();
  }
  const double n = static_cast<double>(scores.size());
  for (std::size_t i = 0; i < kDimensionCount; ++i) row.means[i] = static_cast<double>(sums[i]) / n;
  row.mean_total = static_cast<double>(total) / n;
  return row;
}

// Rows in `expected_keys` order (or key order when none is given); expected
// keys without scores are omitted with a warning.
inline RubricAggregate aggregate(const std::vector<std::pair<std::string, RubricScore>>& keyed,
                                 const std::vector<std::string>& expected_keys = {}) {
  std::map<std::string, std::vector<RubricScore>> groups;
  for (const auto& [k, s] : keyed) groups[k].push_back(s);
  RubricAggregate out;
  std::vector<std::string> keys = expected_keys;
  if (keys.empty()) {
    for (const auto& [k, v] : groups) keys.push_back(k);
  }
  for (const auto& k : keys) {
    auto it = groups.find(k);
    if (it == groups.end()) {
      out.warnings.push_back("no scored items for group '" + k + "'; row omitted");
      continue;
    }
    out.rows.push_back(aggregate_group(k, it->second));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Agreement

struct DimensionAgreement {
  double accuracy = 0;
  std::size_t both_one = 0;      // judge 1, expert 1
  std::size_t both_zero = 0;     // judge 0, expert 0
  std::size_t judge_only = 0;    // judge 1, expert 0
  std::size_t expert_only = 0;   // judge 0, expert 1
};

struct AgreementReport {
  std::array<DimensionAgreement, kDimensionCount> dims{};
  std::size_t compared = 0;       // expert records with a judge score
  std::size_t overlap_items = 0;  // distinct item ids compared
  std::size_t expert_items = 0;
  double coverage = 0;            // overlap_items / expert_items

  const DimensionAgreement& of(Dimension d) const { return dims[static_cast<std::size_t>(d)]; }
};

inline AgreementReport agreement(const std::map<std::string, RubricScore>& judge_scores, const ExpertLabelSet& expert) {
  AgreementReport rep;
  std::set<std::string> expert_ids, overlap;
  for (const auto& r : expert.records) {
    expert_ids.insert(r.item_id);
    auto it = judge_scores.find(r.item_id);
    if (it == judge_scores.end()) continue;
    overlap.insert(r.item_id);
    ++rep.compared;
    for (std::size_t i = 0; i < kDimensionCount; ++i) {
      const int j = it->second.dims().values[i];
      const int e = r.dims.values[i];
      auto& a = rep.dims[i];
      if (j == 1 && e == 1) ++a.both_one;
      else if (j == 0 && e == 0) ++a.both_zero;
      else if (j == 1) ++a.judge_only;
      else ++a.expert_only;
    }
  }
  if (rep.compared == 0) throw ValidationError("agreement: judge and expert labels share no item ids");
  for (auto& a : rep.dims) {
    a.accuracy = static_cast<double>(a.both_one + a.both_zero) / static_cast<double>(rep.compared);
  }
  rep.overlap_items = overlap.size();
  rep.expert_items = expert_ids.size();
  rep.coverage = static_cast<double>(rep.overlap_items) / static_cast<double>(rep.expert_items);
  return rep;
}

}  // namespace morphgen
