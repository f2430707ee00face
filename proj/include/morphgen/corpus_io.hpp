#pragma once

// Corpus persistence, summary statistics and stratified splitting.
//
// Canonical storage is JSON Lines, UTF-8, one item per line:
//
//   {"id":"q1","stem":"What is the prefix in the word miswrote?",
//    "options":["mis","misw","ote"],"answer_index":0,"qt":"QT1",
//    "skill":"recognition","morph":"derivational","word_diff_raw":2.5,
//    "task_diff_raw":1.0,"target_word":"miswrote","target_morpheme":"mis"}
//
// An optional first line {"schema_version":"..."} (no "id") names the schema.
// CSV import maps columns by header name (see load_corpus).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "morphgen/error.hpp"
#include "morphgen/item_model.hpp"
#include "morphgen/spearman.hpp"
#include "morphgen/text.hpp"

namespace morphgen {

inline constexpr const char* kCorpusSchemaVersion = "morphgen.items/1";

struct Corpus {
  std::vector<Item> items;
  std::string source;
  std::string schema_version = kCorpusSchemaVersion;
};

enum class CorpusFormat { jsonl, csv };

inline CorpusFormat parse_corpus_format(std::string_view s) {
  auto v = text::lower(s);
  if (v == "jsonl" || v == "json") return CorpusFormat::jsonl;
  if (v == "csv") return CorpusFormat::csv;
  throw ConfigError("unknown corpus format '" + std::string(s) + "' (expected jsonl or csv)");
}

inline CorpusFormat format_from_path(const std::string& path) {
  return text::ends_with(text::lower(path), ".csv") ? CorpusFormat::csv : CorpusFormat::jsonl;
}

struct LoadOptions {
  TaskThresholds task_thresholds;
};

// ---------------------------------------------------------------------------
// JSON record mapping

inline nlohmann::ordered_json item_to_json(const Item& item) {
  nlohmann::ordered_json j;
  j["id"] = item.id;
  j["stem"] = item.stem;
  j["options"] = item.options;
  j["answer_index"] = item.answer_index;
  j["qt"] = to_string(item.qt);
  j["skill"] = to_string(item.skill);
  j["morph"] = to_string(item.morph);
  j["word_diff_raw"] = item.word_diff.raw;
  j["task_diff_raw"] = item.task_diff.raw;
  j["target_word"] = item.target_word;
  if (item.target_morpheme) {
    j["target_morpheme"] = *item.target_morpheme;
  } else {
    j["target_morpheme"] = nullptr;
  }
  return j;
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) throw SchemaError(line, std::string("missing required field '") + key + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& j, const char* key, std::size_t line) {
  const auto& v = require(j, key, line);
  if (!v.is_string()) throw SchemaError(line, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline double require_number(const nlohmann::json& j, const char* key, std::size_t line) {
  const auto& v = require(j, key, line);
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    try {
      std::size_t used = 0;
      double d = std::stod(v.get<std::string>(), &used);
      if (used == v.get<std::string>().size()) return d;
    } catch (const std::exception&) {
    }
  }
  throw SchemaError(line, std::string("field '") + key + "' must be a number");
}

inline std::size_t parse_answer(const nlohmann::json& v, std::size_t line) {
  if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)) {
    return v.get<std::size_t>();
  }
  if (v.is_string()) {
    auto s = text::trim(v.get_ref<const std::string&>());
    if (s.size() == 1 && text::is_alpha(s[0])) return static_cast<std::size_t>(std::toupper(s[0]) - 'A');
    if (!s.empty() && std::all_of(s.begin(), s.end(), text::is_digit)) return std::stoul(std::string(s));
  }
  throw SchemaError(line, "answer must be a 0-based index or an option letter");
}

// Wraps library validation errors so they carry the record line.
template <typename F>
auto at_line(std::size_t line, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const SchemaError&) {
    throw;
  } catch (const ValidationError& e) {
    throw SchemaError(line, e.what());
  }
}

}  // namespace detail

inline Item item_from_json(const nlohmann::json& j, std::size_t line = 0, const LoadOptions& opts = {}) {
  if (!j.is_object()) throw SchemaError(line, "record is not a JSON object");
  Item item;
  item.id = detail::require_string(j, "id", line);
  item.stem = detail::require_string(j, "stem", line);
  const auto& opts_json = detail::require(j, "options", line);
  if (!opts_json.is_array()) throw SchemaError(line, "field 'options' must be an array of strings");
  for (const auto& o : opts_json) {
    if (!o.is_string()) throw SchemaError(line, "field 'options' must be an array of strings");
    item.options.push_back(o.get<std::string>());
  }
  if (j.contains("answer_index") && !j["answer_index"].is_null()) {
    item.answer_index = detail::parse_answer(j["answer_index"], line);
  } else if (j.contains("answer") && !j["answer"].is_null()) {
    item.answer_index = detail::parse_answer(j["answer"], line);
  } else {
    throw SchemaError(line, "missing required field 'answer_index' (or 'answer')");
  }
  item.qt = detail::at_line(line, [&] { return parse_question_type(detail::require_string(j, "qt", line)); });
  item.skill = detail::at_line(line, [&] { return parse_skill(detail::require_string(j, "skill", line)); });
  item.morph = detail::at_line(line, [&] { return parse_morph(detail::require_string(j, "morph", line)); });
  double wraw = detail::require_number(j, "word_diff_raw", line);
  item.word_diff = detail::at_line(line, [&] { return WordDifficulty::from_raw(wraw); });
  double traw = detail::require_number(j, "task_diff_raw", line);
  item.task_diff = detail::at_line(line, [&] { return TaskDifficulty::from_raw(traw, opts.task_thresholds); });
  if (auto it = j.find("target_word"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw SchemaError(line, "field 'target_word' must be a string");
    item.target_word = it->get<std::string>();
  }
  if (auto it = j.find("target_morpheme"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw SchemaError(line, "field 'target_morpheme' must be a string");
    item.target_morpheme = it->get<std::string>();
  }
  return item;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

// RFC 4180 records: quoted fields, doubled quotes, embedded newlines.
// Each record is returned with the 1-based line on which it starts.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> read_csv(const std::string& data) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t row_line = 1;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    bool blank = row.size() == 1 && row[0].empty();
    if (!blank) rows.emplace_back(row_line, std::move(row));
    row.clear();
  };

  for (std::size_t i = 0; i < data.size(); ++i) {
    char c = data[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < data.size() && data[i + 1] == '\n') ++i;
      end_row();
      ++line;
      row_line = line;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw SchemaError(row_line, "unterminated quoted CSV field");
  if (!row.empty() || !field.empty() || field_started) end_row();
  return rows;
}

// Converts one CSV row to the canonical JSON record.
//
// Options come from an "options" column ("|"-separated) or from columns
// option_a, option_b, ... ; the answer from "answer_index" or "answer".
inline nlohmann::json csv_row_to_json(const std::vector<std::string>& header,
                                      const std::vector<std::string>& row, std::size_t line) {
  if (row.size() != header.size()) {
    throw SchemaError(line, "expected " + std::to_string(header.size()) + " CSV fields, got " +
                                std::to_string(row.size()));
  }
  nlohmann::json j = nlohmann::json::object();
  std::map<char, std::string> lettered;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string key = text::lower(text::trim(header[i]));
    const std::string& value = row[i];
    if (key == "options") {
      auto parts = text::split(value, '|');
      nlohmann::json arr = nlohmann::json::array();
      for (auto& p : parts) arr.push_back(std::string(text::trim(p)));
      j["options"] = arr;
    } else if (text::starts_with(key, "option_") && key.size() == 8 && text::is_alpha(key[7])) {
      if (!text::trim(value).empty()) lettered[static_cast<char>(std::toupper(key[7]))] = value;
    } else if (key == "target_morpheme" && text::trim(value).empty()) {
      j[key] = nullptr;
    } else if (!key.empty()) {
      j[key] = value;
    }
  }
  if (!j.contains("options") && !lettered.empty()) {
    nlohmann::json arr = nlohmann::json::array();
    for (auto& [letter, v] : lettered) arr.push_back(v);
    j["options"] = arr;
  }
  for (const char* numeric : {"answer_index"}) {
    if (j.contains(numeric) && j[numeric].is_string() && text::trim(j[numeric].get<std::string>()).empty()) {
      j.erase(numeric);
    }
  }
  return j;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << data;
  out.flush();
  if (!out) throw IoError("write failure on '" + path + "'");
}

}  // namespace detail

// Parses corpus text. Every bad record is reported; the thrown SchemaError
// names the first bad line and lists all of them.
inline Corpus parse_corpus(const std::string& data, CorpusFormat format, const std::string& source = {},
                           const LoadOptions& opts = {}) {
  Corpus corpus;
  corpus.source = source;
  std::vector<std::pair<std::size_t, nlohmann::json>> records;

  if (format == CorpusFormat::jsonl) {
    auto lines = text::split_lines(data);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (text::trim(lines[i]).empty()) continue;
      const std::size_t line = i + 1;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(lines[i]);
      } catch (const nlohmann::json::parse_error& e) {
        records.emplace_back(line, nlohmann::json(std::string("invalid JSON: ") + e.what()));
        continue;
      }
      if (records.empty() && j.is_object() && j.contains("schema_version") && !j.contains("id")) {
        corpus.schema_version = j["schema_version"].get<std::string>();
        continue;
      }
      records.emplace_back(line, std::move(j));
    }
  } else {
    auto rows = detail::read_csv(data);
    if (rows.empty()) throw SchemaError(1, "CSV input has no header row");
    const auto& header = rows.front().second;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      try {
        records.emplace_back(rows[r].first, detail::csv_row_to_json(header, rows[r].second, rows[r].first));
      } catch (const SchemaError& e) {
        records.emplace_back(rows[r].first, nlohmann::json(std::string(e.what())));
      }
    }
  }

  std::vector<std::string> problems;
  std::size_t first_bad = 0;
  std::unordered_set<std::string> ids;
  std::string first_duplicate;
  for (auto& [line, j] : records) {
    auto fail = [&, line = line](const std::string& msg) {
      if (problems.empty()) first_bad = line;
      problems.push_back(msg);
    };
    if (j.is_string()) {  // carried-over parse failure
      std::string msg = j.get<std::string>();
      fail(text::starts_with(msg, "line ") ? msg : "line " + std::to_string(line) + ": " + msg);
      continue;
    }
    try {
      Item item = item_from_json(j, line, opts);
      auto violations = validate_item(item);
      if (!violations.empty()) {
        std::string msg = "line " + std::to_string(line) + ": item '" + item.id + "' invalid:";
        for (auto& v : violations) msg += " [" + v.field + "/" + v.rule + "] " + v.message + ";";
        fail(msg);
        continue;
      }
      if (!ids.insert(item.id).second) {
        if (first_duplicate.empty()) first_duplicate = item.id;
        continue;
      }
      corpus.items.push_back(std::move(item));
    } catch (const SchemaError& e) {
      fail(e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " bad record(s): " + text::join(problems, " | ");
    // SchemaError prefixes the first bad line itself.
    throw SchemaError(first_bad, msg);
  }
  if (!first_duplicate.empty()) throw DuplicateIdError(first_duplicate);
  return corpus;
}

inline Corpus load_corpus(const std::string& path, CorpusFormat format, const LoadOptions& opts = {}) {
  return parse_corpus(detail::read_file(path), format, path, opts);
}

inline Corpus load_corpus(const std::string& path) { return load_corpus(path, format_from_path(path)); }

inline std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  nlohmann::ordered_json header;
  header["schema_version"] = corpus.schema_version;
  out += header.dump() + "\n";
  for (const auto& item : corpus.items) out += item_to_json(item).dump() + "\n";
  return out;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  detail::write_file(path, serialize_corpus(corpus));
}

// ---------------------------------------------------------------------------
// Summary

using CountTable = std::vector<std::pair<std::string, std::size_t>>;

struct CorpusSummary {
  std::size_t total = 0;
  CountTable by_qt, by_skill, by_morph, by_word_diff, by_task_diff;
  double stem_words_mean = 0;
  std::size_t stem_words_min = 0;
  std::size_t stem_words_max = 0;

  friend bool operator==(const CorpusSummary&, const CorpusSummary&) = default;
};

inline std::size_t count_of(const CountTable& table, std::string_view key) {
  for (auto& [k, v] : table) {
    if (k == key) return v;
  }
  return 0;
}

inline CorpusSummary summarize(const Corpus& corpus) {
  if (corpus.items.empty()) throw ValidationError("cannot summarize an empty corpus");
  CorpusSummary s;
  s.total = corpus.items.size();
  for (auto qt : all_question_types()) s.by_qt.emplace_back(to_string(qt), 0);
  for (auto sk : {SkillFocus::recognition, SkillFocus::comprehension, SkillFocus::problem_solving}) {
    s.by_skill.emplace_back(to_string(sk), 0);
  }
  for (auto m : {MorphCategory::derivational, MorphCategory::inflectional, MorphCategory::inflectional_and_derivational,
                 MorphCategory::define, MorphCategory::syntactic, MorphCategory::address_word_parts}) {
    s.by_morph.emplace_back(to_string(m), 0);
  }
  for (int level = 1; level <= 5; ++level) s.by_word_diff.emplace_back(std::to_string(level), 0);
  for (auto t : {TaskLevel::easy, TaskLevel::medium, TaskLevel::hard}) s.by_task_diff.emplace_back(to_string(t), 0);

  auto bump = [](CountTable& table, const std::string& key) {
    for (auto& [k, v] : table) {
      if (k == key) {
        ++v;
        return;
      }
    }
    table.emplace_back(key, 1);
  };

  std::size_t word_sum = 0;
  s.stem_words_min = std::numeric_limits<std::size_t>::max();
  for (const auto& item : corpus.items) {
    bump(s.by_qt, to_string(item.qt));
    bump(s.by_skill, to_string(item.skill));
    bump(s.by_morph, to_string(item.morph));
    bump(s.by_word_diff, std::to_string(item.word_diff.recoded));
    bump(s.by_task_diff, to_string(item.task_diff.recoded));
    const auto w = text::word_count(item.stem);
    word_sum += w;
    s.stem_words_min = std::min(s.stem_words_min, w);
    s.stem_words_max = std::max(s.stem_words_max, w);
  }
  s.stem_words_mean = static_cast<double>(word_sum) / static_cast<double>(s.total);
  return s;
}

// Rank correlation between word and task difficulty, on raw ratings or on
// the recoded levels.
inline double difficulty_correlation(const Corpus& corpus, bool recoded) {
  std::vector<double> xs, ys;
  for (const auto& item : corpus.items) {
    xs.push_back(recoded ? item.word_diff.recoded : item.word_diff.raw);
    ys.push_back(recoded ? static_cast<double>(item.task_diff.recoded) : item.task_diff.raw);
  }
  return spearman_rho(xs, ys);
}

// ---------------------------------------------------------------------------
// Stratified split

enum class StratumKey { qt, word_diff, task_diff };

inline StratumKey parse_stratum_key(std::string_view s) {
  auto v = text::lower(text::trim(s));
  if (v == "qt") return StratumKey::qt;
  if (v == "word_diff") return StratumKey::word_diff;
  if (v == "task_diff") return StratumKey::task_diff;
  throw ConfigError("unknown stratum key '" + std::string(s) + "' (expected qt, word_diff or task_diff)");
}

struct SplitSpec {
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::vector<StratumKey> strata_keys{StratumKey::qt, StratumKey::task_diff};
  std::uint64_t seed = 0;

  void check() const {
    double sum = 0;
    for (double r : ratios) {
      if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("split ratios must all be > 0");
      sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1.0, got " + text::fixed(sum, 12));
  }
};

struct SplitWarning {
  std::string stratum;
  std::size_t size = 0;
  std::string message;
};

struct SplitResult {
  Corpus train, val, test;
  std::vector<SplitWarning> warnings;
};

inline std::string stratum_of(const Item& item, const std::vector<StratumKey>& keys) {
  std::string out;
  for (auto k : keys) {
    if (!out.empty()) out += '|';
    switch (k) {
      case StratumKey::qt: {
        // zero-padded so lexical order follows numeric order
        int n = qt_number(item.qt);
        out += std::string("QT") + (n < 10 ? "0" : "") + std::to_string(n);
        break;
      }
      case StratumKey::word_diff: out += "W" + std::to_string(item.word_diff.recoded); break;
      case StratumKey::task_diff: out += "T" + std::to_string(static_cast<int>(item.task_diff.recoded)); break;
    }
  }
  return out;
}

// Largest-remainder apportionment of n over the ratios. Equal remainders
// (within 1e-9) go to the earlier split.
inline std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double quota = ratios[k] * static_cast<double>(n);
    // guard against quotas like 26.999999999 landing one short
    double fl = std::floor(quota + 1e-9);
    counts[k] = static_cast<std::size_t>(fl);
    remainders[k] = std::max(0.0, quota - fl);
    assigned += counts[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainders[a] > remainders[b] + 1e-9;
  });
  for (std::size_t i = 0; assigned < n; i = (i + 1) % 3, ++assigned) ++counts[order[i]];
  return counts;
}

// Uniform integer in [0, bound) from a 64-bit Mersenne Twister by rejection.
// Fixed algorithm: threshold = (2^64 - bound) mod bound; draw until r >= threshold;
// return r mod bound.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  while (true) {
    std::uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

// Fisher-Yates, iterating i from n-1 down to 1 and swapping with uniform_below(i+1).
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

// Within each stratum (visited in lexical key order) items are sorted by id,
// shuffled with one std::mt19937_64 seeded by spec.seed, and cut into
// train/val/test by largest-remainder counts.
inline SplitResult stratified_split(const Corpus& corpus, const SplitSpec& spec) {
  spec.check();
  std::map<std::string, std::vector<const Item*>> strata;
  for (const auto& item : corpus.items) strata[stratum_of(item, spec.strata_keys)].push_back(&item);

  SplitResult out;
  for (Corpus* c : {&out.train, &out.val, &out.test}) {
    c->source = corpus.source;
    c->schema_version = corpus.schema_version;
  }
  std::mt19937_64 rng(spec.seed);
  for (auto& [key, members] : strata) {
    std::sort(members.begin(), members.end(), [](const Item* a, const Item* b) { return a->id < b->id; });
    seeded_shuffle(members, rng);
    auto counts = apportion(members.size(), spec.ratios);
    std::size_t nonzero_quota = 0;
    for (double r : spec.ratios) nonzero_quota += r > 0 ? 1 : 0;
    if (members.size() < nonzero_quota) {
      out.warnings.push_back({key, members.size(),
                              "stratum '" + key + "' has " + std::to_string(members.size()) +
                                  " item(s), fewer than the " + std::to_string(nonzero_quota) +
                                  " splits; assigned by remainder order"});
    }
    std::size_t pos = 0;
    Corpus* dest[3] = {&out.train, &out.val, &out.test};
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t i = 0; i < counts[k]; ++i) dest[k]->items.push_back(*members[pos++]);
    }
  }
  return out;
}

}  // namespace morphgen
