#pragma once

// Aggregation of per-item records into strategy tables and export.
//
// Markdown layout: one header row "| Prompting Strategy | <Group> (<model>) | ... |",
// an alignment row, one row per strategy, then the summary row ("Average" or
// "Grand Avg."). Missing cells render as U+2014. CSV uses the same header
// labels with missing cells left empty.

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "morphgen/auto_metrics.hpp"
#include "morphgen/corpus_io.hpp"
#include "morphgen/item_model.hpp"
#include "morphgen/prompt_engine.hpp"
#include "morphgen/rubric_judge.hpp"
#include "morphgen/text.hpp"

namespace morphgen {

enum class Metric { complexity, fluency, grammar, readability };

inline constexpr std::array<Metric, 4> kAllMetrics = {Metric::complexity, Metric::fluency, Metric::grammar,
                                                      Metric::readability};

inline std::string to_string(Metric m) {
  switch (m) {
    case Metric::complexity: return "complexity";
    case Metric::fluency: return "fluency";
    case Metric::grammar: return "grammar";
    case Metric::readability: return "readability";
  }
  return {};
}

inline std::string display_name(Metric m) {
  auto s = to_string(m);
  s[0] = static_cast<char>(std::toupper(s[0]));
  return s;
}

struct ScoreRecord {
  std::string item_id;
  StrategyId strategy = StrategyId::zero_shot;
  std::string model;
  QuestionType qt = QuestionType::QT1;
  std::array<std::optional<double>, 4> scores;  // kAllMetrics order

  std::optional<double> get(Metric m) const { return scores[static_cast<std::size_t>(m)]; }
};

inline ScoreRecord score_record(std::string item_id, StrategyId s, std::string model, QuestionType qt,
                                const MetricReport& r) {
  return {std::move(item_id), s, std::move(model), qt, {r.complexity, r.fluency, r.grammar, r.readability}};
}

struct RubricRecord {
  std::string item_id;
  StrategyId strategy = StrategyId::zero_shot;
  std::string model;
  QuestionType qt = QuestionType::QT1;
  std::optional<RubricScore> score;  // absent when the item went unscored
  std::string error;
};

// ---------------------------------------------------------------------------
// Record persistence (metrics.jsonl / rubric.jsonl lines)

inline nlohmann::ordered_json metric_line(const ScoreRecord& rec, const MetricReport& report) {
  nlohmann::ordered_json j;
  j["item_id"] = rec.item_id;
  j["strategy"] = to_string(rec.strategy);
  j["model"] = rec.model;
  j["qt"] = to_string(rec.qt);
  const auto body = report_to_json(report);
  for (auto& [k, v] : body.items()) j[k] = v;
  return j;
}

inline ScoreRecord score_record_from_json(const nlohmann::json& j) {
  ScoreRecord r;
  r.item_id = j.at("item_id").get<std::string>();
  r.strategy = parse_strategy(j.at("strategy").get<std::string>());
  r.model = j.at("model").get<std::string>();
  r.qt = parse_question_type(j.at("qt").get<std::string>());
  for (auto m : kAllMetrics) {
    const auto key = to_string(m);
    if (j.contains(key) && !j[key].is_null()) r.scores[static_cast<std::size_t>(m)] = j[key].get<double>();
  }
  return r;
}

inline nlohmann::ordered_json rubric_line(const RubricRecord& rec) {
  nlohmann::ordered_json j;
  j["item_id"] = rec.item_id;
  j["strategy"] = to_string(rec.strategy);
  j["model"] = rec.model;
  j["qt"] = to_string(rec.qt);
  j["status"] = rec.score ? "scored" : "unscored";
  if (rec.score) {
    j["dims"] = dims_to_json(rec.score->dims());
    j["total"] = rec.score->total();
    j["rationale"] = rec.score->rationale();
  } else {
    j["dims"] = nullptr;
    j["total"] = nullptr;
  }
  j["error"] = rec.error;
  return j;
}

inline RubricRecord rubric_record_from_json(const nlohmann::json& j) {
  RubricRecord r;
  r.item_id = j.at("item_id").get<std::string>();
  r.strategy = parse_strategy(j.at("strategy").get<std::string>());
  r.model = j.at("model").get<std::string>();
  r.qt = parse_question_type(j.at("qt").get<std::string>());
  if (j.value("status", "") == "scored") r.score = RubricScore(dims_from_json(j.at("dims")), j.value("rationale", ""));
  r.error = j.value("error", "");
  return r;
}

// Non-empty lines of a JSON-lines file; a leading schema header is skipped.
inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::vector<nlohmann::json> out;
  std::size_t line_no = 0;
  for (const auto& line : text::split_lines(detail::read_file(path))) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (out.empty() && j.is_object() && j.contains("schema_version") && j.size() == 1) continue;
      out.push_back(std::move(j));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(line_no, path + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tables

struct Table {
  std::string title;
  std::string row_header = "Prompting Strategy";
  std::vector<std::string> groups;  // outer column headers
  std::vector<std::string> models;  // inner column headers, repeated per group
  std::vector<std::string> row_labels;
  std::vector<std::vector<std::optional<double>>> cells;  // row x (group, model)
  std::string summary_label = "Average";
  std::vector<std::optional<double>> summary;
  int decimals = 2;

  std::size_t column_count() const { return groups.size() * models.size(); }
  std::size_t column(std::size_t group, std::size_t model) const { return group * models.size() + model; }
  std::vector<std::string> column_labels() const {
    std::vector<std::string> out;
    for (const auto& g : groups) {
      for (const auto& m : models) out.push_back(g + " (" + m + ")");
    }
    return out;
  }
};

// Per column, the mean of the row values present; missing when none are.
inline std::vector<std::optional<double>> column_means(const std::vector<std::vector<std::optional<double>>>& rows,
                                                       std::size_t columns) {
  std::vector<std::optional<double>> out(columns);
  for (std::size_t c = 0; c < columns; ++c) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& r : rows) {
      if (r[c]) {
        sum += *r[c];
        ++n;
      }
    }
    if (n) out[c] = sum / static_cast<double>(n);
  }
  return out;
}

struct TableSet {
  Table strategy_table;
  std::vector<Table> per_qt;  // QT1..QT13
  std::optional<Table> rubric_table;
};

namespace detail {

template <class Rec>
std::vector<std::string> models_in(const std::vector<Rec>& recs) {
  std::vector<std::string> out;
  for (const auto& r : recs) {
    if (std::find(out.begin(), out.end(), r.model) == out.end()) out.push_back(r.model);
  }
  return out;
}

template <class Rec>
std::vector<StrategyId> strategies_in(const std::vector<Rec>& recs) {
  std::vector<StrategyId> out;
  for (auto s : kAllStrategies) {
    if (std::any_of(recs.begin(), recs.end(), [&](const Rec& r) { return r.strategy == s; })) out.push_back(s);
  }
  return out;
}

inline Table metric_table(const std::vector<ScoreRecord>& recs, const std::vector<StrategyId>& strategies,
                          const std::vector<std::string>& models, std::optional<QuestionType> qt,
                          std::string title) {
  Table t;
  t.title = std::move(title);
  for (auto m : kAllMetrics) t.groups.push_back(display_name(m));
  t.models = models;
  for (auto s : strategies) {
    t.row_labels.push_back(display_name(s));
    std::vector<std::optional<double>> row(t.column_count());
    for (std::size_t g = 0; g < kAllMetrics.size(); ++g) {
      for (std::size_t mi = 0; mi < models.size(); ++mi) {
        double sum = 0;
        std::size_t n = 0;
        for (const auto& r : recs) {
          if (r.strategy != s || r.model != models[mi] || (qt && r.qt != *qt)) continue;
          if (auto v = r.get(kAllMetrics[g])) {
            sum += *v;
            ++n;
          }
        }
        if (n) row[t.column(g, mi)] = sum / static_cast<double>(n);
      }
    }
    t.cells.push_back(std::move(row));
  }
  t.summary = column_means(t.cells, t.column_count());
  return t;
}

}  // namespace detail

inline Table make_rubric_table(const std::vector<RubricRecord>& recs) {
  const auto strategies = detail::strategies_in(recs);
  const auto models = detail::models_in(recs);
  Table t;
  t.title = "Rubric scores by prompting strategy";
  for (auto d : kAllDimensions) t.groups.push_back(display_name(d));
  t.groups.push_back("Total (0-5)");
  t.models = models;
  t.summary_label = "Grand Avg.";
  t.decimals = 4;
  for (auto s : strategies) {
    t.row_labels.push_back(display_name(s));
    std::vector<std::optional<double>> row(t.column_count());
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      std::vector<std::pair<std::string, RubricScore>> keyed;
      for (const auto& r : recs) {
        if (r.strategy == s && r.model == models[mi] && r.score) keyed.emplace_back("g", *r.score);
      }
      if (keyed.empty()) continue;
      auto agg = aggregate(keyed).rows.front();
      for (std::size_t d = 0; d < kDimensionCount; ++d) row[t.column(d, mi)] = agg.means[d];
      row[t.column(kDimensionCount, mi)] = agg.mean_total;
    }
    t.cells.push_back(std::move(row));
  }
  t.summary = column_means(t.cells, t.column_count());
  return t;
}

inline TableSet make_tables(const std::vector<ScoreRecord>& scored, const std::vector<RubricRecord>& judged = {}) {
  if (scored.empty()) throw ValidationError("make_tables: no scored items");
  TableSet ts;
  const auto strategies = detail::strategies_in(scored);
  const auto models = detail::models_in(scored);
  ts.strategy_table = detail::metric_table(scored, strategies, models, std::nullopt,
                                           "Automatic evaluation by prompting strategy (0-100)");
  for (auto qt : all_question_types()) {
    ts.per_qt.push_back(detail::metric_table(scored, strategies, models, qt,
                                             "Automatic evaluation for " + to_string(qt) + " (0-100)"));
  }
  if (std::any_of(judged.begin(), judged.end(), [](const RubricRecord& r) { return r.score.has_value(); })) {
    ts.rubric_table = make_rubric_table(judged);
  }
  return ts;
}

// ---------------------------------------------------------------------------
// Export

enum class ExportFormat { csv, markdown };

inline ExportFormat parse_export_format(std::string_view s) {
  auto v = text::lower(text::trim(s));
  if (v == "csv") return ExportFormat::csv;
  if (v == "md" || v == "markdown") return ExportFormat::markdown;
  throw ConfigError("unknown export format '" + std::string(s) + "' (csv, markdown)");
}

inline constexpr const char* kMissingCell = "\xE2\x80\x94";  // em dash

inline std::string format_cell(const std::optional<double>& v, int decimals) {
  return v ? text::fixed(*v, decimals) : std::string(kMissingCell);
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

inline std::string render_table(const Table& t, ExportFormat fmt) {
  const auto labels = t.column_labels();
  std::string out;
  auto row_text = [&](const std::string& label, const std::vector<std::optional<double>>& cells) {
    std::vector<std::string> f{label};
    for (const auto& c : cells) {
      f.push_back(fmt == ExportFormat::csv ? (c ? text::fixed(*c, t.decimals) : std::string())
                                           : format_cell(c, t.decimals));
    }
    return f;
  };
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{t.row_header};
  header.insert(header.end(), labels.begin(), labels.end());
  rows.push_back(header);
  for (std::size_t r = 0; r < t.row_labels.size(); ++r) rows.push_back(row_text(t.row_labels[r], t.cells[r]));
  rows.push_back(row_text(t.summary_label, t.summary));

  if (fmt == ExportFormat::csv) {
    for (const auto& r : rows) {
      std::vector<std::string> q;
      for (const auto& f : r) q.push_back(detail::csv_field(f));
      out += text::join(q, ",") + "\n";
    }
    return out;
  }
  out += "### " + t.title + "\n\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += "| " + text::join(rows[i], " | ") + " |\n";
    if (i == 0) {
      out += "|---";
      for (std::size_t c = 0; c < labels.size(); ++c) out += "|---:";
      out += "|\n";
    }
  }
  return out;
}

inline std::string export_extension(ExportFormat fmt) { return fmt == ExportFormat::csv ? ".csv" : ".md"; }

// Writes strategy, per-QT and rubric tables into `dir`; returns paths written.
inline std::vector<std::string> export_tables(const TableSet& ts, const std::filesystem::path& dir, ExportFormat fmt) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;
  auto put = [&](const fs::path& p, const std::string& body) {
    detail::write_file(p.string(), body);
    written.push_back(p.string());
  };
  const auto ext = export_extension(fmt);
  put(dir / ("strategies" + ext), render_table(ts.strategy_table, fmt));
  if (fmt == ExportFormat::markdown) {
    std::string all;
    for (const auto& t : ts.per_qt) all += render_table(t, fmt) + "\n";
    put(dir / ("per_qt" + ext), all);
  } else {
    for (std::size_t i = 0; i < ts.per_qt.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "per_qt_QT%02zu.csv", i + 1);
      put(dir / name, render_table(ts.per_qt[i], fmt));
    }
  }
  if (ts.rubric_table) put(dir / ("rubric" + ext), render_table(*ts.rubric_table, fmt));
  return written;
}

}  // namespace morphgen
