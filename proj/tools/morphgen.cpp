// morphgen: command-line front end. Each verb reads and writes line-delimited
// files so stages can be run one at a time or all at once with `run`.
//
// Exit status: 0 when the batch completed (item-level failures are recorded in
// the artifacts), 1 on a batch-level failure (bad config, unreadable input,
// unreachable required backend), 2 on a usage error.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "morphgen/pipeline.hpp"

namespace mg = morphgen;

namespace {

struct Overrides {
  std::string endpoint;
  std::string model;
  std::optional<double> temperature;
  std::string mock;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> per_qt_count;
  std::vector<std::string> strategies;
  std::optional<std::size_t> max_in_flight;
  std::string run_id;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--endpoint", o.endpoint, "Generation endpoint base URL (overrides config)");
  cmd->add_option("--model", o.model, "Generation model name (overrides config)");
  cmd->add_option("--temperature", o.temperature, "Generation temperature (overrides config)");
  cmd->add_option("--mock", o.mock, "Use a scripted mock backend for generation");
  cmd->add_option("--seed", o.seed, "Run seed (overrides config)");
  cmd->add_option("--per-qt-count", o.per_qt_count, "Items per (strategy, QT) cell (overrides config)");
  cmd->add_option("--strategies", o.strategies, "Strategy ids (overrides config)")->delimiter(',');
  cmd->add_option("--max-in-flight", o.max_in_flight, "Concurrent backend requests (overrides config)");
  cmd->add_option("--run-id", o.run_id, "Run id recorded in the manifest");
}

void undefault(mg::RunConfig& c, const std::string& key) {
  std::erase(c.defaulted, key);
  std::erase(c.generation.cfg.defaulted, key);
}

mg::RunConfig load_config(const std::string& path, const Overrides& o) {
  auto c = mg::load_run_config(path);
  auto& g = c.generation.cfg;
  if (!o.mock.empty()) {
    g.endpoint = "mock";
    c.generation.mock_script = o.mock;
    undefault(c, "generation.endpoint");
  }
  if (!o.endpoint.empty()) {
    g.endpoint = o.endpoint;
    undefault(c, "generation.endpoint");
  }
  if (!o.model.empty()) {
    g.model_name = o.model;
    undefault(c, "generation.model_name");
  }
  if (o.temperature) {
    g.temperature = *o.temperature;
    undefault(c, "generation.temperature");
  }
  if (o.seed) {
    c.seed = *o.seed;
    undefault(c, "seed");
  }
  if (o.per_qt_count) {
    for (auto qt : mg::all_question_types()) c.per_qt_counts[qt] = *o.per_qt_count;
  }
  if (!o.strategies.empty()) {
    c.strategies.clear();
    for (const auto& s : o.strategies) c.strategies.push_back(mg::parse_strategy(s));
    undefault(c, "strategies");
  }
  if (o.max_in_flight) c.max_in_flight = *o.max_in_flight;
  if (!o.run_id.empty()) c.run_id = o.run_id;
  if (c.max_in_flight == 0) throw mg::ConfigError("max_in_flight must be >= 1");
  if (c.generation.is_mock() && c.generation.mock_script.empty()) throw mg::ConfigError("--endpoint mock needs --mock SCRIPT");
  g.check();
  return c;
}

void print_counts(const mg::RunCounts& c) {
  std::cerr << "requested=" << c.requested << " parsed=" << c.parsed << " validated=" << c.validated
            << " scored=" << c.scored << " judged=" << c.judged << "\n";
}

void print_table(const std::string& title, const mg::CountTable& t) {
  std::cout << title << ":";
  for (const auto& [k, v] : t) std::cout << " " << k << "=" << v;
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Morphological-awareness item generation and evaluation"};
  app.require_subcommand(1);

  // ingest
  std::string ingest_in, ingest_out, ingest_format;
  std::vector<double> ingest_cuts;
  auto* ingest = app.add_subcommand("ingest", "Load and validate a corpus (JSONL or CSV); write normalized JSONL");
  ingest->add_option("input", ingest_in, "Corpus file")->required();
  ingest->add_option("--format", ingest_format, "jsonl or csv (default: by extension)");
  ingest->add_option("--task-cuts", ingest_cuts, "Two task-difficulty cut points")->delimiter(',')->expected(2);
  ingest->add_option("--out", ingest_out, "Output JSONL (default: stdout)");

  // split
  std::string split_in, split_out;
  std::uint64_t split_seed = 0;
  std::vector<double> split_ratios{0.8, 0.1, 0.1};
  std::vector<std::string> split_strata{"qt", "task_diff"};
  auto* split = app.add_subcommand("split", "Stratified train/val/test split");
  split->add_option("input", split_in, "Corpus file")->required();
  split->add_option("--out", split_out, "Output directory for train/val/test.jsonl")->required();
  split->add_option("--seed", split_seed, "Shuffle seed");
  split->add_option("--ratios", split_ratios, "Three ratios summing to 1")->delimiter(',')->expected(3);
  split->add_option("--strata", split_strata, "Stratum keys: qt, word_diff, task_diff")->delimiter(',');

  // stats
  std::string stats_in;
  auto* stats = app.add_subcommand("stats", "Corpus summary and difficulty rank correlation");
  stats->add_option("input", stats_in, "Corpus file")->required();

  // generate
  std::string gen_config, gen_out;
  Overrides gen_o;
  auto* generate = app.add_subcommand("generate", "Run prompt plans; write transcripts.jsonl and run_log.jsonl");
  generate->add_option("--config", gen_config, "Run config")->required();
  generate->add_option("--out", gen_out, "Output directory")->required();
  add_overrides(generate, gen_o);

  // parse
  std::string parse_in, parse_out, parse_config, parse_lexicon;
  auto* parse = app.add_subcommand("parse", "Parse and validate transcripts; write parse.jsonl and items.jsonl");
  parse->add_option("transcripts", parse_in, "transcripts.jsonl")->required();
  parse->add_option("--out", parse_out, "Output directory")->required();
  parse->add_option("--config", parse_config, "Run config (item metadata and lexicon)");
  parse->add_option("--lexicon", parse_lexicon, "Wordlist for lexicon-backed checks");

  // score
  std::string score_in, score_out, score_config, score_strategy, score_model;
  Overrides score_o;
  auto* score = app.add_subcommand("score", "Automatic metrics for items; write metrics.jsonl");
  score->add_option("items", score_in, "Items JSONL")->required();
  score->add_option("--config", score_config, "Run config (metric backends)")->required();
  score->add_option("--out", score_out, "Output metrics JSONL")->required();
  score->add_option("--strategy", score_strategy, "Strategy label for items that carry none");
  score->add_option("--label-model", score_model, "Model label for items that carry none");
  add_overrides(score, score_o);

  // judge
  std::string judge_in, judge_out, judge_config, judge_strategy, judge_model;
  Overrides judge_o;
  auto* judge = app.add_subcommand("judge", "Rubric scores from the configured judge; write rubric.jsonl");
  judge->add_option("items", judge_in, "Items JSONL")->required();
  judge->add_option("--config", judge_config, "Run config with a judge section")->required();
  judge->add_option("--out", judge_out, "Output rubric JSONL")->required();
  judge->add_option("--strategy", judge_strategy, "Strategy label for items that carry none");
  judge->add_option("--label-model", judge_model, "Model label for items that carry none");
  add_overrides(judge, judge_o);

  // report
  std::vector<std::string> report_runs;
  std::string report_out, report_format = "both";
  auto* report = app.add_subcommand("report", "Aggregate run directories into tables");
  report->add_option("runs", report_runs, "Run directories (metrics.jsonl, optional rubric.jsonl)")->required();
  report->add_option("--out", report_out, "Output directory")->required();
  report->add_option("--format", report_format, "csv, markdown or both")
      ->check(CLI::IsMember({"csv", "markdown", "md", "both"}));

  // run
  std::string run_config, run_out;
  Overrides run_o;
  auto* run = app.add_subcommand("run", "Generate, parse, validate, score and judge in one batch");
  run->add_option("--config", run_config, "Run config")->required();
  run->add_option("--out", run_out, "Run directory")->required();
  add_overrides(run, run_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*ingest) {
      mg::LoadOptions opts;
      if (!ingest_cuts.empty()) opts.task_thresholds = mg::TaskThresholds::from_table(ingest_cuts);
      auto fmt = ingest_format.empty() ? mg::format_from_path(ingest_in) : mg::parse_corpus_format(ingest_format);
      auto corpus = mg::load_corpus(ingest_in, fmt, opts);
      std::size_t invalid = 0;
      for (const auto& item : corpus.items) {
        for (const auto& v : mg::validate_item(item)) {
          ++invalid;
          std::cerr << item.id << ": " << v.field << ": " << v.rule << ": " << v.message << "\n";
        }
      }
      if (ingest_out.empty()) {
        std::cout << mg::serialize_corpus(corpus);
      } else {
        mg::save_corpus(corpus, ingest_out);
      }
      std::cerr << corpus.items.size() << " items, " << invalid << " validation findings\n";
    } else if (*split) {
      mg::SplitSpec spec;
      spec.seed = split_seed;
      std::copy(split_ratios.begin(), split_ratios.end(), spec.ratios.begin());
      spec.strata_keys.clear();
      for (const auto& k : split_strata) spec.strata_keys.push_back(mg::parse_stratum_key(k));
      auto res = mg::stratified_split(mg::load_corpus(split_in), spec);
      mg::fs::create_directories(split_out);
      mg::save_corpus(res.train, (mg::fs::path(split_out) / "train.jsonl").string());
      mg::save_corpus(res.val, (mg::fs::path(split_out) / "val.jsonl").string());
      mg::save_corpus(res.test, (mg::fs::path(split_out) / "test.jsonl").string());
      for (const auto& w : res.warnings) std::cerr << "warning: " << w.stratum << ": " << w.message << "\n";
      std::cout << "train=" << res.train.items.size() << " val=" << res.val.items.size()
                << " test=" << res.test.items.size() << "\n";
    } else if (*stats) {
      auto corpus = mg::load_corpus(stats_in);
      auto s = mg::summarize(corpus);
      std::cout << "items: " << s.total << "\n";
      print_table("question_type", s.by_qt);
      print_table("skill", s.by_skill);
      print_table("morph", s.by_morph);
      print_table("word_diff", s.by_word_diff);
      print_table("task_diff", s.by_task_diff);
      std::cout << "stem_words: mean=" << mg::text::fixed(s.stem_words_mean, 2) << " min=" << s.stem_words_min
                << " max=" << s.stem_words_max << "\n";
      for (bool recoded : {false, true}) {
        std::cout << "spearman_rho(word_diff, task_diff)" << (recoded ? " recoded" : " raw") << ": ";
        try {
          std::cout << mg::text::fixed(mg::difficulty_correlation(corpus, recoded), 4) << "\n";
        } catch (const mg::UndefinedCorrelationError& e) {
          std::cout << "undefined (" << e.what() << ")\n";
        }
      }
    } else if (*generate) {
      auto ctx = mg::RunContext::build(load_config(gen_config, gen_o), mg::real_sleeper(), false);
      auto c = mg::generate_stage(ctx, gen_out);
      std::cerr << "requested=" << c.requested << " complete=" << c.complete << "\n";
    } else if (*parse) {
      mg::RunConfig cfg;
      if (!parse_config.empty()) cfg = mg::load_run_config(parse_config);
      if (!parse_lexicon.empty()) cfg.lexicon = parse_lexicon;
      std::optional<mg::Lexicon> lex;
      if (!cfg.lexicon.empty()) lex = mg::Lexicon::load(cfg.lexicon);
      print_counts(mg::parse_stage(parse_in, cfg, lex ? &*lex : nullptr, parse_out));
    } else if (*score) {
      auto ctx = mg::RunContext::build(load_config(score_config, score_o), mg::real_sleeper(), false);
      std::optional<mg::StrategyId> fallback;
      if (!score_strategy.empty()) fallback = mg::parse_strategy(score_strategy);
      auto items = mg::read_run_items(score_in, fallback, score_model);
      auto n = mg::score_stage(items, ctx.metric_backends, ctx.config.d_max, ctx.config.max_in_flight, score_out);
      std::cerr << n << " of " << items.size() << " items scored\n";
    } else if (*judge) {
      auto ctx = mg::RunContext::build(load_config(judge_config, judge_o));
      if (!ctx.judge) throw mg::ConfigError(judge_config + ": no judge section");
      std::optional<mg::StrategyId> fallback;
      if (!judge_strategy.empty()) fallback = mg::parse_strategy(judge_strategy);
      auto items = mg::read_run_items(judge_in, fallback, judge_model);
      auto n = mg::judge_stage(items, *ctx.judge, ctx.config.max_in_flight, judge_out);
      std::cerr << n << " of " << items.size() << " items judged\n";
    } else if (*report) {
      auto ts = mg::tables_from_runs(report_runs);
      std::vector<std::string> written;
      if (report_format == "csv" || report_format == "both") {
        for (auto& f : mg::export_tables(ts, report_out, mg::ExportFormat::csv)) written.push_back(f);
      }
      if (report_format != "csv") {
        for (auto& f : mg::export_tables(ts, report_out, mg::ExportFormat::markdown)) written.push_back(f);
      }
      for (const auto& f : written) std::cout << f << "\n";
    } else if (*run) {
      auto ctx = mg::RunContext::build(load_config(run_config, run_o));
      auto out = mg::run_batch(ctx, run_out);
      print_counts(out.manifest.counts);
      std::cout << (mg::fs::path(run_out) / "manifest.json").string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "morphgen: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
