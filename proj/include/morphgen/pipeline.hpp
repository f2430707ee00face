#pragma once

// Run configuration, batch orchestration and the run directory.
//
// Config document (JSON). Relative paths resolve against the config file.
//   {
//     "seed": 7,
//     "templates": "../templates/v1",
//     "exemplar_corpus": "sample_corpus.jsonl",
//     "strategies": ["zero_shot", "few_shot"],          // default: all six
//     "per_qt_count": 2,                                  // or "per_qt_counts": {"QT1": 2, ...}
//     "generation": {"endpoint": "mock", "mock_script": "mock/reference_items.json",
//                    "model_name": "mock-gen", "temperature": 0.7, "max_tokens": 512,
//                    "timeout_ms": 60000, "max_retries": 2, "auth_env": "OPENAI_API_KEY"},
//     "judge": {"endpoint": "mock", "mock_script": "...", "model_name": "...",
//               "labels": "rubric/reference_labels.jsonl", "labeled_items": "reference_items.jsonl",
//               "exemplars": 13},
//     "metrics": {"grammar": "mock" | "none" | {"endpoint": "...", "language": "en-US"},
//                 "parse": "fallback" | "none" | {"endpoint": "..."},
//                 "logprob": "generation" | "none", "d_max": 10},
//     "lexicon": "lexicon/reference_items.txt",
//     "item": {"word_difficulty": 3, "task_difficulty": "medium", "grade_band": "grades 3-5",
//              "exemplar_count": 3},
//     "max_in_flight": 4
//   }
// Credentials are never read from the document: "auth_env" names an
// environment variable, and any "api_key" field is rejected.
//
// Run directory:
//   transcripts.jsonl  one line per request, every turn sent and received
//   parse.jsonl        parse diagnostics and validation outcome per request
//   items.jsonl        validated items (corpus format plus strategy/model/request_id)
//   metrics.jsonl      one metric report per validated item
//   rubric.jsonl       one judge outcome per scored item (when a judge is configured)
//   run_log.jsonl      one record per plan execution
//   manifest.json      counts, config digests, seed
//   tables/            exported tables

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "morphgen/auto_metrics.hpp"
#include "morphgen/corpus_io.hpp"
#include "morphgen/http_backends.hpp"
#include "morphgen/item_parser.hpp"
#include "morphgen/llm_gateway.hpp"
#include "morphgen/prompt_engine.hpp"
#include "morphgen/report.hpp"
#include "morphgen/rubric_judge.hpp"

namespace morphgen {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config

struct BackendSpec {
  BackendConfig cfg;
  std::string mock_script;  // used when cfg.endpoint == "mock"

  bool is_mock() const { return cfg.endpoint == "mock"; }
};

struct ServiceSpec {
  std::string kind;  // "none", "mock", "fallback", "generation", "http"
  std::string endpoint;
  std::string language = "en-US";
};

struct JudgeSpec {
  BackendSpec backend;
  std::string labels;
  std::string labeled_items;
  std::size_t exemplars = kDefaultJudgeExemplars;
};

struct RunConfig {
  std::string run_id;
  std::string timestamp;  // fixed timestamp for reproducible manifests; now() when empty
  std::uint64_t seed = 0;
  std::string templates;
  std::string exemplar_corpus;
  std::vector<StrategyId> strategies{kAllStrategies.begin(), kAllStrategies.end()};
  std::map<QuestionType, std::size_t> per_qt_counts;
  BackendSpec generation;
  std::optional<JudgeSpec> judge;
  ServiceSpec grammar{"none", {}, "en-US"};
  ServiceSpec parse{"fallback", {}, "en-US"};
  ServiceSpec logprob{"generation", {}, "en-US"};
  double d_max = kDefaultMaxDepth;
  std::string lexicon;
  int word_difficulty = 3;
  TaskLevel task_difficulty = TaskLevel::medium;
  std::string grade_band = "grades 3-5";
  std::size_t exemplar_count = kDefaultExemplarCount;
  std::size_t max_in_flight = 4;
  std::vector<std::string> defaulted;

  std::size_t requested() const {
    std::size_t n = 0;
    for (const auto& [qt, c] : per_qt_counts) n += c;
    return n * strategies.size();
  }
};

namespace detail {

inline void reject_literal_credentials(const nlohmann::json& j, const std::string& where) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      auto k = text::lower(it.key());
      if (k == "api_key" || k == "apikey" || k == "authorization" || k == "password" || k == "secret") {
        throw ConfigError("config field '" + where + it.key() +
                          "' is not allowed; name an environment variable with auth_env instead");
      }
      reject_literal_credentials(it.value(), where + it.key() + ".");
    }
  } else if (j.is_array()) {
    for (const auto& v : j) reject_literal_credentials(v, where);
  }
}

inline std::string resolve_path(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

inline BackendSpec parse_backend_spec(const nlohmann::json& j, const fs::path& base, const std::string& prefix,
                                      std::vector<std::string>& defaulted) {
  BackendSpec spec;
  auto& c = spec.cfg;
  auto take = [&](const char* key, auto& field) {
    if (j.contains(key)) {
      field = j[key].get<std::decay_t<decltype(field)>>();
    } else {
      defaulted.push_back(prefix + key);
    }
  };
  take("endpoint", c.endpoint);
  take("model_name", c.model_name);
  take("temperature", c.temperature);
  take("max_tokens", c.max_tokens);
  take("max_retries", c.max_retries);
  take("auth_env", c.auth_env);
  if (j.contains("timeout_ms")) c.timeout = std::chrono::milliseconds(j["timeout_ms"].get<long long>());
  if (j.contains("retry_base_ms")) c.retry_base_delay = std::chrono::milliseconds(j["retry_base_ms"].get<long long>());
  if (j.contains("retry_max_ms")) c.retry_max_delay = std::chrono::milliseconds(j["retry_max_ms"].get<long long>());
  if (c.endpoint.empty()) throw ConfigError(prefix + "endpoint is required");
  if (c.model_name.empty()) c.model_name = c.endpoint == "mock" ? "mock" : c.model_name;
  if (c.model_name.empty()) throw ConfigError(prefix + "model_name is required");
  spec.mock_script = resolve_path(base, j.value("mock_script", ""));
  if (spec.is_mock() && spec.mock_script.empty()) throw ConfigError(prefix + "mock_script is required for endpoint 'mock'");
  c.defaulted = defaulted;
  c.check();
  return spec;
}

inline ServiceSpec parse_service(const nlohmann::json& j, const char* key, ServiceSpec def) {
  if (!j.contains(key)) return def;
  const auto& v = j[key];
  if (v.is_string()) {
    def.kind = v.get<std::string>();
    def.endpoint.clear();
    return def;
  }
  if (v.is_object()) {
    def.kind = "http";
    def.endpoint = v.at("endpoint").get<std::string>();
    def.language = v.value("language", def.language);
    return def;
  }
  throw ConfigError(std::string("metrics.") + key + " must be a string or an object");
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base_dir = ".") {
  detail::reject_literal_credentials(j, "");
  RunConfig c;
  try {
    c.run_id = j.value("run_id", "");
    c.timestamp = j.value("timestamp", "");
    if (j.contains("seed")) {
      c.seed = j["seed"].get<std::uint64_t>();
    } else {
      c.defaulted.push_back("seed");
    }
    c.templates = detail::resolve_path(base_dir, j.value("templates", ""));
    c.exemplar_corpus = detail::resolve_path(base_dir, j.value("exemplar_corpus", ""));
    if (j.contains("strategies")) {
      c.strategies.clear();
      for (const auto& s : j["strategies"]) c.strategies.push_back(parse_strategy(s.get<std::string>()));
      if (c.strategies.empty()) throw ConfigError("strategies must not be empty");
    } else {
      c.defaulted.push_back("strategies");
    }
    if (j.contains("per_qt_counts")) {
      for (auto& [k, v] : j["per_qt_counts"].items()) c.per_qt_counts[parse_question_type(k)] = v.get<std::size_t>();
    } else if (j.contains("per_qt_count")) {
      for (auto qt : all_question_types()) c.per_qt_counts[qt] = j["per_qt_count"].get<std::size_t>();
    } else {
      throw ConfigError("per_qt_counts (or per_qt_count) is required");
    }
    if (!j.contains("generation")) throw ConfigError("generation backend is required");
    c.generation = detail::parse_backend_spec(j["generation"], base_dir, "generation.", c.defaulted);
    if (j.contains("judge") && !j["judge"].is_null()) {
      JudgeSpec js;
      std::vector<std::string> judge_defaults;
      js.backend = detail::parse_backend_spec(j["judge"], base_dir, "judge.", judge_defaults);
      js.backend.cfg.temperature = kJudgeTemperature;  // forced, whatever the document says
      std::erase(js.backend.cfg.defaulted, "judge.temperature");
      js.labels = detail::resolve_path(base_dir, j["judge"].value("labels", ""));
      js.labeled_items = detail::resolve_path(base_dir, j["judge"].value("labeled_items", ""));
      js.exemplars = j["judge"].value("exemplars", kDefaultJudgeExemplars);
      if (js.labels.empty() || js.labeled_items.empty()) {
        throw ConfigError("judge needs 'labels' and 'labeled_items' for its exemplars");
      }
      c.judge = std::move(js);
    }
    if (j.contains("metrics")) {
      const auto& m = j["metrics"];
      c.grammar = detail::parse_service(m, "grammar", c.grammar);
      c.parse = detail::parse_service(m, "parse", c.parse);
      c.logprob = detail::parse_service(m, "logprob", c.logprob);
      if (m.contains("d_max")) c.d_max = m["d_max"].get<double>();
    }
    c.lexicon = detail::resolve_path(base_dir, j.value("lexicon", ""));
    if (j.contains("item")) {
      const auto& it = j["item"];
      c.word_difficulty = it.value("word_difficulty", c.word_difficulty);
      if (it.contains("task_difficulty")) c.task_difficulty = parse_task_level(it["task_difficulty"].get<std::string>());
      c.grade_band = it.value("grade_band", c.grade_band);
      c.exemplar_count = it.value("exemplar_count", c.exemplar_count);
    }
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.templates.empty()) throw ConfigError("templates directory is required");
  if (c.max_in_flight == 0) throw ConfigError("max_in_flight must be >= 1");
  if (!(c.d_max > 0)) throw ConfigError("metrics.d_max must be > 0");
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_run_config(j, fs::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Backends built from a config

inline std::shared_ptr<ChatBackend> make_chat_backend(const BackendSpec& spec,
                                                      std::shared_ptr<MockBackend>* mock_out = nullptr) {
  if (spec.is_mock()) {
    auto mock = MockBackend::from_file(spec.mock_script);
    if (mock_out) *mock_out = mock;
    return mock;
  }
  return std::make_shared<OpenAiChatBackend>();
}

struct RunContext {
  RunConfig config;
  TemplateRegistry templates;
  std::optional<Corpus> exemplar_pool;
  std::shared_ptr<MockBackend> generation_mock;
  std::shared_ptr<Gateway> gateway;
  Backends metric_backends;
  std::optional<Lexicon> lexicon;
  std::unique_ptr<Judge> judge;
  std::vector<std::string> judge_exemplar_ids;

  static RunContext build(const RunConfig& cfg, Sleeper sleeper = real_sleeper(), bool with_judge = true) {
    RunContext ctx;
    ctx.config = cfg;
    ctx.templates = TemplateRegistry::load(cfg.templates);
    if (!cfg.exemplar_corpus.empty()) ctx.exemplar_pool = load_corpus(cfg.exemplar_corpus);
    const bool few = std::find(cfg.strategies.begin(), cfg.strategies.end(), StrategyId::few_shot) != cfg.strategies.end();
    if (few && !ctx.exemplar_pool) throw ConfigError("few_shot needs an exemplar_corpus");

    auto backend = make_chat_backend(cfg.generation, &ctx.generation_mock);
    ctx.gateway = std::make_shared<Gateway>(backend, cfg.generation.cfg, static_cast<std::ptrdiff_t>(cfg.max_in_flight),
                                            sleeper);

    if (cfg.grammar.kind == "mock") {
      if (!ctx.generation_mock) throw ConfigError("metrics.grammar 'mock' needs a mock generation backend");
      ctx.metric_backends.grammar = std::make_shared<MockGrammar>(ctx.generation_mock);
    } else if (cfg.grammar.kind == "http") {
      ctx.metric_backends.grammar = std::make_shared<LanguageToolGrammar>(cfg.grammar.endpoint, cfg.grammar.language);
    } else if (cfg.grammar.kind != "none") {
      throw ConfigError("metrics.grammar must be 'mock', 'none' or an endpoint object");
    }
    if (cfg.parse.kind == "fallback") {
      ctx.metric_backends.parse = std::make_shared<FallbackParser>();
    } else if (cfg.parse.kind == "http") {
      ctx.metric_backends.parse = std::make_shared<HttpParseBackend>(cfg.parse.endpoint);
    } else if (cfg.parse.kind != "none") {
      throw ConfigError("metrics.parse must be 'fallback', 'none' or an endpoint object");
    }
    if (cfg.logprob.kind == "generation") {
      ctx.metric_backends.logprob = std::make_shared<GatewayLogprobs>(ctx.gateway);
    } else if (cfg.logprob.kind != "none") {
      throw ConfigError("metrics.logprob must be 'generation' or 'none'");
    }
    if (!cfg.lexicon.empty()) ctx.lexicon = Lexicon::load(cfg.lexicon);

    if (cfg.judge && with_judge) {
      auto labels = load_expert_labels(cfg.judge->labels);
      auto labeled = load_corpus(cfg.judge->labeled_items);
      auto exemplars = select_judge_exemplars(labeled_pool(labels, labeled), cfg.judge->exemplars, cfg.seed);
      for (const auto& e : exemplars) ctx.judge_exemplar_ids.push_back(e.item.id);
      ctx.judge = std::make_unique<Judge>(make_chat_backend(cfg.judge->backend), cfg.judge->backend.cfg,
                                          std::move(exemplars), DimensionDefs::from_registry(ctx.templates),
                                          static_cast<std::size_t>(cfg.max_in_flight), sleeper);
    }
    return ctx;
  }
};

// ---------------------------------------------------------------------------
// Per-request work

struct Job {
  std::size_t index = 0;
  StrategyId strategy = StrategyId::zero_shot;
  QuestionType qt = QuestionType::QT1;
  std::size_t ordinal = 0;  // 1-based within (strategy, qt)

  std::string request_id() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s-qt%02d-%03zu", to_string(strategy).c_str(), qt_number(qt), ordinal);
    return buf;
  }
};

inline std::vector<Job> plan_jobs(const RunConfig& cfg) {
  std::vector<Job> jobs;
  for (auto s : cfg.strategies) {
    for (auto qt : all_question_types()) {
      auto it = cfg.per_qt_counts.find(qt);
      const std::size_t n = it == cfg.per_qt_counts.end() ? 0 : it->second;
      for (std::size_t k = 1; k <= n; ++k) jobs.push_back({jobs.size(), s, qt, k});
    }
  }
  return jobs;
}

// Per-job seed derived from the run seed (splitmix64 finalizer).
inline std::uint64_t job_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline double representative_task_raw(TaskLevel t, const TaskThresholds& cuts = {}) {
  switch (t) {
    case TaskLevel::easy: return cuts.first - 1.0;
    case TaskLevel::medium: return cuts.first;
    case TaskLevel::hard: return cuts.second;
  }
  return cuts.first;
}

struct JobResult {
  Job job;
  std::string item_id;
  Transcript transcript;
  std::vector<Diagnostic> diagnostics;
  std::optional<Item> item;
  std::vector<Violation> violations;
  MorphCheckReport morph;
  bool parsed = false;
  bool validated = false;
  std::optional<MetricReport> metrics;
  std::string metric_error;
  bool judge_attempted = false;
  std::optional<RubricScore> rubric;
  std::string judge_error;
  nlohmann::ordered_json log;
};

inline GenerationSpec generation_spec_for(const RunConfig& cfg, const Job& job) {
  GenerationSpec spec;
  spec.qt = job.qt;
  spec.target_word_diff = cfg.word_difficulty;
  spec.target_task_diff = cfg.task_difficulty;
  spec.grade_band = cfg.grade_band;
  spec.exemplar_count = cfg.exemplar_count;
  spec.seed = job_seed(cfg.seed, job.index);
  return spec;
}

inline ParseContext parse_context_for(const RunConfig& cfg, const std::string& item_id) {
  ParseContext pc;
  pc.id = item_id;
  pc.word_diff = WordDifficulty::from_raw(static_cast<double>(cfg.word_difficulty));
  pc.task_diff = TaskDifficulty::from_raw(representative_task_raw(cfg.task_difficulty));
  return pc;
}

// Parse, validate and check one model output.
inline void parse_and_validate(JobResult& r, const std::string& raw, const RunConfig& cfg, const Lexicon* lexicon) {
  auto pr = parse_item(raw, r.job.qt, parse_context_for(cfg, r.item_id));
  r.diagnostics = pr.diagnostics;
  if (!pr.item) return;
  r.parsed = true;
  r.item = std::move(pr.item);
  r.violations = validate_item(*r.item);
  r.morph = morph_checks(*r.item, {lexicon});
  r.validated = r.violations.empty() && r.morph.clean();
}

inline void score_and_judge(JobResult& r, RunContext& ctx) {
  if (!r.validated) return;
  try {
    r.metrics = score_item(*r.item, ctx.metric_backends, {ctx.config.d_max});
  } catch (const Error& e) {
    r.metric_error = e.what();
    return;
  }
  if (!ctx.judge) return;
  r.judge_attempted = true;
  try {
    r.rubric = ctx.judge->judge(*r.item);
  } catch (const Error& e) {
    r.judge_error = e.what();
  }
}

// Generation only when `downstream` is false.
inline JobResult run_job(const Job& job, RunContext& ctx, bool downstream = true) {
  JobResult r;
  r.job = job;
  r.item_id = job.request_id();
  const auto& cfg = ctx.config;
  auto spec = generation_spec_for(cfg, job);
  PromptPlan plan;
  try {
    std::optional<std::vector<Item>> exemplars;
    if (job.strategy == StrategyId::few_shot) exemplars = select_exemplars(*ctx.exemplar_pool, spec);
    plan = render(ctx.templates, job.strategy, spec, exemplars);
  } catch (const Error& e) {
    r.transcript.plan.strategy = job.strategy;
    r.transcript.plan.qt = job.qt;
    r.transcript.error = std::string("render: ") + e.what();
    r.log = {{"request_id", r.item_id}, {"strategy", to_string(job.strategy)}, {"qt", to_string(job.qt)},
             {"status", "aborted"},     {"error", r.transcript.error}};
    return r;
  }
  RunLog log;
  r.transcript = run_plan(plan, *ctx.gateway, &log, r.item_id);
  r.log = log.records().front();
  if (!downstream || r.transcript.status != TranscriptStatus::complete) return r;
  parse_and_validate(r, r.transcript.final_text(), cfg, ctx.lexicon ? &*ctx.lexicon : nullptr);
  score_and_judge(r, ctx);
  return r;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  auto body = [&](std::size_t w) {
    try {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(body, w);
  body(0);
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Serialization of results

inline nlohmann::ordered_json diagnostic_json(const Diagnostic& d) {
  return {{"code", d.code}, {"severity", to_string(d.severity)}, {"message", d.message},
          {"span", {d.span.begin, d.span.end}}};
}

inline nlohmann::ordered_json transcript_line(const JobResult& r, const std::string& model) {
  nlohmann::ordered_json j;
  j["request_id"] = r.item_id;
  j["strategy"] = to_string(r.job.strategy);
  j["qt"] = to_string(r.job.qt);
  j["model"] = model;
  j["template_version"] = r.transcript.plan.template_version;
  j["status"] = to_string(r.transcript.status);
  j["error"] = r.transcript.error;
  j["turns"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.transcript.plan.turns.size(); ++i) {
    nlohmann::ordered_json t;
    t["label"] = to_string(r.transcript.plan.turns[i].label);
    t["expects"] = to_string(r.transcript.plan.turns[i].expects);
    t["sent"] = i < r.transcript.sent.size() ? nlohmann::ordered_json(r.transcript.sent[i]) : nlohmann::ordered_json(nullptr);
    t["reply"] = i < r.transcript.replies.size() ? nlohmann::ordered_json(r.transcript.replies[i].text)
                                                 : nlohmann::ordered_json(nullptr);
    t["attempts"] = i < r.transcript.replies.size() ? r.transcript.replies[i].attempts : 0;
    j["turns"].push_back(std::move(t));
  }
  j["final_text"] = r.transcript.status == TranscriptStatus::complete ? r.transcript.final_text() : std::string();
  return j;
}

inline nlohmann::ordered_json parse_line(const JobResult& r) {
  nlohmann::ordered_json j;
  j["request_id"] = r.item_id;
  j["strategy"] = to_string(r.job.strategy);
  j["qt"] = to_string(r.job.qt);
  j["parsed"] = r.parsed;
  j["validated"] = r.validated;
  j["diagnostics"] = nlohmann::ordered_json::array();
  for (const auto& d : r.diagnostics) j["diagnostics"].push_back(diagnostic_json(d));
  j["violations"] = nlohmann::ordered_json::array();
  for (const auto& v : r.violations) j["violations"].push_back({{"field", v.field}, {"rule", v.rule}, {"message", v.message}});
  nlohmann::ordered_json morph;
  morph["checks_run"] = r.morph.checks_run;
  morph["violations"] = nlohmann::ordered_json::array();
  for (const auto& d : r.morph.violations) morph["violations"].push_back(diagnostic_json(d));
  morph["preconditions"] = nlohmann::ordered_json::array();
  for (const auto& d : r.morph.preconditions) morph["preconditions"].push_back(diagnostic_json(d));
  morph["unchecked"] = nlohmann::ordered_json::array();
  for (const auto& u : r.morph.unchecked) morph["unchecked"].push_back({{"check", u.check}, {"reason", u.reason}});
  j["morph"] = morph;
  return j;
}

inline nlohmann::ordered_json run_item_line(const Item& item, StrategyId s, const std::string& model) {
  auto j = item_to_json(item);
  j["strategy"] = to_string(s);
  j["model"] = model;
  return j;
}

// ---------------------------------------------------------------------------
// Manifest

struct RunCounts {
  std::size_t requested = 0;
  std::size_t parsed = 0;
  std::size_t validated = 0;
  std::size_t scored = 0;
  std::size_t judged = 0;

  bool monotone() const { return requested >= parsed && parsed >= validated && validated >= scored && scored >= judged; }
};

struct RunManifest {
  std::string run_id;
  std::string timestamp;
  std::vector<StrategyId> strategies;
  nlohmann::ordered_json backend;
  std::uint64_t seed = 0;
  std::string corpus_digest;
  std::string template_version;
  RunCounts counts;
  nlohmann::ordered_json extra;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["run_id"] = run_id;
    j["timestamp"] = timestamp;
    j["strategies"] = nlohmann::ordered_json::array();
    for (auto s : strategies) j["strategies"].push_back(to_string(s));
    j["backend"] = backend;
    j["seed"] = seed;
    j["corpus_digest"] = corpus_digest;
    j["template_version"] = template_version;
    j["counts"] = {{"requested", counts.requested}, {"parsed", counts.parsed}, {"validated", counts.validated},
                   {"scored", counts.scored},       {"judged", counts.judged}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    return j;
  }
};

inline std::string utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::ordered_json backend_json(const BackendConfig& c) {
  return {{"endpoint", c.endpoint},       {"model", c.model_name}, {"temperature", c.temperature},
          {"max_tokens", c.max_tokens},   {"digest", c.digest()},  {"auth_env", c.auth_env},
          {"defaulted", c.defaulted}};
}

inline RunCounts count_results(const std::vector<JobResult>& results) {
  RunCounts c;
  c.requested = results.size();
  for (const auto& r : results) {
    c.parsed += r.parsed;
    c.validated += r.validated;
    c.scored += r.metrics.has_value();
    c.judged += r.rubric.has_value();
  }
  return c;
}

// ---------------------------------------------------------------------------
// Batch

struct BatchOutput {
  RunManifest manifest;
  std::vector<JobResult> results;
  TableSet tables;
  bool has_tables = false;
};

inline std::string corpus_digest(const std::optional<Corpus>& c) {
  return c ? text::fingerprint(serialize_corpus(*c)) : std::string("none");
}

// Generates, parses, validates, scores and judges every (strategy, QT, k)
// request. Item-level failures are recorded; configuration or I/O problems throw.
inline BatchOutput run_batch(RunContext& ctx, const fs::path& out_dir) {
  const auto& cfg = ctx.config;
  const auto jobs = plan_jobs(cfg);
  BatchOutput out;
  out.results.resize(jobs.size());
  parallel_for(jobs.size(), cfg.max_in_flight, [&](std::size_t i) { out.results[i] = run_job(jobs[i], ctx); });

  const std::string model = cfg.generation.cfg.model_name;
  auto& m = out.manifest;
  m.seed = cfg.seed;
  m.strategies = cfg.strategies;
  m.backend = backend_json(cfg.generation.cfg);
  m.corpus_digest = corpus_digest(ctx.exemplar_pool);
  m.template_version = ctx.templates.version();
  m.counts = count_results(out.results);
  m.run_id = !cfg.run_id.empty() ? cfg.run_id
                                 : "run-" + text::fingerprint(cfg.generation.cfg.digest() + std::to_string(cfg.seed) +
                                                              m.corpus_digest + m.template_version)
                                                .substr(0, 8);
  m.timestamp = cfg.timestamp.empty() ? utc_now() : cfg.timestamp;
  nlohmann::ordered_json per_qt;
  for (const auto& [qt, n] : cfg.per_qt_counts) per_qt[to_string(qt)] = n;
  m.extra["per_qt_counts"] = per_qt;
  m.extra["defaulted"] = cfg.defaulted;
  m.extra["metrics"] = {{"grammar", cfg.grammar.kind},
                        {"parse", cfg.parse.kind},
                        {"logprob", cfg.logprob.kind},
                        {"d_max", cfg.d_max},
                        {"error_density_unit", "errors per 100 words"},
                        {"scored_text", "stem and options, newline-joined"}};
  if (ctx.judge) {
    m.extra["judge"] = backend_json(ctx.judge->config());
    m.extra["judge"]["exemplars"] = ctx.judge_exemplar_ids;
    m.extra["judge"]["definitions_version"] = ctx.judge->defs().version;
  } else {
    m.extra["judge"] = nullptr;
  }

  fs::create_directories(out_dir);
  std::string transcripts, parses, items, metrics, rubric, log;
  items = nlohmann::ordered_json{{"schema_version", kCorpusSchemaVersion}}.dump() + "\n";
  std::vector<ScoreRecord> scored;
  std::vector<RubricRecord> judged;
  for (const auto& r : out.results) {
    transcripts += transcript_line(r, model).dump() + "\n";
    parses += parse_line(r).dump() + "\n";
    log += r.log.dump() + "\n";
    if (r.validated) items += run_item_line(*r.item, r.job.strategy, model).dump() + "\n";
    if (r.metrics) {
      auto rec = score_record(r.item_id, r.job.strategy, model, r.job.qt, *r.metrics);
      metrics += metric_line(rec, *r.metrics).dump() + "\n";
      scored.push_back(rec);
    }
    if (r.judge_attempted) {
      RubricRecord rr{r.item_id, r.job.strategy, model, r.job.qt, r.rubric, r.judge_error};
      rubric += rubric_line(rr).dump() + "\n";
      judged.push_back(std::move(rr));
    }
  }
  detail::write_file((out_dir / "transcripts.jsonl").string(), transcripts);
  detail::write_file((out_dir / "parse.jsonl").string(), parses);
  detail::write_file((out_dir / "items.jsonl").string(), items);
  detail::write_file((out_dir / "metrics.jsonl").string(), metrics);
  if (ctx.judge) detail::write_file((out_dir / "rubric.jsonl").string(), rubric);
  detail::write_file((out_dir / "run_log.jsonl").string(), log);
  if (!scored.empty()) {
    out.tables = make_tables(scored, judged);
    out.has_tables = true;
    export_tables(out.tables, out_dir / "tables", ExportFormat::csv);
    export_tables(out.tables, out_dir / "tables", ExportFormat::markdown);
  }
  detail::write_file((out_dir / "manifest.json").string(), m.to_json().dump(2) + "\n");
  return out;
}

// Tables from the persisted records of one or more run directories.
inline TableSet tables_from_runs(const std::vector<std::string>& run_dirs) {
  std::vector<ScoreRecord> scored;
  std::vector<RubricRecord> judged;
  for (const auto& d : run_dirs) {
    for (const auto& j : read_jsonl((fs::path(d) / "metrics.jsonl").string())) scored.push_back(score_record_from_json(j));
    const auto rub = fs::path(d) / "rubric.jsonl";
    if (fs::exists(rub)) {
      for (const auto& j : read_jsonl(rub.string())) judged.push_back(rubric_record_from_json(j));
    }
  }
  return make_tables(scored, judged);
}

// ---------------------------------------------------------------------------
// Single stages over files, for composing runs by hand

// Writes transcripts.jsonl and run_log.jsonl.
struct GenerateCounts {
  std::size_t requested = 0;
  std::size_t complete = 0;
};

inline GenerateCounts generate_stage(RunContext& ctx, const fs::path& out_dir) {
  const auto jobs = plan_jobs(ctx.config);
  std::vector<JobResult> results(jobs.size());
  parallel_for(jobs.size(), ctx.config.max_in_flight,
               [&](std::size_t i) { results[i] = run_job(jobs[i], ctx, /*downstream=*/false); });
  fs::create_directories(out_dir);
  std::string transcripts, log;
  for (const auto& r : results) {
    transcripts += transcript_line(r, ctx.config.generation.cfg.model_name).dump() + "\n";
    log += r.log.dump() + "\n";
  }
  detail::write_file((out_dir / "transcripts.jsonl").string(), transcripts);
  detail::write_file((out_dir / "run_log.jsonl").string(), log);
  GenerateCounts c{results.size(), 0};
  for (const auto& r : results) c.complete += r.transcript.status == TranscriptStatus::complete;
  return c;
}

// Reads transcripts.jsonl; writes parse.jsonl and items.jsonl.
inline RunCounts parse_stage(const std::string& transcripts_path, const RunConfig& cfg, const Lexicon* lexicon,
                             const fs::path& out_dir) {
  RunCounts c;
  std::string parses;
  std::string items = nlohmann::ordered_json{{"schema_version", kCorpusSchemaVersion}}.dump() + "\n";
  for (const auto& t : read_jsonl(transcripts_path)) {
    JobResult r;
    r.item_id = t.at("request_id").get<std::string>();
    r.job.strategy = parse_strategy(t.at("strategy").get<std::string>());
    r.job.qt = parse_question_type(t.at("qt").get<std::string>());
    ++c.requested;
    if (t.value("status", "") == "complete") parse_and_validate(r, t.value("final_text", ""), cfg, lexicon);
    c.parsed += r.parsed;
    c.validated += r.validated;
    parses += parse_line(r).dump() + "\n";
    if (r.validated) items += run_item_line(*r.item, r.job.strategy, t.value("model", "")).dump() + "\n";
  }
  fs::create_directories(out_dir);
  detail::write_file((out_dir / "parse.jsonl").string(), parses);
  detail::write_file((out_dir / "items.jsonl").string(), items);
  return c;
}

struct RunItem {
  Item item;
  StrategyId strategy = StrategyId::zero_shot;
  std::string model;
};

// Items with the strategy/model labels a run attaches; `fallback_*` fill gaps.
inline std::vector<RunItem> read_run_items(const std::string& path, std::optional<StrategyId> fallback_strategy = {},
                                           const std::string& fallback_model = {}) {
  std::vector<RunItem> out;
  std::size_t n = 0;
  for (const auto& j : read_jsonl(path)) {
    ++n;
    RunItem ri;
    ri.item = item_from_json(j, n);
    if (j.contains("strategy")) {
      ri.strategy = parse_strategy(j["strategy"].get<std::string>());
    } else if (fallback_strategy) {
      ri.strategy = *fallback_strategy;
    } else {
      throw ConfigError(path + ": item '" + ri.item.id + "' has no strategy label; pass one explicitly");
    }
    ri.model = j.value("model", fallback_model);
    if (ri.model.empty()) ri.model = fallback_model.empty() ? "unknown" : fallback_model;
    out.push_back(std::move(ri));
  }
  return out;
}

// Writes one metrics line per item, in input order.
inline std::size_t score_stage(const std::vector<RunItem>& items, const Backends& backends, double d_max,
                               std::size_t workers, const std::string& out_path) {
  std::vector<std::optional<MetricReport>> reports(items.size());
  parallel_for(items.size(), workers, [&](std::size_t i) {
    try {
      reports[i] = score_item(items[i].item, backends, {d_max});
    } catch (const ValidationError&) {
    }
  });
  std::string out;
  std::size_t scored = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!reports[i]) continue;
    ++scored;
    const auto& ri = items[i];
    out += metric_line(score_record(ri.item.id, ri.strategy, ri.model, ri.item.qt, *reports[i]), *reports[i]).dump() + "\n";
  }
  detail::write_file(out_path, out);
  return scored;
}

// Writes one rubric line per item, in input order.
inline std::size_t judge_stage(const std::vector<RunItem>& items, Judge& judge, std::size_t workers,
                               const std::string& out_path) {
  std::vector<RubricRecord> recs(items.size());
  parallel_for(items.size(), workers, [&](std::size_t i) {
    const auto& ri = items[i];
    recs[i] = {ri.item.id, ri.strategy, ri.model, ri.item.qt, std::nullopt, {}};
    try {
      recs[i].score = judge.judge(ri.item);
    } catch (const Error& e) {
      recs[i].error = e.what();
    }
  });
  std::string out;
  std::size_t judged = 0;
  for (const auto& r : recs) {
    judged += r.score.has_value();
    out += rubric_line(r).dump() + "\n";
  }
  detail::write_file(out_path, out);
  return judged;
}

}  // namespace morphgen
