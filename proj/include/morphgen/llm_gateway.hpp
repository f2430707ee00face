#pragma once

// Client contract for chat-completion and log-probability backends, the
// retrying gateway in front of them, a scripted mock, and plan execution.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "morphgen/corpus_io.hpp"
#include "morphgen/error.hpp"
#include "morphgen/prompt_engine.hpp"
#include "morphgen/text.hpp"
#include "morphgen/token_logprobs.hpp"

namespace morphgen {

inline constexpr double kDefaultGenerationTemperature = 0.7;
inline constexpr double kJudgeTemperature = 0.0;

struct BackendConfig {
  std::string endpoint;  // base URL, e.g. http://localhost:8000/v1 ; "mock" for scripted backends
  std::string model_name;
  double temperature = kDefaultGenerationTemperature;
  int max_tokens = 512;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 2;
  std::string auth_env;  // name of the environment variable holding the API key
  std::chrono::milliseconds retry_base_delay{500};
  std::chrono::milliseconds retry_max_delay{8000};
  // Fields left at their built-in defaults; reported in run manifests.
  std::vector<std::string> defaulted;

  void check() const {
    if (timeout.count() <= 0) throw ConfigError("backend timeout must be > 0");
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
    if (max_tokens <= 0) throw ConfigError("max_tokens must be > 0");
  }

  // Credential from the named environment variable; empty when no auth is configured.
  std::string credential() const {
    if (auth_env.empty()) return {};
    const char* v = std::getenv(auth_env.c_str());
    if (v == nullptr || *v == '\0') throw ConfigError("environment variable " + auth_env + " is not set");
    return v;
  }

  // Stable digest of the fields that affect generated output.
  std::string digest() const {
    return text::fingerprint(endpoint + "\x1f" + model_name + "\x1f" + text::fixed(temperature, 6) + "\x1f" +
                             std::to_string(max_tokens));
  }
};

inline std::chrono::milliseconds backoff_delay(const BackendConfig& cfg, int retry_number) {
  double ms = static_cast<double>(cfg.retry_base_delay.count()) * std::pow(2.0, retry_number);
  ms = std::min(ms, static_cast<double>(cfg.retry_max_delay.count()));
  return std::chrono::milliseconds(static_cast<long long>(ms));
}

struct TokenUsage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatReply {
  std::string text;
  TokenUsage usage;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Throws TransientError for retryable failures, RequestError otherwise.
  virtual ChatReply chat(const std::string& prompt, const BackendConfig& cfg) = 0;
  virtual TokenLogprobs logprobs(const std::string& text, const BackendConfig& /*cfg*/) {
    (void)text;
    throw CapabilityError(name() + " does not provide token log-probabilities");
  }
  virtual std::string name() const = 0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

struct CompletionResult {
  std::string text;
  TokenUsage usage;
  int attempts = 0;
  std::chrono::milliseconds latency{0};
};

// First successful reply, retrying TransientError with exponential backoff
// up to cfg.max_retries times.
inline CompletionResult complete(ChatBackend& backend, const std::string& turn_text, const BackendConfig& cfg,
                                 const Sleeper& sleep = real_sleeper()) {
  cfg.check();
  const auto start = std::chrono::steady_clock::now();
  std::string last_error;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    try {
      ChatReply reply = backend.chat(turn_text, cfg);
      CompletionResult out;
      out.text = std::move(reply.text);
      out.usage = reply.usage;
      out.attempts = attempt + 1;
      out.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
      return out;
    } catch (const TransientError& e) {
      last_error = e.what();
      if (attempt < cfg.max_retries) sleep(backoff_delay(cfg, attempt));
    }
  }
  throw TransportError(backend.name() + ": giving up after " + std::to_string(cfg.max_retries + 1) +
                       " attempt(s): " + last_error);
}

// Backend plus configuration, with a bound on concurrent in-flight requests.
class Gateway {
 public:
  static constexpr std::ptrdiff_t kDefaultMaxInFlight = 4;

  Gateway(std::shared_ptr<ChatBackend> backend, BackendConfig cfg, std::ptrdiff_t max_in_flight = kDefaultMaxInFlight,
          Sleeper sleep = real_sleeper())
      : backend_(std::move(backend)),
        cfg_(std::move(cfg)),
        slots_(std::max<std::ptrdiff_t>(1, std::min<std::ptrdiff_t>(max_in_flight, 1024))),
        sleep_(std::move(sleep)) {
    if (!backend_) throw ConfigError("gateway needs a backend");
    cfg_.check();
  }

  CompletionResult complete(const std::string& turn_text) {
    Slot slot(slots_);
    return morphgen::complete(*backend_, turn_text, cfg_, sleep_);
  }

  TokenLogprobs logprobs(const std::string& text) {
    if (text::trim(text).empty()) throw ValidationError("logprobs: text is empty");
    Slot slot(slots_);
    TokenLogprobs out = backend_->logprobs(text, cfg_);
    if (out.backend.empty()) out.backend = backend_->name() + ":" + cfg_.model_name;
    out.check();
    return out;
  }

  const BackendConfig& config() const { return cfg_; }
  ChatBackend& backend() { return *backend_; }

 private:
  struct Slot {
    explicit Slot(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
    ~Slot() { sem.release(); }
    std::counting_semaphore<1024>& sem;
  };

  std::shared_ptr<ChatBackend> backend_;
  BackendConfig cfg_;
  std::counting_semaphore<1024> slots_;
  Sleeper sleep_;
};

// ---------------------------------------------------------------------------
// Scripted mock

// Rules are tried in order; the first whose regex matches (search) the request
// text answers it. A rule with "times" stops matching after that many uses.
//
//   {"chat": [{"match": "Question type: QT1\\b", "reply": "..."},
//             {"match": ".*", "fail": "transient", "times": 2}],
//    "logprobs": [{"match": ".*", "token_logprob": -3.4}],
//    "grammar": [{"match": "\\bteh\\b", "rule": "TYPO"}]}
//
// A top-level array is shorthand for {"chat": [...]}.
class MockBackend : public ChatBackend {
 public:
  struct Rule {
    std::string pattern;
    std::regex re;
    std::string reply;
    std::optional<std::string> fail;  // "transient" | "request"
    int status = 0;
    std::optional<int> times;
    std::vector<double> logprobs;  // cycled over tokens
    std::string grammar_rule;
  };

  MockBackend() = default;

  static std::shared_ptr<MockBackend> from_json(const nlohmann::json& script) {
    auto holder = std::make_shared<MockBackend>();
    MockBackend& m = *holder;
    const nlohmann::json* chat = nullptr;
    if (script.is_array()) {
      chat = &script;
    } else if (script.is_object()) {
      if (script.contains("chat")) chat = &script["chat"];
      if (script.contains("logprobs")) {
        for (const auto& r : script["logprobs"]) {
          Rule rule = base_rule(r);
          if (r.contains("token_logprob")) rule.logprobs = {r["token_logprob"].get<double>()};
          if (r.contains("logprobs")) rule.logprobs = r["logprobs"].get<std::vector<double>>();
          if (rule.logprobs.empty()) throw ConfigError("mock logprob rule needs token_logprob or logprobs");
          m.logprob_rules_.push_back(std::move(rule));
        }
      }
      if (script.contains("grammar")) {
        for (const auto& r : script["grammar"]) {
          Rule rule = base_rule(r);
          rule.grammar_rule = r.value("rule", "MOCK_RULE");
          m.grammar_rules_.push_back(std::move(rule));
        }
      }
    } else {
      throw ConfigError("mock script must be a JSON object or array");
    }
    if (chat) {
      for (const auto& r : *chat) {
        Rule rule = base_rule(r);
        rule.reply = r.value("reply", "");
        if (r.contains("fail") && !r["fail"].is_null()) rule.fail = r["fail"].get<std::string>();
        rule.status = r.value("status", 0);
        if (rule.status >= 500 || rule.status == 429) rule.fail = "transient";
        if (rule.status >= 400 && rule.status < 500 && rule.status != 429) rule.fail = "request";
        m.chat_rules_.push_back(std::move(rule));
      }
    }
    return holder;
  }

  static std::shared_ptr<MockBackend> from_file(const std::string& path) {
    try {
      return from_json(nlohmann::json::parse(detail::read_file(path)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("mock script '" + path + "': " + e.what());
    }
  }

  void add_chat_rule(const std::string& pattern, const std::string& reply, std::optional<int> times = std::nullopt) {
    Rule r;
    r.pattern = pattern;
    r.re = std::regex(pattern);
    r.reply = reply;
    r.times = times;
    std::lock_guard lock(mu_);
    chat_rules_.push_back(std::move(r));
  }

  void add_failure(const std::string& pattern, int status, std::optional<int> times = std::nullopt) {
    Rule r;
    r.pattern = pattern;
    r.re = std::regex(pattern);
    r.status = status;
    r.fail = (status >= 500 || status == 429 || status == 0) ? "transient" : "request";
    r.times = times;
    std::lock_guard lock(mu_);
    chat_rules_.push_back(std::move(r));
  }

  void add_logprob_rule(const std::string& pattern, std::vector<double> values) {
    Rule r;
    r.pattern = pattern;
    r.re = std::regex(pattern);
    r.logprobs = std::move(values);
    std::lock_guard lock(mu_);
    logprob_rules_.push_back(std::move(r));
  }

  ChatReply chat(const std::string& prompt, const BackendConfig&) override {
    std::lock_guard lock(mu_);
    requests_.push_back(prompt);
    Rule* rule = match(chat_rules_, prompt);
    if (rule == nullptr) throw RequestError(404, "mock: no rule matches the request");
    if (rule->fail) {
      if (*rule->fail == "transient") {
        throw TransientError("mock: injected transient failure (status " + std::to_string(rule->status) + ")");
      }
      throw RequestError(rule->status ? rule->status : 400, "mock: injected request failure: " + rule->reply);
    }
    ChatReply out;
    out.text = rule->reply;
    out.usage.prompt_tokens = static_cast<int>(text::split(prompt, ' ').size());
    out.usage.completion_tokens = static_cast<int>(text::split(rule->reply, ' ').size());
    return out;
  }

  // Whitespace tokens with the matching rule's values cycled over them.
  TokenLogprobs logprobs(const std::string& input, const BackendConfig&) override {
    std::lock_guard lock(mu_);
    if (logprob_rules_.empty()) throw CapabilityError("mock backend has no logprob rules");
    Rule* rule = match(logprob_rules_, input);
    if (rule == nullptr) throw RequestError(404, "mock: no logprob rule matches the text");
    TokenLogprobs out;
    out.backend = "mock";
    std::istringstream ss(input);
    std::string tok;
    while (ss >> tok) {
      out.logprobs.push_back(rule->logprobs[out.tokens.size() % rule->logprobs.size()]);
      out.tokens.push_back(tok);
    }
    return out;
  }

  bool has_logprobs() const { return !logprob_rules_.empty(); }
  const std::vector<Rule>& grammar_rules() const { return grammar_rules_; }

  std::vector<std::string> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

  std::string name() const override { return "mock"; }

 private:
  static Rule base_rule(const nlohmann::json& r) {
    Rule rule;
    rule.pattern = r.value("match", ".*");
    try {
      rule.re = std::regex(rule.pattern);
    } catch (const std::regex_error& e) {
      throw ConfigError("mock rule has invalid regex '" + rule.pattern + "': " + e.what());
    }
    if (r.contains("times")) rule.times = r["times"].get<int>();
    return rule;
  }

  static Rule* match(std::vector<Rule>& rules, const std::string& input) {
    for (auto& r : rules) {
      if (r.times && *r.times <= 0) continue;
      if (std::regex_search(input, r.re)) {
        if (r.times) --*r.times;
        return &r;
      }
    }
    return nullptr;
  }

  mutable std::mutex mu_;
  std::vector<Rule> chat_rules_;
  std::vector<Rule> logprob_rules_;
  std::vector<Rule> grammar_rules_;
  std::vector<std::string> requests_;
};

// ---------------------------------------------------------------------------
// Plan execution

enum class TranscriptStatus { complete, aborted };

inline std::string to_string(TranscriptStatus s) { return s == TranscriptStatus::complete ? "complete" : "aborted"; }

struct Reply {
  std::string text;
  TokenUsage usage;
  std::chrono::milliseconds latency{0};
  int attempts = 0;
};

struct Transcript {
  PromptPlan plan;
  std::vector<std::string> sent;  // request texts exactly as sent
  std::vector<Reply> replies;
  TranscriptStatus status = TranscriptStatus::aborted;
  std::string error;

  const std::string& final_text() const {
    static const std::string empty;
    return replies.empty() ? empty : replies.back().text;
  }
};

// Append-only record sink, one JSON object per run_plan call.
class RunLog {
 public:
  void append(nlohmann::ordered_json record) {
    std::lock_guard lock(mu_);
    records_.push_back(std::move(record));
  }
  std::vector<nlohmann::ordered_json> records() const {
    std::lock_guard lock(mu_);
    return records_;
  }
  std::size_t size() const {
    std::lock_guard lock(mu_);
    return records_.size();
  }

 private:
  mutable std::mutex mu_;
  std::vector<nlohmann::ordered_json> records_;
};

// Runs the turns in order. Multi-step turns are bound from earlier replies.
// Any turn failure aborts the plan with the partial transcript kept.
inline Transcript run_plan(const PromptPlan& plan, Gateway& gateway, RunLog* log = nullptr,
                           const std::string& request_id = {}) {
  Transcript t;
  t.plan = plan;
  if (plan.turns.empty()) {
    t.error = "plan has no turns";
  } else {
    try {
      std::vector<std::string> so_far;
      for (std::size_t i = 0; i < plan.turns.size(); ++i) {
        std::string request = plan.multistep() ? bind_step_inputs(plan, so_far) : plan.turns[i].text;
        t.sent.push_back(request);
        CompletionResult r = gateway.complete(request);
        t.replies.push_back({r.text, r.usage, r.latency, r.attempts});
        so_far.push_back(std::move(r.text));
      }
      t.status = TranscriptStatus::complete;
    } catch (const Error& e) {
      t.error = e.what();
      t.status = TranscriptStatus::aborted;
    }
  }
  if (log) {
    nlohmann::ordered_json rec;
    rec["request_id"] = request_id;
    rec["strategy"] = to_string(plan.strategy);
    rec["qt"] = to_string(plan.qt);
    rec["template_version"] = plan.template_version;
    rec["model"] = gateway.config().model_name;
    rec["turns_planned"] = plan.turns.size();
    rec["turns_completed"] = t.replies.size();
    rec["status"] = to_string(t.status);
    rec["error"] = t.error;
    log->append(std::move(rec));
  }
  return t;
}

}  // namespace morphgen
