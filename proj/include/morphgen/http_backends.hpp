#pragma once

// HTTP backends:
//   OpenAiChatBackend   POST {endpoint}/chat/completions, logprobs via
//                       POST {endpoint}/completions with echo
//   LanguageToolGrammar POST {endpoint}/v2/check (form: text, language)
//   HttpParseBackend    POST {endpoint}/parse   {"text": ...} ->
//                       {"sentences": [{"tokens": [{"text","pos","head"}]}]}
//
// Including this header requires cpp-httplib (and OpenSSL for https).

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "morphgen/auto_metrics.hpp"
#include "morphgen/llm_gateway.hpp"

namespace morphgen {

struct HttpRequest {
  std::string url;
  std::multimap<std::string, std::string> headers;
  std::string body;
  std::string content_type;
  std::chrono::milliseconds timeout{60000};
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Throws TransientError on connection-level failure.
using HttpTransport = std::function<HttpResponse(const HttpRequest&)>;

namespace detail {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must be an absolute http(s) URL: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string join_url(std::string base, std::string_view suffix) {
  while (!base.empty() && base.back() == '/') base.pop_back();
  return base + std::string(suffix);
}

inline std::string excerpt(const std::string& body, std::size_t n = 200) {
  return body.size() <= n ? body : body.substr(0, n) + "...";
}

// 408, 429 and 5xx are retryable; other non-2xx statuses are not.
inline void raise_for_status(const HttpResponse& r, const std::string& who) {
  if (r.status >= 200 && r.status < 300) return;
  const std::string msg = who + ": HTTP " + std::to_string(r.status) + ": " + excerpt(r.body);
  if (r.status == 408 || r.status == 429 || r.status >= 500) throw TransientError(msg);
  throw RequestError(r.status, msg);
}

inline nlohmann::json parse_body(const HttpResponse& r, const std::string& who) {
  try {
    return nlohmann::json::parse(r.body);
  } catch (const nlohmann::json::exception&) {
    throw TransientError(who + ": response is not JSON: " + excerpt(r.body));
  }
}

}  // namespace detail

inline HttpTransport httplib_transport() {
  return [](const HttpRequest& req) {
    auto parts = detail::split_url(req.url);
    httplib::Client cli(parts.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(req.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(req.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers(req.headers.begin(), req.headers.end());
    auto res = cli.Post(parts.path, headers, req.body, req.content_type);
    if (!res) throw TransientError("transport: " + httplib::to_string(res.error()) + " (" + req.url + ")");
    return HttpResponse{res->status, res->body};
  };
}

// Chat-completions style server (hosted APIs, vLLM, llama.cpp server, ...).
class OpenAiChatBackend : public ChatBackend {
 public:
  explicit OpenAiChatBackend(HttpTransport transport = httplib_transport()) : transport_(std::move(transport)) {}

  ChatReply chat(const std::string& prompt, const BackendConfig& cfg) override {
    nlohmann::json body = {{"model", cfg.model_name},
                           {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
                           {"temperature", cfg.temperature},
                           {"max_tokens", cfg.max_tokens}};
    auto res = post(cfg, "/chat/completions", body);
    detail::raise_for_status(res, name());
    auto j = detail::parse_body(res, name());
    ChatReply out;
    try {
      const auto& msg = j.at("choices").at(0).at("message");
      out.text = msg.at("content").is_null() ? std::string() : msg.at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw TransientError(name() + ": reply lacks choices[0].message.content: " + detail::excerpt(res.body));
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      out.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      out.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    return out;
  }

  // Prompt log-probabilities via an echoing legacy completions call. Servers
  // without that endpoint or field raise CapabilityError.
  TokenLogprobs logprobs(const std::string& input, const BackendConfig& cfg) override {
    nlohmann::json body = {{"model", cfg.model_name}, {"prompt", input}, {"echo", true},
                           {"max_tokens", 1},          {"logprobs", 0},   {"temperature", 0}};
    auto res = post(cfg, "/completions", body);
    if (res.status == 404 || res.status == 501) {
      throw CapabilityError(name() + ": endpoint has no /completions logprobs support");
    }
    detail::raise_for_status(res, name());
    auto j = detail::parse_body(res, name());
    const nlohmann::json* lp = nullptr;
    try {
      lp = &j.at("choices").at(0).at("logprobs");
    } catch (const nlohmann::json::exception&) {
    }
    if (lp == nullptr || lp->is_null() || !lp->contains("tokens") || !lp->contains("token_logprobs")) {
      throw CapabilityError(name() + ": reply carries no token log-probabilities");
    }
    const auto& toks = (*lp)["tokens"];
    const auto& vals = (*lp)["token_logprobs"];
    const bool have_offsets = lp->contains("text_offset");
    TokenLogprobs out;
    out.backend = cfg.model_name;
    for (std::size_t i = 0; i < toks.size() && i < vals.size(); ++i) {
      // keep echoed prompt tokens only; the first has no conditional probability
      if (have_offsets && (*lp)["text_offset"][i].get<long long>() >= static_cast<long long>(input.size())) break;
      if (vals[i].is_null()) continue;
      out.tokens.push_back(toks[i].get<std::string>());
      out.logprobs.push_back(std::min(0.0, vals[i].get<double>()));
    }
    if (out.tokens.empty()) throw CapabilityError(name() + ": no scored prompt tokens returned");
    return out;
  }

  std::string name() const override { return "openai-compatible"; }

 private:
  HttpResponse post(const BackendConfig& cfg, std::string_view path, const nlohmann::json& body) {
    HttpRequest req;
    req.url = detail::join_url(cfg.endpoint, path);
    req.body = body.dump();
    req.content_type = "application/json";
    req.timeout = cfg.timeout;
    const std::string key = cfg.credential();
    if (!key.empty()) req.headers.emplace("Authorization", "Bearer " + key);
    return transport_(req);
  }

  HttpTransport transport_;
};

inline std::string form_encode(const std::vector<std::pair<std::string, std::string>>& fields) {
  std::string out;
  for (const auto& [k, v] : fields) {
    if (!out.empty()) out += '&';
    out += httplib::detail::encode_query_param(k) + "=" + httplib::detail::encode_query_param(v);
  }
  return out;
}

// Grammar-check server speaking the LanguageTool /v2/check protocol.
class LanguageToolGrammar : public GrammarBackend {
 public:
  LanguageToolGrammar(std::string endpoint, std::string language = "en-US",
                      std::chrono::milliseconds timeout = std::chrono::milliseconds(30000),
                      HttpTransport transport = httplib_transport())
      : endpoint_(std::move(endpoint)), language_(std::move(language)), timeout_(timeout),
        transport_(std::move(transport)) {}

  std::vector<GrammarMatch> check(const std::string& s) override {
    HttpRequest req;
    req.url = detail::join_url(endpoint_, "/v2/check");
    req.body = form_encode({{"text", s}, {"language", language_}});
    req.content_type = "application/x-www-form-urlencoded";
    req.timeout = timeout_;
    auto res = transport_(req);
    detail::raise_for_status(res, name());
    auto j = detail::parse_body(res, name());
    std::vector<GrammarMatch> out;
    for (const auto& m : j.value("matches", nlohmann::json::array())) {
      GrammarMatch g;
      g.offset = m.value("offset", 0);
      g.length = m.value("length", 0);
      g.message = m.value("message", "");
      if (m.contains("rule") && m["rule"].is_object()) g.rule = m["rule"].value("id", "");
      out.push_back(std::move(g));
    }
    return out;
  }

  std::string name() const override { return "languagetool"; }

 private:
  std::string endpoint_;
  std::string language_;
  std::chrono::milliseconds timeout_;
  HttpTransport transport_;
};

// Dependency parser behind a small JSON service; head is a 0-based index or -1.
class HttpParseBackend : public ParseBackend {
 public:
  explicit HttpParseBackend(std::string endpoint, std::chrono::milliseconds timeout = std::chrono::milliseconds(30000),
                            HttpTransport transport = httplib_transport())
      : endpoint_(std::move(endpoint)), timeout_(timeout), transport_(std::move(transport)) {}

  ParseOutput parse(const std::string& s) override {
    HttpRequest req;
    req.url = detail::join_url(endpoint_, "/parse");
    req.body = nlohmann::json{{"text", s}}.dump();
    req.content_type = "application/json";
    req.timeout = timeout_;
    auto res = transport_(req);
    detail::raise_for_status(res, name());
    auto j = detail::parse_body(res, name());
    ParseOutput out;
    try {
      for (const auto& sent : j.at("sentences")) {
        ParsedSentence ps;
        for (const auto& t : sent.at("tokens")) {
          ps.tokens.push_back({t.at("text").get<std::string>(), t.value("pos", ""), t.at("head").get<int>()});
        }
        out.sentences.push_back(std::move(ps));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(name() + ": malformed parse reply: " + e.what());
    }
    return out;
  }

  std::string name() const override { return "http-parser"; }

 private:
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
  HttpTransport transport_;
};

}  // namespace morphgen
